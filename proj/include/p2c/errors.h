#ifndef P2C_ERRORS_H_
#define P2C_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace p2c {

// Base of every error thrown by the library. `code()` is the stable
// identifier used on the wire by the service protocol.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message)
      : Error("domain", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error("config", message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message)
      : Error("format", message) {}
};

// Raw pinyin letters that cannot be split into known units.
class UnsegmentableError : public Error {
 public:
  UnsegmentableError(const std::string& input, std::size_t offset)
      : Error("unsegmentable",
              "cannot segment '" + input + "' at offset " +
                  std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class AnnotationError : public Error {
 public:
  AnnotationError(const std::string& message, std::string missing)
      : Error("annotation", message), missing_(std::move(missing)) {}

  // The characters that had no dictionary reading.
  const std::string& missing() const { return missing_; }

 private:
  std::string missing_;
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message)
      : Error("training", message) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message)
      : Error("not_found", message) {}
};

class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& message)
      : Error("unsupported", message) {}
};

// A malformed service request: bad JSON, missing or mistyped fields.
class RequestError : public Error {
 public:
  explicit RequestError(const std::string& message)
      : Error("bad_request", message) {}
};

}  // namespace p2c

#endif  // P2C_ERRORS_H_
