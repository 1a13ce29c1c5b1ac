#ifndef P2C_TENSOR_H_
#define P2C_TENSOR_H_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace p2c {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// A dense row-major array of doubles with an optional gradient buffer.
//
// Tensor is a handle: copies share storage. Parameters live as long as the
// model that owns them; intermediate values live as long as the Graph that
// recorded them (or any handle the caller keeps).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  explicit operator bool() const { return data_ != nullptr; }

  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t size() const { return data_->values.size(); }
  std::size_t dim(std::size_t axis) const { return data_->shape.at(axis); }

  std::span<const double> values() const { return data_->values; }
  std::span<double> mutable_values() { return data_->values; }
  double at(std::size_t i) const { return data_->values.at(i); }
  double at(std::size_t r, std::size_t c) const;
  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }

  bool has_grad() const { return !data_->grad.empty(); }
  std::span<const double> grad() const { return data_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  // Deep copy, detached from any graph.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  friend class Graph;

  struct Data {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Data> data) : data_(std::move(data)) {}

  // Allocates the gradient buffer (zero-filled) if missing.
  std::vector<double>& grad_buffer() const;

  std::shared_ptr<Data> data_;
};

}  // namespace p2c

#endif  // P2C_TENSOR_H_
