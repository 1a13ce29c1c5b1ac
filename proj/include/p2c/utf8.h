#ifndef P2C_UTF8_H_
#define P2C_UTF8_H_

#include <string>
#include <string_view>
#include <vector>

namespace p2c {

// Splits UTF-8 text into one string per code point. Throws FormatError on
// malformed input.
std::vector<std::string> split_utf8(std::string_view text);

// Splits on ASCII whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace p2c

#endif  // P2C_UTF8_H_
