#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zipftok {

// Every library error derives from Error so callers can catch one type. The
// CLI maps the concrete type to an exit code (2 usage, 3 I/O, 4 computation).

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t byte_offset)
      : Error(what + " at byte offset " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class EncodingError : public Error {
 public:
  EncodingError(char32_t symbol, std::size_t offset)
      : Error("symbol U+" + hex(symbol) + " at character offset " + std::to_string(offset) +
              " is not in the training alphabet"),
        symbol_(symbol),
        offset_(offset) {}

  char32_t symbol() const noexcept { return symbol_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  static std::string hex(char32_t c) {
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string s;
    for (int shift = 20; shift >= 0; shift -= 4) {
      const auto d = (static_cast<unsigned>(c) >> shift) & 0xFu;
      if (!s.empty() || d != 0 || shift <= 12) s.push_back(digits[d]);
    }
    return s;
  }

  char32_t symbol_;
  std::size_t offset_;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& what, std::size_t row)
      : Error("row " + std::to_string(row) + ", field '" + field + "': " + what),
        field_(field),
        row_(row) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::string field_;
  std::size_t row_;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace zipftok
