#pragma once

#include <istream>
#include <string>
#include <vector>

#include "zipftok/errors.hpp"

namespace zipftok::csv {

/// RFC 4180 record reader: quoted fields may hold commas, doubled quotes and
/// line breaks; CRLF and LF both end a record.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record; false at end of input. line() is the line on
  /// which the record started.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    record_line_ = ++line_;
    std::string field;
    bool quoted = false, was_quoted = false;
    for (;; c = in_.get()) {
      if (quoted) {
        if (c == EOF) throw ParseError("unterminated quoted field", record_line_);
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == '"') {
        if (!field.empty() || was_quoted) throw ParseError("quote inside unquoted field", line_);
        quoted = was_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (c == '\r' && in_.peek() == '\n') {
        continue;
      } else if (c == '\n' || c == EOF) {
        fields.push_back(std::move(field));
        return true;
      } else {
        if (was_quoted) throw ParseError("characters after closing quote", line_);
        field.push_back(static_cast<char>(c));
      }
    }
  }

  std::size_t line() const noexcept { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace zipftok::csv
