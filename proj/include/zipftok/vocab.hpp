#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zipftok/errors.hpp"
#include "zipftok/utf8.hpp"

namespace zipftok::tok {

using TokenId = std::uint32_t;

enum class Algorithm { Bpe, WordPiece, Unigram };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Bpe: return "bpe";
    case Algorithm::WordPiece: return "wordpiece";
    case Algorithm::Unigram: return "unigram";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "bpe") return Algorithm::Bpe;
  if (s == "wordpiece") return Algorithm::WordPiece;
  if (s == "unigram") return Algorithm::Unigram;
  throw ParameterError("unknown algorithm '" + std::string(s) + "'");
}

/// Merge boundary: Document lets merges cross whitespace, Word never merges
/// a whitespace symbol with anything.
enum class Boundary { Document, Word };

inline std::string_view to_string(Boundary b) { return b == Boundary::Document ? "document" : "word"; }

inline Boundary parse_boundary(std::string_view s) {
  if (s == "document") return Boundary::Document;
  if (s == "word") return Boundary::Word;
  throw ParameterError("unknown boundary mode '" + std::string(s) + "'");
}

/// Default used when the caller does not choose: word boundaries up to
/// 100,000 entries, cross-word merges above.
inline Boundary default_boundary(std::size_t target_size) {
  return target_size > 100'000 ? Boundary::Document : Boundary::Word;
}

struct VocabEntry {
  TokenId token_id = 0;
  std::string surface;
  std::uint32_t char_length = 0;
  // Final pair-merge count for BPE/WordPiece, expected count for Unigram.
  double train_frequency = 0;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(Algorithm algorithm, std::size_t target_size) : algorithm_(algorithm), target_size_(target_size) {}

  Algorithm algorithm() const noexcept { return algorithm_; }
  std::size_t target_size() const noexcept { return target_size_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const std::vector<VocabEntry>& entries() const noexcept { return entries_; }
  const VocabEntry& operator[](TokenId id) const { return entries_.at(id); }

  /// Appends a token; ids are assigned densely in insertion order.
  TokenId add(std::string surface, double train_frequency = 0) {
    if (surface.empty()) throw ConsistencyError("empty token surface");
    const auto id = static_cast<TokenId>(entries_.size());
    auto [it, inserted] = index_.emplace(surface, id);
    if (!inserted) throw ConsistencyError("duplicate token surface '" + surface + "'");
    const auto len = static_cast<std::uint32_t>(utf8::length(surface));
    entries_.push_back({id, std::move(surface), len, train_frequency});
    return id;
  }

  void set_frequency(TokenId id, double f) { entries_.at(id).train_frequency = f; }

  const TokenId* find(std::string_view surface) const {
    auto it = index_.find(std::string(surface));
    return it == index_.end() ? nullptr : &it->second;
  }

  std::size_t max_char_length() const noexcept {
    std::size_t m = 0;
    for (const auto& e : entries_) m = std::max<std::size_t>(m, e.char_length);
    return m;
  }

  /// Unigram piece probability; for other algorithms the normalized training count.
  double probability(TokenId id) const {
    double total = 0;
    for (const auto& e : entries_) total += e.train_frequency;
    return total > 0 ? entries_.at(id).train_frequency / total : 0.0;
  }

 private:
  Algorithm algorithm_ = Algorithm::Bpe;
  std::size_t target_size_ = 0;
  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Merge {
  std::string left;
  std::string right;

  friend bool operator==(const Merge&, const Merge&) = default;
};

using MergeTable = std::vector<Merge>;

// ---- TSV serialization -----------------------------------------------------

inline std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_field(std::string_view s, std::size_t line) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (++i == s.size()) throw ParseError("dangling backslash escape", line);
    switch (s[i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case '\\': out.push_back('\\'); break;
      default: throw ParseError(std::string("unknown escape \\") + s[i], line);
    }
  }
  return out;
}

/// Shortest round-trip decimal; integral values print without a fraction.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline constexpr std::string_view kVocabHeader = "token_id\tsurface\tchar_length\tfrequency";

inline void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  out << kVocabHeader << '\n';
  for (const auto& e : vocab.entries()) {
    out << e.token_id << '\t' << escape_field(e.surface) << '\t' << e.char_length << '\t'
        << format_number(e.train_frequency) << '\n';
  }
}

inline void write_merges(std::ostream& out, const MergeTable& merges) {
  for (const auto& m : merges) out << escape_field(m.left) << '\t' << escape_field(m.right) << '\n';
}

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

template <class T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(s) + "'", line);
  }
  return value;
}

}  // namespace detail

inline Vocabulary read_vocabulary(std::istream& in, Algorithm algorithm) {
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader) throw ParseError("missing vocabulary header", 1);
  Vocabulary vocab(algorithm, 0);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    if (f.size() != 4) throw ParseError("expected 4 tab-separated fields", lineno);
    const auto id = detail::parse_number<TokenId>(f[0], lineno, "token_id");
    if (id != vocab.size()) throw ParseError("token ids must be dense and ordered", lineno);
    const auto freq = detail::parse_number<double>(f[3], lineno, "frequency");
    try {
      vocab.add(unescape_field(f[1], lineno), freq);
    } catch (const ConsistencyError& e) {
      throw ParseError(e.what(), lineno);
    }
    if (vocab[id].char_length != detail::parse_number<std::uint32_t>(f[2], lineno, "char_length")) {
      throw ParseError("char_length does not match surface", lineno);
    }
  }
  return Vocabulary(std::move(vocab));
}

inline MergeTable read_merges(std::istream& in) {
  MergeTable merges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    if (f.size() != 2) throw ParseError("expected 'left<TAB>right'", lineno);
    merges.push_back({unescape_field(f[0], lineno), unescape_field(f[1], lineno)});
  }
  return merges;
}

inline Vocabulary load_vocabulary(const std::string& path, Algorithm algorithm, std::size_t target_size = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary '" + path + "'");
  Vocabulary v = read_vocabulary(in, algorithm);
  if (target_size == 0) target_size = v.size();
  Vocabulary out(algorithm, target_size);
  for (const auto& e : v.entries()) out.add(e.surface, e.train_frequency);
  return out;
}

inline MergeTable load_merges(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open merge table '" + path + "'");
  return read_merges(in);
}

}  // namespace zipftok::tok
