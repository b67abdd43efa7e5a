#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <unicode/bytestream.h>
#include <unicode/normalizer2.h>
#include <unicode/stringpiece.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>

#include "zipftok/errors.hpp"
#include "zipftok/utf8.hpp"

namespace zipftok::corpus {

struct Document {
  std::uint64_t doc_id = 0;
  std::string text;  // UTF-8
};

enum class Format { PlainLines, WikitextMarkup };

inline Format parse_format(std::string_view name) {
  if (name == "plain-lines" || name == "plain") return Format::PlainLines;
  if (name == "wikitext-markup" || name == "wikitext") return Format::WikitextMarkup;
  throw ParameterError("unknown corpus format '" + std::string(name) + "'");
}

struct NormalizationPolicy {
  bool lowercase = false;
};

/// NFC composition, optional lowercasing, then every run of horizontal
/// whitespace becomes one U+0020. Newlines are kept. Idempotent.
inline std::string normalize(std::string_view text, const NormalizationPolicy& policy = {}) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");

  std::string composed;
  if (policy.lowercase) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), text.size()));
    u.toLower(icu::Locale::getRoot());
    u = nfc->normalize(u, status);
    u.toUTF8String(composed);
  } else {
    const icu::StringPiece piece(text.data(), static_cast<int32_t>(text.size()));
    if (nfc->isNormalizedUTF8(piece, status) && U_SUCCESS(status)) {
      composed.assign(text);
    } else {
      status = U_ZERO_ERROR;
      icu::StringByteSink<std::string> sink(&composed);
      nfc->normalizeUTF8(0, piece, sink, nullptr, status);
    }
  }
  if (U_FAILURE(status)) throw Error("ICU normalization failed");

  std::string out;
  out.reserve(composed.size());
  std::size_t pos = 0;
  bool in_space = false;
  while (pos < composed.size()) {
    const std::size_t start = pos;
    const auto cp = utf8::next(composed, pos);
    if (!cp) {  // ICU emits U+FFFD for ill-formed input, so this is unreachable in practice
      ++pos;
      continue;
    }
    if (utf8::is_horizontal_space(*cp)) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.append(composed, start, pos - start);
      in_space = false;
    }
  }
  return out;
}

template <class S>
concept DocumentSource = requires(S& s, Document& d) {
  { s.next(d) } -> std::convertible_to<bool>;
};

struct ReaderOptions {
  NormalizationPolicy policy{};
  bool keep_headings = false;
};

/// Streams documents from a UTF-8 file without holding more than one
/// document in memory.
class CorpusReader {
 public:
  CorpusReader(const std::string& path, Format format, ReaderOptions options = {})
      : in_(std::make_unique<std::ifstream>(path, std::ios::binary)),
        path_(path),
        format_(format),
        options_(options) {
    if (!*in_) throw IoError("cannot open corpus '" + path + "'");
  }

  bool next(Document& doc) {
    std::string text;
    while (format_ == Format::PlainLines ? next_line_document(text) : next_wikitext_block(text)) {
      text = normalize(text, options_.policy);
      trim(text);
      if (text.empty()) continue;
      doc.doc_id = next_id_++;
      doc.text = std::move(text);
      return true;
    }
    return false;
  }

  const std::string& path() const noexcept { return path_; }

 private:
  static void trim(std::string& s) {
    const auto first = s.find_first_not_of(" \n");
    if (first == std::string::npos) {
      s.clear();
      return;
    }
    const auto last = s.find_last_not_of(" \n");
    s = s.substr(first, last - first + 1);
  }

  // Reads one physical line, validates it and strips the line terminator.
  bool read_line(std::string& line) {
    if (!std::getline(*in_, line)) {
      if (in_->bad()) throw IoError("read failure on '" + path_ + "'");
      return false;
    }
    const std::size_t line_offset = offset_;
    offset_ += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t pos = 0;
    while (pos < line.size()) {
      if (!utf8::next(line, pos)) throw DecodeError("invalid UTF-8 in '" + path_ + "'", line_offset + pos);
    }
    return true;
  }

  bool next_line_document(std::string& text) { return read_line(text); }

  static bool is_heading(std::string_view line) {
    const auto first = line.find_first_not_of(' ');
    const auto last = line.find_last_not_of(' ');
    if (first == std::string_view::npos || last <= first) return false;
    return line[first] == '=' && line[last] == '=';
  }

  static bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t") == std::string_view::npos;
  }

  // A block is a maximal run of non-blank, non-heading lines. Heading lines
  // end the current block; with keep_headings they become documents.
  bool next_wikitext_block(std::string& text) {
    text.clear();
    if (pending_heading_) {
      text = std::move(*pending_heading_);
      pending_heading_.reset();
      return true;
    }
    std::string line;
    bool have = false;
    while (read_line(line)) {
      if (is_heading(line)) {
        if (options_.keep_headings) {
          const auto first = line.find_first_not_of("= ");
          const auto last = line.find_last_not_of("= ");
          std::string title = first == std::string::npos ? std::string() : line.substr(first, last - first + 1);
          if (have) {
            pending_heading_ = std::move(title);
            return true;
          }
          text = std::move(title);
          return true;
        }
        if (have) return true;
        continue;
      }
      if (is_blank(line)) {
        if (have) return true;
        continue;
      }
      if (have) text.push_back('\n');
      const auto first = line.find_first_not_of(" \t");
      text.append(line, first, line.find_last_not_of(" \t") - first + 1);
      have = true;
    }
    return have;
  }

  std::unique_ptr<std::ifstream> in_;
  std::string path_;
  Format format_;
  ReaderOptions options_;
  std::size_t offset_ = 0;
  std::uint64_t next_id_ = 0;
  std::optional<std::string> pending_heading_;
};

inline CorpusReader open_corpus(const std::string& path, Format format, ReaderOptions options = {}) {
  return CorpusReader(path, format, options);
}

/// In-memory source over pre-split document texts. Texts are normalized with
/// the given policy; empty documents are skipped like the file reader does.
class VectorSource {
 public:
  explicit VectorSource(std::vector<std::string> texts, NormalizationPolicy policy = {})
      : texts_(std::move(texts)), policy_(policy) {}

  bool next(Document& doc) {
    while (index_ < texts_.size()) {
      std::string text = normalize(texts_[index_++], policy_);
      if (text.empty()) continue;
      doc.doc_id = next_id_++;
      doc.text = std::move(text);
      return true;
    }
    return false;
  }

 private:
  std::vector<std::string> texts_;
  NormalizationPolicy policy_;
  std::size_t index_ = 0;
  std::uint64_t next_id_ = 0;
};

struct CorpusStats {
  std::uint64_t doc_count = 0;
  std::uint64_t char_count = 0;
  std::uint64_t distinct_symbol_count = 0;

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

template <DocumentSource Source>
CorpusStats corpus_stats(Source& source) {
  CorpusStats stats;
  std::vector<bool> seen(0x110000, false);
  Document doc;
  while (source.next(doc)) {
    ++stats.doc_count;
    std::size_t pos = 0;
    while (pos < doc.text.size()) {
      const auto cp = utf8::next(doc.text, pos);
      if (!cp) throw DecodeError("invalid UTF-8 in document " + std::to_string(doc.doc_id), pos);
      ++stats.char_count;
      if (!seen[*cp]) {
        seen[*cp] = true;
        ++stats.distinct_symbol_count;
      }
    }
  }
  return stats;
}

}  // namespace zipftok::corpus
