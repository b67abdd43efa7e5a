#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "zipftok/csv.hpp"
#include "zipftok/errors.hpp"
#include "zipftok/utf8.hpp"

namespace zipftok::poll {

struct PollRecord {
  std::string respondent_id;
  std::string token_surface;
  bool can_reformulate = false;
  std::optional<std::string> restatement;
  std::uint32_t meanings_count = 0;
  std::optional<std::string> contextualization;
  // Context present but not containing the token verbatim.
  bool context_modified = false;
};

struct LoadedPoll {
  std::vector<PollRecord> records;
  std::vector<std::string> warnings;
};

inline constexpr const char* kPollColumns[] = {"respondent_id", "token", "can_reformulate", "restatement", "meanings", "context"};

namespace detail {

inline bool parse_bool(const std::string& s, std::size_t row) {
  std::string l;
  for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (l == "true" || l == "yes" || l == "1" || l == "y") return true;
  if (l == "false" || l == "no" || l == "0" || l == "n") return false;
  throw ValidationError("can_reformulate", "expected a boolean, got '" + s + "'", row);
}

}  // namespace detail

/// Reads and validates poll records. Rows are numbered from 1 after the header.
inline LoadedPoll read_poll(std::istream& in) {
  csv::Reader reader(in);
  std::vector<std::string> f;
  LoadedPoll out;
  if (!reader.next(f)) return out;
  if (f.size() != std::size(kPollColumns) || !std::equal(f.begin(), f.end(), std::begin(kPollColumns))) {
    throw ParseError("expected header respondent_id,token,can_reformulate,restatement,meanings,context", reader.line());
  }
  std::size_t row = 0;
  while (reader.next(f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    ++row;
    if (f.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(f.size()), reader.line());
    PollRecord r;
    r.respondent_id = f[0];
    if (r.respondent_id.empty()) throw ValidationError("respondent_id", "must not be empty", row);
    r.token_surface = f[1];
    if (r.token_surface.empty()) throw ValidationError("token", "must not be empty", row);
    for (std::size_t i : {1, 3, 5}) {
      if (!utf8::valid(f[i])) throw ValidationError(kPollColumns[i], "invalid UTF-8", row);
    }
    r.can_reformulate = detail::parse_bool(f[2], row);
    if (!f[3].empty()) r.restatement = f[3];
    if (!r.can_reformulate && r.restatement) {
      throw ValidationError("restatement", "present although can_reformulate is false", row);
    }
    std::uint32_t meanings = 0;
    const auto [ptr, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), meanings);
    if (f[4].empty() || ec != std::errc() || ptr != f[4].data() + f[4].size()) {
      throw ValidationError("meanings", "expected a non-negative integer, got '" + f[4] + "'", row);
    }
    r.meanings_count = meanings;
    if (!f[5].empty()) {
      r.contextualization = f[5];
      if (f[5].find(r.token_surface) == std::string::npos) {
        r.context_modified = true;
        out.warnings.push_back("row " + std::to_string(row) + ": context does not contain the token verbatim; treated as modified");
      }
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

inline LoadedPoll load_poll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open poll file '" + path + "'");
  return read_poll(in);
}

/// Character-level (Unicode scalar) edit distance with unit costs.
inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8::decode(a), utf8::decode(b));
}

/// Edit distance over the longer length; ("", "") is 0.
inline double normalized_levenshtein(std::string_view a, std::string_view b) {
  const auto ua = utf8::decode(a), ub = utf8::decode(b);
  const std::size_t m = std::max(ua.size(), ub.size());
  if (m == 0) return 0.0;
  return static_cast<double>(levenshtein(ua, ub)) / static_cast<double>(m);
}

/// Width-1 bins up to `fine_limit`, then bins of `coarse_width`. A bin is
/// labelled by its smallest length.
struct Binning {
  std::uint32_t width = 1;
  std::uint32_t fine_limit = 40;
  std::uint32_t coarse_width = 5;

  std::uint32_t bin(std::uint32_t length) const noexcept {
    if (length <= fine_limit) return length - (length == 0 ? 0 : (length - 1) % width);
    return fine_limit + 1 + ((length - fine_limit - 1) / coarse_width) * coarse_width;
  }
};

struct BinValue {
  double mean = 0;
  std::uint64_t count = 0;
};

struct LengthBinnedStat {
  std::map<std::uint32_t, BinValue> bins;
  Binning binning;
};

namespace detail {

class BinAccumulator {
 public:
  explicit BinAccumulator(Binning b) : binning_(b) {}

  void add(std::string_view token, double value) {
    auto& [sum, count] = acc_[binning_.bin(static_cast<std::uint32_t>(utf8::length(token)))];
    sum += value;
    ++count;
  }

  LengthBinnedStat finish() const {
    LengthBinnedStat s;
    s.binning = binning_;
    for (const auto& [bin, a] : acc_) s.bins[bin] = {a.first / static_cast<double>(a.second), a.second};
    return s;
  }

 private:
  Binning binning_;
  std::map<std::uint32_t, std::pair<double, std::uint64_t>> acc_;
};

}  // namespace detail

struct MeaningsAnalysis {
  LengthBinnedStat mean_meanings;
  // (length bin, meanings) -> number of records
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> heatmap;
};

inline MeaningsAnalysis length_vs_meanings(const std::vector<PollRecord>& records, Binning binning = {}) {
  detail::BinAccumulator acc(binning);
  MeaningsAnalysis out;
  for (const auto& r : records) {
    acc.add(r.token_surface, r.meanings_count);
    ++out.heatmap[{binning.bin(static_cast<std::uint32_t>(utf8::length(r.token_surface))), r.meanings_count}];
  }
  out.mean_meanings = acc.finish();
  return out;
}

/// Mean edit distance between token and restatement, records with a restatement only.
inline LengthBinnedStat restatement_distance(const std::vector<PollRecord>& records, Binning binning = {}) {
  detail::BinAccumulator acc(binning);
  for (const auto& r : records) {
    if (r.restatement) acc.add(r.token_surface, static_cast<double>(levenshtein(r.token_surface, *r.restatement)));
  }
  return acc.finish();
}

/// Fraction of records whose token was placed into a context.
inline LengthBinnedStat contextualization_rate(const std::vector<PollRecord>& records, Binning binning = {}) {
  detail::BinAccumulator acc(binning);
  for (const auto& r : records) acc.add(r.token_surface, r.contextualization ? 1.0 : 0.0);
  return acc.finish();
}

/// Mean normalized edit distance between token and its context.
inline LengthBinnedStat context_distance(const std::vector<PollRecord>& records, Binning binning = {}) {
  detail::BinAccumulator acc(binning);
  for (const auto& r : records) {
    if (r.contextualization) acc.add(r.token_surface, normalized_levenshtein(r.token_surface, *r.contextualization));
  }
  return acc.finish();
}

inline void write_binned_csv(std::ostream& out, const LengthBinnedStat& s) {
  out << "length_bin,value,count\n";
  out.precision(17);
  for (const auto& [bin, v] : s.bins) out << bin << ',' << v.mean << ',' << v.count << '\n';
}

inline void write_heatmap_csv(std::ostream& out, const MeaningsAnalysis& m) {
  out << "length_bin,meanings,count\n";
  for (const auto& [key, c] : m.heatmap) out << key.first << ',' << key.second << ',' << c << '\n';
}

}  // namespace zipftok::poll
