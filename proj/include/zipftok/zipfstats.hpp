#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "zipftok/errors.hpp"
#include "zipftok/vocab.hpp"

namespace zipftok::stats {

using tok::TokenId;

struct RankRow {
  std::uint64_t rank = 0;
  TokenId token_id = 0;
  std::uint64_t frequency = 0;

  friend bool operator==(const RankRow&, const RankRow&) = default;
};

/// Rows ordered by non-increasing frequency, ranks 1..N, ties by token id.
class RankFrequencyTable {
 public:
  RankFrequencyTable() = default;

  /// Validates the ordering invariants.
  static RankFrequencyTable from_rows(std::vector<RankRow> rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].rank != i + 1) throw ConsistencyError("ranks must be 1..N consecutive");
      if (i > 0) {
        const auto& a = rows[i - 1];
        const auto& b = rows[i];
        if (b.frequency > a.frequency || (b.frequency == a.frequency && b.token_id <= a.token_id)) {
          throw ConsistencyError("rows not ordered by frequency then token id at rank " + std::to_string(b.rank));
        }
      }
    }
    RankFrequencyTable t;
    t.rows_ = std::move(rows);
    return t;
  }

  const std::vector<RankRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const RankRow& at_rank(std::uint64_t rank) const { return rows_.at(rank - 1); }

  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (const auto& r : rows_) t += r.frequency;
    return t;
  }

  /// Number of leading rows with positive frequency.
  std::size_t positive_size() const noexcept {
    std::size_t n = 0;
    while (n < rows_.size() && rows_[n].frequency > 0) ++n;
    return n;
  }

 private:
  std::vector<RankRow> rows_;
};

/// Sorts token counts into a rank-frequency table, dropping tokens whose
/// count is below min_count. min_count 0 keeps unseen tokens at the end.
inline RankFrequencyTable rank_frequency(const std::map<TokenId, std::uint64_t>& freqs, std::uint64_t min_count = 1) {
  std::vector<RankRow> rows;
  for (const auto& [id, f] : freqs) {
    if (f >= min_count) rows.push_back({0, id, f});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RankRow& a, const RankRow& b) { return a.frequency > b.frequency; });
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
  return RankFrequencyTable::from_rows(std::move(rows));
}

/// Dense overload: freqs[id] is the count of token id.
inline RankFrequencyTable rank_frequency(const std::vector<std::uint64_t>& freqs, std::uint64_t min_count = 1) {
  std::vector<RankRow> rows;
  for (std::size_t id = 0; id < freqs.size(); ++id) {
    if (freqs[id] >= min_count) rows.push_back({0, static_cast<TokenId>(id), freqs[id]});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RankRow& a, const RankRow& b) { return a.frequency > b.frequency; });
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
  return RankFrequencyTable::from_rows(std::move(rows));
}

enum class Weighting { ByType, ByOccurrence };

inline Weighting parse_weighting(const std::string& s) {
  if (s == "by-type") return Weighting::ByType;
  if (s == "by-occurrence") return Weighting::ByOccurrence;
  throw ParameterError("unknown weighting '" + s + "'");
}

struct LengthHistogram {
  std::map<std::uint32_t, std::uint64_t> counts;  // char_length -> count
  Weighting weighting = Weighting::ByType;

  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (const auto& [len, c] : counts) t += c;
    return t;
  }
};

inline LengthHistogram length_distribution(const tok::Vocabulary& vocab, const std::map<TokenId, std::uint64_t>& freqs,
                                           Weighting weighting) {
  for (const auto& [id, f] : freqs) {
    if (id >= vocab.size()) throw ConsistencyError("token id " + std::to_string(id) + " is not in the vocabulary");
  }
  LengthHistogram h;
  h.weighting = weighting;
  for (const auto& e : vocab.entries()) {
    if (weighting == Weighting::ByType) {
      ++h.counts[e.char_length];
    } else if (auto it = freqs.find(e.token_id); it != freqs.end() && it->second > 0) {
      h.counts[e.char_length] += it->second;
    }
  }
  return h;
}

inline LengthHistogram length_distribution(const tok::Vocabulary& vocab, const std::vector<std::uint64_t>& freqs,
                                           Weighting weighting) {
  if (freqs.size() > vocab.size()) throw ConsistencyError("frequency vector is longer than the vocabulary");
  std::map<TokenId, std::uint64_t> m;
  for (std::size_t i = 0; i < freqs.size(); ++i) m.emplace(static_cast<TokenId>(i), freqs[i]);
  return length_distribution(vocab, m, weighting);
}

struct BandLengths {
  std::uint64_t first_rank = 0;
  std::uint64_t last_rank = 0;
  double mean_length = 0;
  double median_length = 0;
};

/// Splits the ranks into band_count contiguous bands of (near) equal size
/// and reports the character length of the tokens in each band.
inline std::vector<BandLengths> rank_band_lengths(const RankFrequencyTable& rft, const tok::Vocabulary& vocab,
                                                  std::size_t band_count) {
  const std::size_t n = rft.size();
  if (band_count == 0) throw ParameterError("band_count must be at least 1");
  if (band_count > n) {
    throw ParameterError("band_count " + std::to_string(band_count) + " exceeds the " + std::to_string(n) + " table rows");
  }
  std::vector<BandLengths> out;
  std::vector<std::uint32_t> lens;
  for (std::size_t b = 0; b < band_count; ++b) {
    const std::size_t lo = b * n / band_count;
    const std::size_t hi = (b + 1) * n / band_count;
    lens.clear();
    double sum = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto id = rft.rows()[i].token_id;
      if (id >= vocab.size()) throw ConsistencyError("token id " + std::to_string(id) + " is not in the vocabulary");
      lens.push_back(vocab[id].char_length);
      sum += vocab[id].char_length;
    }
    std::sort(lens.begin(), lens.end());
    const std::size_t m = lens.size();
    const double median = m % 2 == 1 ? lens[m / 2] : 0.5 * (lens[m / 2 - 1] + static_cast<double>(lens[m / 2]));
    out.push_back({lo + 1, hi, sum / static_cast<double>(m), median});
  }
  return out;
}

// ---- CSV -------------------------------------------------------------------

inline void write_rank_frequency_csv(std::ostream& out, const RankFrequencyTable& rft) {
  out << "rank,token_id,frequency\n";
  for (const auto& r : rft.rows()) out << r.rank << ',' << r.token_id << ',' << r.frequency << '\n';
}

inline RankFrequencyTable read_rank_frequency_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "rank,token_id,frequency") throw ParseError("missing rank-frequency header", 1);
  std::vector<RankRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw ParseError("expected 3 comma-separated fields", lineno);
    }
    const std::string_view v(line);
    rows.push_back({tok::detail::parse_number<std::uint64_t>(v.substr(0, c1), lineno, "rank"),
                    tok::detail::parse_number<TokenId>(v.substr(c1 + 1, c2 - c1 - 1), lineno, "token_id"),
                    tok::detail::parse_number<std::uint64_t>(v.substr(c2 + 1), lineno, "frequency")});
  }
  try {
    return RankFrequencyTable::from_rows(std::move(rows));
  } catch (const ConsistencyError& e) {
    throw ParseError(e.what(), lineno);
  }
}

inline RankFrequencyTable load_rank_frequency_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open rank-frequency table '" + path + "'");
  return read_rank_frequency_csv(in);
}

inline void write_length_histogram_csv(std::ostream& out, const LengthHistogram& h) {
  out << "length,count\n";
  for (const auto& [len, c] : h.counts) out << len << ',' << c << '\n';
}

}  // namespace zipftok::stats
