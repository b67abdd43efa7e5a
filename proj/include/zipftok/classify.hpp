#pragma once

// Atom / pragma / idea labelling. The labels are a positional proxy: atoms
// are single symbols, pragmas sit at or above the rank-frequency breakpoint,
// ideas below it.

#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "zipftok/errors.hpp"
#include "zipftok/vocab.hpp"
#include "zipftok/zipfstats.hpp"

namespace zipftok::classify {

using stats::RankFrequencyTable;
using tok::TokenId;

enum class TokenClass { Atom, Pragma, Idea };

inline const char* to_string(TokenClass c) {
  switch (c) {
    case TokenClass::Atom: return "atom";
    case TokenClass::Pragma: return "pragma";
    case TokenClass::Idea: return "idea";
  }
  return "?";
}

struct ClassifiedToken {
  TokenId token_id = 0;
  TokenClass token_class = TokenClass::Atom;
  std::uint64_t rank = 0;
  std::uint32_t char_length = 0;
};

struct ClassifiedVocabulary {
  std::vector<ClassifiedToken> tokens;  // in token id order
  std::uint64_t breakpoint_rank = 0;
};

inline ClassifiedVocabulary classify_tokens(const tok::Vocabulary& vocab, const RankFrequencyTable& rft,
                                            std::uint64_t breakpoint_rank) {
  if (breakpoint_rank < 1 || breakpoint_rank > rft.size()) {
    throw ParameterError("breakpoint rank " + std::to_string(breakpoint_rank) + " outside table of " +
                         std::to_string(rft.size()) + " rows");
  }
  std::vector<std::uint64_t> rank_of(vocab.size(), 0);
  for (const auto& row : rft.rows()) {
    if (row.token_id >= vocab.size()) throw ConsistencyError("table token " + std::to_string(row.token_id) + " not in vocabulary");
    rank_of[row.token_id] = row.rank;
  }
  ClassifiedVocabulary out;
  out.breakpoint_rank = breakpoint_rank;
  out.tokens.reserve(vocab.size());
  for (const auto& e : vocab.entries()) {
    const auto rank = rank_of[e.token_id];
    if (rank == 0) throw ConsistencyError("token " + std::to_string(e.token_id) + " is missing from the rank table");
    TokenClass c = TokenClass::Idea;
    if (e.char_length == 1) {
      c = TokenClass::Atom;
    } else if (rank <= breakpoint_rank) {
      c = TokenClass::Pragma;
    }
    out.tokens.push_back({e.token_id, c, rank, e.char_length});
  }
  return out;
}

enum class Origin { Head, Tail };

inline const char* to_string(Origin o) { return o == Origin::Head ? "head" : "tail"; }

struct SampledToken {
  TokenId token_id;
  Origin origin;
};

struct HeadTailSample {
  std::vector<TokenId> head;
  std::vector<TokenId> tail;
  std::vector<SampledToken> shuffled;  // head and tail interleaved at random
};

namespace detail {

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementations.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t u;
  do u = rng(); while (u >= limit);
  return u % bound;
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

template <class T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_below(rng, pool.size() - i)]);
  pool.resize(k);
  return pool;
}

}  // namespace detail

/// Uniform samples from the top decile of ranks (head) and from the bottom
/// decile restricted to tokens of at least min_tail_length characters (tail).
inline HeadTailSample sample_head_tail(const RankFrequencyTable& rft, const tok::Vocabulary& vocab, std::size_t head_n,
                                       std::size_t tail_n, std::uint32_t min_tail_length, std::uint64_t seed) {
  const std::size_t n = rft.size();
  if (head_n + tail_n > vocab.size()) throw ParameterError("head_n + tail_n exceeds the vocabulary size");
  const std::size_t decile = n / 10;
  std::vector<TokenId> head_pool, tail_pool;
  for (const auto& row : rft.rows()) {
    if (row.token_id >= vocab.size()) throw ConsistencyError("table token " + std::to_string(row.token_id) + " not in vocabulary");
    if (row.rank <= decile) head_pool.push_back(row.token_id);
    if (row.rank > n - decile && vocab[row.token_id].char_length >= min_tail_length) tail_pool.push_back(row.token_id);
  }
  if (head_n > head_pool.size()) {
    throw ParameterError("head decile holds only " + std::to_string(head_pool.size()) + " tokens; requested " +
                         std::to_string(head_n));
  }
  if (tail_n > tail_pool.size()) {
    throw ParameterError("only " + std::to_string(tail_pool.size()) + " tail-decile tokens have length >= " +
                         std::to_string(min_tail_length) + "; requested " + std::to_string(tail_n));
  }
  std::mt19937_64 rng(seed);
  HeadTailSample out;
  out.head = detail::sample_without_replacement(std::move(head_pool), head_n, rng);
  out.tail = detail::sample_without_replacement(std::move(tail_pool), tail_n, rng);
  for (auto id : out.head) out.shuffled.push_back({id, Origin::Head});
  for (auto id : out.tail) out.shuffled.push_back({id, Origin::Tail});
  detail::shuffle(out.shuffled, rng);
  return out;
}

// ---- CSV -------------------------------------------------------------------

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos && !s.empty() && s.front() != ' ' && s.back() != ' ') return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_classified_csv(std::ostream& out, const ClassifiedVocabulary& cv, const tok::Vocabulary& vocab) {
  out << "token_id,surface,rank,char_length,class\n";
  for (const auto& t : cv.tokens) {
    out << t.token_id << ',' << csv_quote(vocab[t.token_id].surface) << ',' << t.rank << ',' << t.char_length << ','
        << to_string(t.token_class) << '\n';
  }
}

inline void write_sample_csv(std::ostream& out, const HeadTailSample& sample, const tok::Vocabulary& vocab) {
  out << "token_id,surface,origin\n";
  for (const auto& s : sample.shuffled) {
    out << s.token_id << ',' << csv_quote(vocab[s.token_id].surface) << ',' << to_string(s.origin) << '\n';
  }
}

}  // namespace zipftok::classify
