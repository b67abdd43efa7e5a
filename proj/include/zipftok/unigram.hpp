#pragma once

// Unigram language-model tokenizer training: seed a large set of frequent
// substrings, fit piece probabilities by EM over the segmentation lattice,
// and prune the pieces whose removal costs the least likelihood until the
// target size is reached.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zipftok/corpus.hpp"
#include "zipftok/errors.hpp"
#include "zipftok/trie.hpp"
#include "zipftok/utf8.hpp"
#include "zipftok/vocab.hpp"

namespace zipftok::tok {

struct UnigramOptions {
  std::size_t target_size = 0;
  double seed_multiplier = 4.0;
  double prune_fraction = 0.25;
  Boundary boundary = Boundary::Word;
  int em_iterations = 2;
  std::size_t max_piece_length = 16;
};

struct UnigramTrainResult {
  Vocabulary vocab;
  // Corpus log-likelihood after each E-step, one list per pruning round.
  std::vector<std::vector<double>> log_likelihood;
  std::vector<std::string> warnings;
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

struct Chunk {
  std::u32string text;
  double weight;
};

/// Splits documents into weighted training chunks. Word mode yields
/// whitespace-free words and single whitespace symbols; document mode keeps
/// whole documents. Identical chunks are merged and the result is sorted.
template <corpus::DocumentSource Source>
std::vector<Chunk> collect_chunks(Source& source, Boundary boundary) {
  std::unordered_map<std::u32string, double> counts;
  corpus::Document doc;
  while (source.next(doc)) {
    const std::u32string text = utf8::decode(doc.text);
    if (boundary == Boundary::Document) {
      counts[text] += 1;
      continue;
    }
    std::size_t i = 0;
    while (i < text.size()) {
      if (utf8::is_space(text[i])) {
        counts[std::u32string(1, text[i])] += 1;
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < text.size() && !utf8::is_space(text[j])) ++j;
      counts[text.substr(i, j - i)] += 1;
      i = j;
    }
  }
  std::vector<Chunk> chunks;
  chunks.reserve(counts.size());
  for (auto& [t, w] : counts) chunks.push_back({t, w});
  std::sort(chunks.begin(), chunks.end(), [](const Chunk& a, const Chunk& b) { return a.text < b.text; });
  return chunks;
}

struct SeedCandidate {
  std::u32string text;
  double frequency;
};

/// Frequent substrings of length 2..max_len by suffix-array counting. The
/// suffix array is sorted on the first max_len symbols only; every
/// lcp-interval (and every suffix not shared with a neighbour) yields one
/// candidate whose frequency is the summed chunk weight of its occurrences.
inline std::vector<SeedCandidate> frequent_substrings(const std::vector<Chunk>& chunks, std::size_t max_len) {
  constexpr std::uint32_t kSep = 0x110000;
  std::vector<std::uint32_t> text;
  std::vector<double> weight;
  for (const auto& c : chunks) {
    for (char32_t ch : c.text) {
      text.push_back(static_cast<std::uint32_t>(ch));
      weight.push_back(c.weight);
    }
    text.push_back(kSep);
    weight.push_back(0);
  }
  const std::size_t n = text.size();
  if (n == 0) return {};

  // Prefix doubling truncated at max_len symbols.
  std::vector<std::uint32_t> sa(n), rank(n), tmp(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = static_cast<std::uint32_t>(i);
    rank[i] = text[i];
  }
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(n);
  for (std::size_t k = 1;; k <<= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t second = i + k < n ? static_cast<std::uint64_t>(rank[i + k]) + 1 : 0;
      keyed[i] = {(static_cast<std::uint64_t>(rank[i]) << 32) | second, static_cast<std::uint32_t>(i)};
    }
    std::sort(keyed.begin(), keyed.end());
    std::uint32_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0 && keyed[i].first != keyed[i - 1].first) ++r;
      tmp[keyed[i].second] = r;
      sa[i] = keyed[i].second;
    }
    rank.swap(tmp);
    if (2 * k >= max_len || r + 1 == n) break;
  }
  keyed = {};

  // Separator-aware suffix length (capped) and neighbour lcp.
  const auto suffix_len = [&](std::uint32_t p) {
    std::size_t l = 0;
    while (l < max_len && p + l < n && text[p + l] != kSep) ++l;
    return l;
  };
  std::vector<std::uint8_t> lcp(n + 1, 0);
  for (std::size_t i = 1; i < n; ++i) {
    const auto a = sa[i - 1], b = sa[i];
    std::size_t l = 0;
    while (l < max_len && a + l < n && b + l < n && text[a + l] == text[b + l] && text[a + l] != kSep) ++l;
    lcp[i] = static_cast<std::uint8_t>(l);
  }
  std::vector<double> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + weight[sa[i]];

  std::vector<SeedCandidate> out;
  const auto report = [&](std::size_t len, std::size_t lb, std::size_t rb) {
    if (len < 2) return;
    const auto p = sa[lb];
    out.push_back({std::u32string(text.begin() + p, text.begin() + p + len), prefix[rb + 1] - prefix[lb]});
  };
  struct Interval {
    std::size_t lcp;
    std::size_t lb;
  };
  std::vector<Interval> stack{{0, 0}};
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t cur = i < n ? lcp[i] : 0;
    std::size_t lb = i - 1;
    while (cur < stack.back().lcp) {
      const Interval top = stack.back();
      stack.pop_back();
      report(top.lcp, top.lb, i - 1);
      lb = top.lb;
    }
    if (cur > stack.back().lcp) stack.push_back({cur, lb});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = suffix_len(sa[i]);
    if (len > std::max<std::size_t>(lcp[i], lcp[i + 1])) report(len, i, i);
  }
  std::sort(out.begin(), out.end(), [](const SeedCandidate& a, const SeedCandidate& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    if (a.text.size() != b.text.size()) return a.text.size() < b.text.size();
    return a.text < b.text;
  });
  return out;
}

class UnigramModel {
 public:
  UnigramModel(std::vector<std::u32string> pieces, std::vector<double> log_probs, std::size_t atom_count)
      : pieces_(std::move(pieces)), log_probs_(std::move(log_probs)), atom_count_(atom_count) {
    rebuild_trie();
  }

  const std::vector<std::u32string>& pieces() const noexcept { return pieces_; }
  const std::vector<double>& log_probs() const noexcept { return log_probs_; }
  std::size_t atom_count() const noexcept { return atom_count_; }

  /// One E-step. Adds weighted expected piece counts; returns the weighted
  /// corpus log-likelihood.
  double expect(const std::vector<Chunk>& chunks, std::vector<double>& expected) const {
    expected.assign(pieces_.size(), 0.0);
    double total = 0;
    std::vector<Edge> edges;
    std::vector<double> alpha, beta;
    for (const auto& chunk : chunks) {
      const auto& t = chunk.text;
      const std::size_t len = t.size();
      build_edges(t, edges, -1);
      alpha.assign(len + 1, kNegInf);
      beta.assign(len + 1, kNegInf);
      alpha[0] = 0;
      for (const auto& e : edges) alpha[e.end] = log_add(alpha[e.end], alpha[e.begin] + log_probs_[e.piece]);
      beta[len] = 0;
      for (auto it = edges.rbegin(); it != edges.rend(); ++it) {
        beta[it->begin] = log_add(beta[it->begin], beta[it->end] + log_probs_[it->piece]);
      }
      const double z = alpha[len];
      if (z == kNegInf) throw ConsistencyError("unigram lattice has no complete path");
      for (const auto& e : edges) {
        expected[e.piece] += chunk.weight * std::exp(alpha[e.begin] + log_probs_[e.piece] + beta[e.end] - z);
      }
      total += chunk.weight * z;
    }
    return total;
  }

  /// Maximum-likelihood segmentation; `excluded` is skipped when >= 0.
  std::vector<std::int32_t> viterbi(std::u32string_view t, std::int32_t excluded = -1) const {
    std::vector<Edge> edges;
    build_edges(t, edges, excluded);
    const std::size_t len = t.size();
    std::vector<double> best(len + 1, kNegInf);
    std::vector<const Edge*> back(len + 1, nullptr);
    best[0] = 0;
    for (const auto& e : edges) {
      const double s = best[e.begin] + log_probs_[e.piece];
      if (s > best[e.end]) {
        best[e.end] = s;
        back[e.end] = &e;
      }
    }
    std::vector<std::int32_t> out;
    if (best[len] == kNegInf) return out;
    for (std::size_t pos = len; pos > 0; pos = back[pos]->begin) out.push_back(back[pos]->piece);
    std::reverse(out.begin(), out.end());
    return out;
  }

  void set_log_probs(std::vector<double> lp) { log_probs_ = std::move(lp); }

 private:
  struct Edge {
    std::uint32_t begin;
    std::uint32_t end;
    std::int32_t piece;
  };

  // Edges sorted by begin, so a forward sweep sees every predecessor first.
  void build_edges(std::u32string_view t, std::vector<Edge>& edges, std::int32_t excluded) const {
    edges.clear();
    for (std::size_t i = 0; i < t.size(); ++i) {
      trie_.for_each_prefix(t, i, [&](std::size_t end, std::int32_t id) {
        if (id != excluded && log_probs_[id] != kNegInf) {
          edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(end), id});
        }
      });
    }
  }

  void rebuild_trie() {
    trie_ = PieceTrie();
    for (std::size_t i = 0; i < pieces_.size(); ++i) trie_.insert(pieces_[i], static_cast<std::int32_t>(i));
  }

  std::vector<std::u32string> pieces_;
  std::vector<double> log_probs_;
  std::size_t atom_count_;
  PieceTrie trie_;
};

// Atoms keep a positive (if negligible) probability, so every chunk keeps a
// complete segmentation after longer pieces are pruned.
inline constexpr double kAtomFloor = 1e-300;

inline std::vector<double> normalize_log(std::vector<double> counts, std::size_t atom_count) {
  for (std::size_t i = 0; i < atom_count && i < counts.size(); ++i) counts[i] = std::max(counts[i], kAtomFloor);
  double total = 0;
  for (double c : counts) total += c;
  std::vector<double> lp(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) lp[i] = counts[i] > 0 ? std::log(counts[i] / total) : kNegInf;
  return lp;
}

}  // namespace detail

template <corpus::DocumentSource Source>
UnigramTrainResult train_unigram(Source& source, const UnigramOptions& options) {
  using namespace detail;
  if (!(options.seed_multiplier > 1)) throw ParameterError("seed_multiplier must exceed 1");
  if (!(options.prune_fraction > 0 && options.prune_fraction < 1)) {
    throw ParameterError("prune_fraction must lie in (0, 1)");
  }
  const std::vector<Chunk> chunks = collect_chunks(source, options.boundary);

  std::map<char32_t, double> atom_freq;
  for (const auto& c : chunks) {
    for (char32_t ch : c.text) atom_freq[ch] += c.weight;
  }
  if (atom_freq.empty()) throw ParameterError("cannot train on an empty corpus");
  if (options.target_size < atom_freq.size()) {
    throw ParameterError("target size " + std::to_string(options.target_size) + " is below the alphabet size " +
                         std::to_string(atom_freq.size()));
  }

  std::vector<std::u32string> pieces;
  std::vector<double> init;
  for (const auto& [ch, f] : atom_freq) {
    pieces.emplace_back(1, ch);
    init.push_back(f);
  }
  const std::size_t atom_count = pieces.size();
  const auto seed_total = static_cast<std::size_t>(options.seed_multiplier * static_cast<double>(options.target_size));
  for (auto& cand : frequent_substrings(chunks, options.max_piece_length)) {
    if (pieces.size() >= std::max(seed_total, atom_count)) break;
    pieces.push_back(std::move(cand.text));
    init.push_back(cand.frequency);
  }

  UnigramTrainResult result;
  UnigramModel model(pieces, normalize_log(init, atom_count), atom_count);
  std::vector<double> expected;

  const auto run_em = [&] {
    std::vector<double> trace;
    for (int it = 0; it < options.em_iterations; ++it) {
      trace.push_back(model.expect(chunks, expected));
      model.set_log_probs(normalize_log(expected, atom_count));
    }
    result.log_likelihood.push_back(std::move(trace));
  };

  while (model.pieces().size() > options.target_size) {
    run_em();
    const auto& cur = model.pieces();
    const auto& lp = model.log_probs();
    const std::size_t size = cur.size();

    // Viterbi frequencies under the current model.
    std::vector<double> freq(size, 0.0);
    double sum = 0;
    for (const auto& chunk : chunks) {
      for (auto id : model.viterbi(chunk.text)) {
        freq[id] += chunk.weight;
        sum += chunk.weight;
      }
    }
    const double logsum = std::log(sum);

    struct Scored {
      std::size_t id;
      double loss;
    };
    std::vector<Scored> scored;
    for (std::size_t i = atom_count; i < size; ++i) {
      double loss = 0;
      if (freq[i] > 0 && lp[i] != kNegInf) {
        const auto alt = model.viterbi(cur[i], static_cast<std::int32_t>(i));
        const double logprob_sp = std::log(freq[i]) - logsum;
        const double logsum_alt = std::log(sum + freq[i] * (static_cast<double>(alt.size()) - 1));
        double logprob_alt = 0;
        for (auto a : alt) logprob_alt += std::log(freq[a] + freq[i]) - logsum_alt;
        loss = freq[i] / sum * (logprob_sp - logprob_alt);
      }
      scored.push_back({i, loss});
    }
    std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
      if (a.loss != b.loss) return a.loss > b.loss;
      if (freq[a.id] != freq[b.id]) return freq[a.id] > freq[b.id];
      return cur[a.id] < cur[b.id];
    });
    const auto shrunk = static_cast<std::size_t>(static_cast<double>(size) * (1.0 - options.prune_fraction));
    const std::size_t keep_total = std::max(options.target_size, std::min(shrunk, size - 1));
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < atom_count; ++i) keep.push_back(i);
    for (std::size_t k = 0; k < scored.size() && keep.size() < keep_total; ++k) keep.push_back(scored[k].id);
    std::sort(keep.begin(), keep.end());

    std::vector<std::u32string> next_pieces;
    std::vector<double> next_counts;
    for (auto id : keep) {
      next_pieces.push_back(cur[id]);
      next_counts.push_back(lp[id] == kNegInf ? 0.0 : std::exp(lp[id]) * sum);
    }
    model = UnigramModel(std::move(next_pieces), normalize_log(next_counts, atom_count), atom_count);
  }
  run_em();
  model.expect(chunks, expected);

  // Atoms in code-point order, then pieces by descending probability.
  std::vector<std::size_t> order;
  for (std::size_t i = atom_count; i < model.pieces().size(); ++i) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (expected[a] != expected[b]) return expected[a] > expected[b];
    return model.pieces()[a] < model.pieces()[b];
  });
  result.vocab = Vocabulary(Algorithm::Unigram, options.target_size);
  for (std::size_t i = 0; i < atom_count; ++i) result.vocab.add(utf8::encode(model.pieces()[i]), expected[i]);
  for (auto i : order) result.vocab.add(utf8::encode(model.pieces()[i]), expected[i]);
  if (result.vocab.size() < options.target_size) {
    result.warnings.push_back("only " + std::to_string(result.vocab.size()) + " candidate pieces for a target of " +
                              std::to_string(options.target_size));
  }
  return result;
}

}  // namespace zipftok::tok
