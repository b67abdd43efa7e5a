#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "zipftok/corpus.hpp"
#include "zipftok/errors.hpp"
#include "zipftok/trie.hpp"
#include "zipftok/utf8.hpp"
#include "zipftok/vocab.hpp"

namespace zipftok::tok {

/// Token count per vocabulary id; every id is present, possibly with 0.
using TokenFrequencies = std::vector<std::uint64_t>;

/// Immutable encoder for a trained vocabulary. BPE replays the merge table
/// in rank order, WordPiece takes the greedy longest match, Unigram takes the
/// Viterbi segmentation. Safe to share across threads.
class Encoder {
 public:
  Encoder(const Vocabulary& vocab, const MergeTable* merges = nullptr) : vocab_(&vocab) {
    for (const auto& e : vocab.entries()) {
      if (e.char_length == 1) {
        std::size_t pos = 0;
        atoms_.emplace(*utf8::next(e.surface, pos), e.token_id);
      }
    }
    switch (vocab.algorithm()) {
      case Algorithm::Bpe: build_merges(merges); break;
      case Algorithm::WordPiece: build_trie(); break;
      case Algorithm::Unigram: build_unigram(); break;
    }
  }

  const Vocabulary& vocabulary() const noexcept { return *vocab_; }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> out;
    encode_into(text, out);
    return out;
  }

  void encode_into(std::string_view text, std::vector<TokenId>& out) const {
    const std::u32string cps = utf8::decode(text);
    switch (vocab_->algorithm()) {
      case Algorithm::Bpe: encode_bpe(cps, out); break;
      case Algorithm::WordPiece: encode_longest(cps, out); break;
      case Algorithm::Unigram: encode_viterbi(cps, out); break;
    }
  }

  std::string decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (auto id : ids) out += (*vocab_)[id].surface;
    return out;
  }

 private:
  TokenId atom(char32_t c, std::size_t offset) const {
    auto it = atoms_.find(c);
    if (it == atoms_.end()) throw EncodingError(c, offset);
    return it->second;
  }

  void build_merges(const MergeTable* merges) {
    if (merges == nullptr) throw ParameterError("BPE encoding requires a merge table");
    std::vector<bool> available(vocab_->size(), false);
    for (const auto& [cp, id] : atoms_) available[id] = true;
    std::uint32_t rank = 0;
    for (const auto& m : *merges) {
      const TokenId* l = vocab_->find(m.left);
      const TokenId* r = vocab_->find(m.right);
      const TokenId* c = vocab_->find(m.left + m.right);
      if (!l || !r || !c) throw ConsistencyError("merge " + std::to_string(rank) + " references unknown tokens");
      if (!available[*l] || !available[*r]) {
        throw ConsistencyError("merge " + std::to_string(rank) + " uses a token created by a later merge");
      }
      available[*c] = true;
      ranks_[(static_cast<std::uint64_t>(*l) << 32) | *r].push_back(MergeRule{rank, *c});
      ++rank;
    }
  }

  void build_trie() {
    for (const auto& e : vocab_->entries()) trie_.insert(utf8::decode(e.surface), static_cast<std::int32_t>(e.token_id));
  }

  void build_unigram() {
    build_trie();
    double total = 0;
    for (const auto& e : vocab_->entries()) total += e.train_frequency;
    log_probs_.resize(vocab_->size());
    double min_lp = 0;
    for (const auto& e : vocab_->entries()) {
      const double lp = total > 0 && e.train_frequency > 0 ? std::log(e.train_frequency / total)
                                                           : -std::numeric_limits<double>::infinity();
      log_probs_[e.token_id] = lp;
      if (std::isfinite(lp)) min_lp = std::min(min_lp, lp);
    }
    // Pieces that received no mass still segment text the model never saw.
    for (auto& lp : log_probs_) {
      if (!std::isfinite(lp)) lp = min_lp - 10.0;
    }
  }

  struct MergeRule {
    std::uint32_t rank;
    TokenId result;
  };

  // First rule for (l, r) whose rank is at least `min_rank`. A pair can
  // occur more than once in a table when two merges spell the same product.
  const MergeRule* rule(TokenId l, TokenId r, std::uint32_t min_rank) const {
    auto it = ranks_.find((static_cast<std::uint64_t>(l) << 32) | r);
    if (it == ranks_.end()) return nullptr;
    for (const auto& m : it->second) {
      if (m.rank >= min_rank) return &m;
    }
    return nullptr;
  }

  // Lowest-rank pair first, leftmost among equal ranks, never going back to
  // a rank below one already applied: the same result as replaying the table
  // merge by merge, left to right.
  void encode_bpe(const std::u32string& cps, std::vector<TokenId>& out) const {
    const std::size_t n = cps.size();
    constexpr std::uint32_t kNone = 0xFFFFFFFFu;
    std::vector<TokenId> sym(n);
    std::vector<std::uint32_t> next(n), prev(n);
    std::vector<bool> alive(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      sym[i] = atom(cps[i], i);
      next[i] = i + 1 < n ? static_cast<std::uint32_t>(i + 1) : kNone;
      prev[i] = i > 0 ? static_cast<std::uint32_t>(i - 1) : kNone;
    }
    using Item = std::pair<std::uint32_t, std::uint32_t>;  // (rank, position)
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    std::uint32_t applied = 0;
    const auto consider = [&](std::uint32_t pos) {
      if (pos == kNone || next[pos] == kNone) return;
      if (const auto* r = rule(sym[pos], sym[next[pos]], applied)) heap.push({r->rank, pos});
    };
    for (std::uint32_t i = 0; i + 1 < n; ++i) consider(i);
    while (!heap.empty()) {
      const auto [rank, pos] = heap.top();
      heap.pop();
      if (!alive[pos] || next[pos] == kNone || rank < applied) continue;
      const auto* r = rule(sym[pos], sym[next[pos]], rank);
      if (r == nullptr || r->rank != rank) continue;
      applied = rank;
      const std::uint32_t q = next[pos];
      sym[pos] = r->result;
      alive[q] = false;
      next[pos] = next[q];
      if (next[q] != kNone) prev[next[q]] = pos;
      consider(prev[pos]);
      consider(pos);
    }
    for (std::uint32_t i = n > 0 ? 0 : kNone; i != kNone; i = next[i]) out.push_back(sym[i]);
  }

  void encode_longest(const std::u32string& cps, std::vector<TokenId>& out) const {
    std::size_t i = 0;
    while (i < cps.size()) {
      std::size_t best_end = 0;
      std::int32_t best = PieceTrie::kNoPiece;
      trie_.for_each_prefix(cps, i, [&](std::size_t end, std::int32_t id) {
        best_end = end;
        best = id;
      });
      if (best == PieceTrie::kNoPiece) throw EncodingError(cps[i], i);
      out.push_back(static_cast<TokenId>(best));
      i = best_end;
    }
  }

  void encode_viterbi(const std::u32string& cps, std::vector<TokenId>& out) const {
    const std::size_t n = cps.size();
    std::vector<double> best(n + 1, -std::numeric_limits<double>::infinity());
    std::vector<std::int32_t> piece(n + 1, PieceTrie::kNoPiece);
    std::vector<std::uint32_t> from(n + 1, 0);
    best[0] = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(best[i])) continue;
      bool any = false;
      trie_.for_each_prefix(cps, i, [&](std::size_t end, std::int32_t id) {
        any = true;
        const double s = best[i] + log_probs_[id];
        if (s > best[end]) {
          best[end] = s;
          piece[end] = id;
          from[end] = static_cast<std::uint32_t>(i);
        }
      });
      if (!any) throw EncodingError(cps[i], i);
    }
    const std::size_t start = out.size();
    for (std::size_t pos = n; pos > 0; pos = from[pos]) out.push_back(static_cast<TokenId>(piece[pos]));
    std::reverse(out.begin() + static_cast<std::ptrdiff_t>(start), out.end());
  }

  const Vocabulary* vocab_;
  std::unordered_map<char32_t, TokenId> atoms_;
  std::unordered_map<std::uint64_t, std::vector<MergeRule>> ranks_;
  PieceTrie trie_;
  std::vector<double> log_probs_;
};

/// Re-encodes every document and counts token occurrences. Documents are
/// encoded in batches split across `threads` workers; per-worker counts are
/// summed, so the result does not depend on the thread count.
template <corpus::DocumentSource Source>
TokenFrequencies token_frequencies(Source& source, const Encoder& encoder, unsigned threads = 1) {
  threads = std::max(1u, threads);
  const std::size_t vocab_size = encoder.vocabulary().size();
  TokenFrequencies total(vocab_size, 0);
  constexpr std::size_t kBatch = 2048;
  std::vector<std::string> batch;
  std::vector<TokenFrequencies> partial(threads, TokenFrequencies(vocab_size, 0));

  const auto flush = [&] {
    if (batch.empty()) return;
    const auto work = [&](unsigned t) {
      std::vector<TokenId> ids;
      for (std::size_t i = t; i < batch.size(); i += threads) {
        ids.clear();
        encoder.encode_into(batch[i], ids);
        for (auto id : ids) ++partial[t][id];
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      std::vector<std::exception_ptr> errors(threads);
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            work(t);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
      pool.clear();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    batch.clear();
  };

  corpus::Document doc;
  while (source.next(doc)) {
    batch.push_back(std::move(doc.text));
    if (batch.size() == kBatch) flush();
  }
  flush();
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < vocab_size; ++i) total[i] += p[i];
  }
  return total;
}

}  // namespace zipftok::tok
