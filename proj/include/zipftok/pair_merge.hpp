#pragma once

// BPE and WordPiece training by incremental pair merging over the whole
// corpus held as one symbol sequence. Pair counts are exact and updated
// locally around each merged occurrence; the corpus is never re-scanned.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zipftok/corpus.hpp"
#include "zipftok/errors.hpp"
#include "zipftok/utf8.hpp"
#include "zipftok/vocab.hpp"

namespace zipftok::tok {

struct PairTrainOptions {
  std::size_t target_size = 0;
  Boundary boundary = Boundary::Word;
  // Called after every vocabulary growth step with the current size.
  std::function<void(std::size_t)> on_progress;
};

struct PairTrainResult {
  Vocabulary vocab;
  MergeTable merges;
  std::vector<std::string> warnings;
};

namespace detail {

inline constexpr std::uint32_t kSeparator = 0xFFFFFFFFu;
inline constexpr std::uint32_t kDeleted = 0xFFFFFFFEu;
inline constexpr std::uint32_t kNone = 0xFFFFFFFFu;

inline std::uint64_t pair_key(std::uint32_t l, std::uint32_t r) noexcept {
  return (static_cast<std::uint64_t>(l) << 32) | r;
}
inline std::uint32_t key_left(std::uint64_t k) noexcept { return static_cast<std::uint32_t>(k >> 32); }
inline std::uint32_t key_right(std::uint64_t k) noexcept { return static_cast<std::uint32_t>(k); }

/// Compares the concatenations a1+a2 and b1+b2 without materializing them.
inline int compare_concat(std::string_view a1, std::string_view a2, std::string_view b1, std::string_view b2) noexcept {
  std::size_t i = 0, j = 0;
  const std::size_t na = a1.size() + a2.size(), nb = b1.size() + b2.size();
  while (i < na && j < nb) {
    const auto ca = static_cast<unsigned char>(i < a1.size() ? a1[i] : a2[i - a1.size()]);
    const auto cb = static_cast<unsigned char>(j < b1.size() ? b1[j] : b2[j - b1.size()]);
    if (ca != cb) return ca < cb ? -1 : 1;
    ++i, ++j;
  }
  return na == nb ? 0 : (na < nb ? -1 : 1);
}

/// Symbol sequence with atoms remapped to code-point order, shared by the
/// pair trainers and the unigram seeding.
struct LoadedCorpus {
  std::vector<std::uint32_t> symbols;  // atom ids with kSeparator between documents
  std::vector<char32_t> atoms;         // atom id -> code point, ascending
};

template <corpus::DocumentSource Source>
LoadedCorpus load_symbols(Source& source) {
  LoadedCorpus out;
  std::unordered_map<char32_t, std::uint32_t> first_seen;
  std::vector<char32_t> by_first_seen;
  corpus::Document doc;
  bool any = false;
  while (source.next(doc)) {
    if (any) out.symbols.push_back(kSeparator);
    std::size_t pos = 0;
    while (pos < doc.text.size()) {
      const auto cp = utf8::next(doc.text, pos);
      if (!cp) throw DecodeError("invalid UTF-8 in document " + std::to_string(doc.doc_id), pos);
      auto [it, inserted] = first_seen.emplace(*cp, static_cast<std::uint32_t>(by_first_seen.size()));
      if (inserted) by_first_seen.push_back(*cp);
      out.symbols.push_back(it->second);
    }
    any = true;
  }
  out.atoms = by_first_seen;
  std::sort(out.atoms.begin(), out.atoms.end());
  std::vector<std::uint32_t> remap(by_first_seen.size());
  for (std::uint32_t i = 0; i < by_first_seen.size(); ++i) {
    remap[i] = static_cast<std::uint32_t>(
        std::lower_bound(out.atoms.begin(), out.atoms.end(), by_first_seen[i]) - out.atoms.begin());
  }
  for (auto& s : out.symbols) {
    if (s != kSeparator) s = remap[s];
  }
  return out;
}

enum class Selection { Frequency, LikelihoodRatio };

class PairMerger {
 public:
  PairMerger(LoadedCorpus corpus, Boundary boundary, Selection selection)
      : sym_(std::move(corpus.symbols)), selection_(selection) {
    for (char32_t cp : corpus.atoms) {
      surface_ids_.emplace(utf8::encode(cp), static_cast<std::uint32_t>(surfaces_.size()));
      surfaces_.push_back(utf8::encode(cp));
      barrier_.push_back(boundary == Boundary::Word && utf8::is_space(cp));
    }
    atom_count_ = corpus.atoms.size();
    token_count_.assign(atom_count_, 0);
    pairs_of_token_.resize(atom_count_);

    const auto n = static_cast<std::uint32_t>(sym_.size());
    next_.resize(n);
    prev_.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      next_[i] = i + 1 < n ? i + 1 : kNone;
      prev_[i] = i > 0 ? i - 1 : kNone;
      if (sym_[i] != kSeparator) ++token_count_[sym_[i]];
    }
    for (std::uint32_t i = 0; i + 1 < n; ++i) {
      if (countable(sym_[i], sym_[i + 1])) increment(pair_key(sym_[i], sym_[i + 1]), i);
    }
    for (const auto& [key, state] : pairs_) push(key);
  }

  std::size_t alphabet_size() const noexcept { return atom_count_; }
  std::size_t vocab_size() const noexcept { return surfaces_.size(); }
  const std::vector<std::string>& surfaces() const noexcept { return surfaces_; }
  const std::vector<std::int64_t>& token_counts() const noexcept { return token_count_; }
  const MergeTable& merges() const noexcept { return merges_; }

  /// Performs one merge; false when no pair occurs at least twice.
  bool step() {
    std::uint64_t key;
    if (!pop_best(key)) return false;
    merge(key);
    return true;
  }

 private:
  struct PairState {
    std::int64_t count = 0;
    std::vector<std::uint32_t> positions;  // superset of live occurrences
  };

  struct HeapEntry {
    std::int64_t count;
    std::int64_t left_count;
    std::int64_t right_count;
    std::uint64_t key;
  };

  bool countable(std::uint32_t l, std::uint32_t r) const noexcept {
    return l < kDeleted && r < kDeleted && !barrier_[l] && !barrier_[r];
  }

  bool live_at(std::uint64_t key, std::uint32_t pos) const noexcept {
    if (sym_[pos] != key_left(key)) return false;
    const auto q = next_[pos];
    return q != kNone && sym_[q] == key_right(key);
  }

  void increment(std::uint64_t key, std::uint32_t pos) {
    auto [it, inserted] = pairs_.try_emplace(key);
    auto& st = it->second;
    if (inserted) {
      pairs_of_token_[key_left(key)].push_back(key);
      pairs_of_token_[key_right(key)].push_back(key);
    }
    ++st.count;
    st.positions.push_back(pos);
    if (st.positions.size() > 2 * static_cast<std::size_t>(st.count) + 32) {
      std::erase_if(st.positions, [&](std::uint32_t p) { return !live_at(key, p); });
    }
  }

  void decrement(std::uint64_t key) {
    auto it = pairs_.find(key);
    if (it == pairs_.end()) return;
    if (--it->second.count <= 0) pairs_.erase(it);
  }

  // True when `a` should be merged before `b`.
  bool better(const HeapEntry& a, const HeapEntry& b) const {
    if (selection_ == Selection::Frequency) {
      if (a.count != b.count) return a.count > b.count;
    } else {
      const auto lhs = static_cast<__int128>(a.count) * b.left_count * b.right_count;
      const auto rhs = static_cast<__int128>(b.count) * a.left_count * a.right_count;
      if (lhs != rhs) return lhs > rhs;
    }
    const auto& al = surfaces_[key_left(a.key)];
    const auto& ar = surfaces_[key_right(a.key)];
    const auto& bl = surfaces_[key_left(b.key)];
    const auto& br = surfaces_[key_right(b.key)];
    const int c = compare_concat(al, ar, bl, br);
    if (c != 0) return c < 0;
    return al < bl;
  }

  void push(std::uint64_t key) {
    auto it = pairs_.find(key);
    if (it == pairs_.end() || it->second.count < 2) return;
    heap_.push_back({it->second.count, token_count_[key_left(key)], token_count_[key_right(key)], key});
    std::push_heap(heap_.begin(), heap_.end(), [this](const HeapEntry& a, const HeapEntry& b) { return better(b, a); });
  }

  bool pop_best(std::uint64_t& key) {
    const auto cmp = [this](const HeapEntry& a, const HeapEntry& b) { return better(b, a); };
    while (!heap_.empty()) {
      std::pop_heap(heap_.begin(), heap_.end(), cmp);
      const HeapEntry top = heap_.back();
      heap_.pop_back();
      auto it = pairs_.find(top.key);
      if (it == pairs_.end() || it->second.count < 2) continue;
      const bool current = it->second.count == top.count &&
                           (selection_ == Selection::Frequency ||
                            (token_count_[key_left(top.key)] == top.left_count &&
                             token_count_[key_right(top.key)] == top.right_count));
      if (!current) {
        push(top.key);
        continue;
      }
      key = top.key;
      return true;
    }
    return false;
  }

  void merge(std::uint64_t key) {
    const std::uint32_t a = key_left(key), b = key_right(key);
    // Two merge paths can spell the same surface; the later one reuses the id.
    auto [found, fresh] = surface_ids_.try_emplace(surfaces_[a] + surfaces_[b], static_cast<std::uint32_t>(surfaces_.size()));
    const std::uint32_t c = found->second;
    if (fresh) {
      surfaces_.push_back(found->first);
      barrier_.push_back(false);
      token_count_.push_back(0);
      pairs_of_token_.emplace_back();
    }
    merges_.push_back({surfaces_[a], surfaces_[b]});

    std::vector<std::uint32_t> positions = std::move(pairs_.at(key).positions);
    std::sort(positions.begin(), positions.end());
    touched_.clear();

    for (const std::uint32_t pos : positions) {
      if (!live_at(key, pos)) continue;
      const std::uint32_t q = next_[pos];
      const std::uint32_t p = prev_[pos];
      const std::uint32_t r = next_[q];
      if (p != kNone && countable(sym_[p], a)) decrement(pair_key(sym_[p], a));
      if (r != kNone && countable(b, sym_[r])) decrement(pair_key(b, sym_[r]));
      decrement(key);

      sym_[pos] = c;
      sym_[q] = kDeleted;
      next_[pos] = r;
      if (r != kNone) prev_[r] = pos;
      --token_count_[a];
      --token_count_[b];
      ++token_count_[c];

      if (p != kNone && countable(sym_[p], c)) {
        increment(pair_key(sym_[p], c), p);
        touched_.push_back(pair_key(sym_[p], c));
      }
      if (r != kNone && countable(c, sym_[r])) {
        increment(pair_key(c, sym_[r]), pos);
        touched_.push_back(pair_key(c, sym_[r]));
      }
    }
    pairs_.erase(key);

    if (selection_ == Selection::LikelihoodRatio) {
      // Fewer occurrences of a or b raise the score of every pair they join.
      for (const std::uint32_t t : {a, b}) {
        auto& list = pairs_of_token_[t];
        std::erase_if(list, [&](std::uint64_t k) { return !pairs_.contains(k); });
        touched_.insert(touched_.end(), list.begin(), list.end());
      }
    }
    std::sort(touched_.begin(), touched_.end());
    touched_.erase(std::unique(touched_.begin(), touched_.end()), touched_.end());
    for (const auto k : touched_) push(k);
  }

  std::vector<std::uint32_t> sym_;
  std::vector<std::uint32_t> next_;
  std::vector<std::uint32_t> prev_;
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, std::uint32_t> surface_ids_;
  std::vector<bool> barrier_;
  std::vector<std::int64_t> token_count_;
  std::vector<std::vector<std::uint64_t>> pairs_of_token_;
  std::size_t atom_count_ = 0;
  Selection selection_;
  std::unordered_map<std::uint64_t, PairState> pairs_;
  std::vector<HeapEntry> heap_;
  std::vector<std::uint64_t> touched_;
  MergeTable merges_;
};

template <corpus::DocumentSource Source>
PairTrainResult train_pairs(Source& source, const PairTrainOptions& options, Selection selection, Algorithm algorithm) {
  LoadedCorpus loaded = load_symbols(source);
  if (loaded.atoms.empty()) throw ParameterError("cannot train on an empty corpus");
  if (options.target_size < loaded.atoms.size()) {
    throw ParameterError("target size " + std::to_string(options.target_size) + " is below the alphabet size " +
                         std::to_string(loaded.atoms.size()));
  }
  PairMerger merger(std::move(loaded), options.boundary, selection);
  PairTrainResult result;
  if (options.on_progress) options.on_progress(merger.vocab_size());
  while (merger.vocab_size() < options.target_size) {
    if (!merger.step()) {
      result.warnings.push_back("no pair occurs at least twice; stopped at " + std::to_string(merger.vocab_size()) +
                                " of " + std::to_string(options.target_size) + " entries");
      break;
    }
    if (options.on_progress) options.on_progress(merger.vocab_size());
  }
  result.vocab = Vocabulary(algorithm, options.target_size);
  const auto& surfaces = merger.surfaces();
  const auto& counts = merger.token_counts();
  for (std::size_t i = 0; i < surfaces.size(); ++i) result.vocab.add(surfaces[i], static_cast<double>(counts[i]));
  result.merges = merger.merges();
  return result;
}

}  // namespace detail

/// Greedy most-frequent-pair merging. Ties go to the lexicographically
/// smallest concatenated surface, then the smaller left surface.
template <corpus::DocumentSource Source>
PairTrainResult train_bpe(Source& source, const PairTrainOptions& options) {
  return detail::train_pairs(source, options, detail::Selection::Frequency, Algorithm::Bpe);
}

/// Same loop as BPE with score count(pair) / (count(left) * count(right)).
template <corpus::DocumentSource Source>
PairTrainResult train_wordpiece(Source& source, const PairTrainOptions& options) {
  return detail::train_pairs(source, options, detail::Selection::LikelihoodRatio, Algorithm::WordPiece);
}

}  // namespace zipftok::tok
