#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "zipftok/corpus.hpp"
#include "zipftok/encode.hpp"
#include "zipftok/unigram.hpp"

using namespace zipftok;
using namespace zipftok::tok;

namespace {

UnigramTrainResult train(const std::vector<std::string>& docs, UnigramOptions opt) {
  corpus::VectorSource src(docs);
  return train_unigram(src, opt);
}

double total_frequency(const Vocabulary& v) {
  double t = 0;
  for (const auto& e : v.entries()) t += e.train_frequency;
  return t;
}

std::string repeat(const std::string& s, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out += s;
  return out;
}

// Independent forward-backward over an explicit piece list, probability space
// with per-position rescaling.
std::vector<double> reference_em_step(const std::string& text, const std::vector<std::string>& pieces,
                                      const std::vector<double>& prob, double& log_likelihood) {
  const std::size_t n = text.size();
  std::vector<long double> fwd(n + 1, 0), bwd(n + 1, 0);
  fwd[0] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      if (text.compare(i, pieces[k].size(), pieces[k]) == 0) fwd[i + pieces[k].size()] += fwd[i] * prob[k];
    }
  }
  bwd[n] = 1;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      if (text.compare(i, pieces[k].size(), pieces[k]) == 0) bwd[i] += prob[k] * bwd[i + pieces[k].size()];
    }
  }
  log_likelihood = static_cast<double>(std::log(fwd[n]));
  std::vector<double> counts(pieces.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      if (text.compare(i, pieces[k].size(), pieces[k]) == 0) {
        counts[k] += static_cast<double>(fwd[i] * prob[k] * bwd[i + pieces[k].size()] / fwd[n]);
      }
    }
  }
  double total = 0;
  for (double c : counts) total += c;
  for (auto& c : counts) c /= total;
  return counts;
}

}  // namespace

TEST(Unigram, SingleSymbolCorpus) {
  const auto r = train({"aaaa"}, {.target_size = 1});
  ASSERT_EQ(r.vocab.size(), 1u);
  EXPECT_EQ(r.vocab[0].surface, "a");
  EXPECT_DOUBLE_EQ(r.vocab.probability(0), 1.0);
}

TEST(Unigram, ThreePieceLatticeMatchesReferenceEm) {
  const std::string text = repeat("ab", 100);
  const std::vector<std::string> pieces = {"a", "b", "ab"};
  std::vector<double> prob = {1.0 / 3, 1.0 / 3, 1.0 / 3};

  std::vector<std::u32string> upieces = {U"a", U"b", U"ab"};
  std::vector<double> lp(3, std::log(1.0 / 3));
  detail::UnigramModel model(upieces, lp, 2);
  const std::vector<detail::Chunk> chunks = {{utf8::decode(text), 1.0}};
  std::vector<double> expected;
  for (int it = 0; it < 8; ++it) {
    double ref_ll = 0;
    prob = reference_em_step(text, pieces, prob, ref_ll);
    const double ll = model.expect(chunks, expected);
    EXPECT_NEAR(ll, ref_ll, 1e-9 * std::abs(ref_ll) + 1e-9);
    model.set_log_probs(detail::normalize_log(expected, 2));
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::exp(model.log_probs()[k]), prob[k], 1e-9);
  }
  EXPECT_GT(prob[2], prob[0]);
  EXPECT_GT(prob[2], prob[1]);
}

TEST(Unigram, AbRepeatsWithShortPiecesGivesAb) {
  const auto r = train({repeat("ab", 100)}, {.target_size = 3, .max_piece_length = 2});
  ASSERT_EQ(r.vocab.size(), 3u);
  const auto* ab = r.vocab.find("ab");
  ASSERT_NE(ab, nullptr);
  EXPECT_GT(r.vocab.probability(*ab), r.vocab.probability(*r.vocab.find("a")));
  EXPECT_GT(r.vocab.probability(*ab), r.vocab.probability(*r.vocab.find("b")));
}

TEST(Unigram, AbRepeatsDefaultKeepsAnAbMultiple) {
  const auto r = train({repeat("ab", 100)}, {.target_size = 3});
  ASSERT_EQ(r.vocab.size(), 3u);
  const auto& top = r.vocab[2];
  ASSERT_EQ(top.surface.size() % 2, 0u);
  EXPECT_EQ(top.surface, repeat("ab", static_cast<int>(top.surface.size() / 2)));
  EXPECT_GT(r.vocab.probability(2), r.vocab.probability(0));
  EXPECT_GT(r.vocab.probability(2), r.vocab.probability(1));
}

TEST(Unigram, ProbabilitiesSumToOneAndAtomsKept) {
  const std::vector<std::string> docs = {"the quick brown fox", "jumps over the lazy dog", "the dog sleeps",
                                         "a quick nap for the fox"};
  const auto r = train(docs, {.target_size = 40});
  EXPECT_LE(r.vocab.size(), 40u);
  double p = 0;
  for (std::size_t i = 0; i < r.vocab.size(); ++i) p += r.vocab.probability(i);
  EXPECT_NEAR(p, 1.0, 1e-9);
  for (char c : std::string("thequickbrownfxjmpsvlazydg ")) {
    EXPECT_NE(r.vocab.find(std::string(1, c)), nullptr) << c;
  }
  EXPECT_GT(total_frequency(r.vocab), 0);
}

TEST(Unigram, LogLikelihoodNonDecreasingWithinRounds) {
  std::mt19937_64 rng(3);
  const std::vector<std::string> words = {"low", "lower", "newest", "widest", "new", "wide", "lowest", "ne"};
  std::vector<std::string> docs;
  for (int d = 0; d < 50; ++d) {
    std::string s;
    for (int k = 0; k < 8; ++k) s += words[rng() % words.size()] + " ";
    docs.push_back(s);
  }
  const auto r = train(docs, {.target_size = 30, .em_iterations = 6});
  ASSERT_FALSE(r.log_likelihood.empty());
  for (const auto& round : r.log_likelihood) {
    for (std::size_t i = 1; i < round.size(); ++i) {
      EXPECT_GE(round[i], round[i - 1] - 1e-9 * std::abs(round[i - 1]));
    }
  }
}

TEST(Unigram, ParameterErrors) {
  EXPECT_THROW(train({"abc"}, {.target_size = 2}), ParameterError);
  EXPECT_THROW(train({}, {.target_size = 2}), ParameterError);
  EXPECT_THROW(train({"abc"}, {.target_size = 5, .seed_multiplier = 1.0}), ParameterError);
  EXPECT_THROW(train({"abc"}, {.target_size = 5, .prune_fraction = 0.0}), ParameterError);
  EXPECT_THROW(train({"abc"}, {.target_size = 5, .prune_fraction = 1.0}), ParameterError);
}

TEST(Unigram, DocumentBoundaryAllowsSpacePieces) {
  std::vector<std::string> docs(20, "new york new york");
  const auto r = train(docs, {.target_size = 12, .boundary = Boundary::Document});
  bool spaced = false;
  for (const auto& e : r.vocab.entries()) spaced |= e.char_length > 1 && e.surface.find(' ') != std::string::npos;
  EXPECT_TRUE(spaced);
  const auto w = train(docs, {.target_size = 12, .boundary = Boundary::Word});
  for (const auto& e : w.vocab.entries()) {
    if (e.char_length > 1) EXPECT_EQ(e.surface.find(' '), std::string::npos);
  }
}

TEST(Unigram, Deterministic) {
  const std::vector<std::string> docs = {"banana bandana", "cabana banana", "anagram"};
  const auto a = train(docs, {.target_size = 15}), b = train(docs, {.target_size = 15});
  ASSERT_EQ(a.vocab.size(), b.vocab.size());
  for (std::size_t i = 0; i < a.vocab.size(); ++i) {
    EXPECT_EQ(a.vocab[i].surface, b.vocab[i].surface);
    EXPECT_EQ(a.vocab[i].train_frequency, b.vocab[i].train_frequency);
  }
}

TEST(Unigram, SeedsComeFromSuffixCounts) {
  const std::vector<detail::Chunk> chunks = {{U"abcabc", 2.0}, {U"bcx", 1.0}};
  const auto seeds = detail::frequent_substrings(chunks, 16);
  std::map<std::u32string, double> m;
  for (const auto& s : seeds) m[s.text] = s.frequency;
  // brute force: weighted occurrences of every substring of length >= 2
  std::map<std::u32string, double> brute;
  for (const auto& c : chunks) {
    for (std::size_t i = 0; i < c.text.size(); ++i) {
      for (std::size_t l = 2; i + l <= c.text.size(); ++l) brute[c.text.substr(i, l)] += c.weight;
    }
  }
  for (const auto& [s, f] : m) {
    ASSERT_TRUE(brute.count(s)) << utf8::encode(s);
    EXPECT_DOUBLE_EQ(f, brute[s]) << utf8::encode(s);
  }
  EXPECT_DOUBLE_EQ(m[U"bc"], 5.0);
  EXPECT_DOUBLE_EQ(m[U"abc"], 4.0);
}

TEST(Unigram, AtomsSurvivePruningOnSkewedCorpus) {
  // a few very frequent multi-syllable words drive some atom counts to zero
  static const char* syllables[] = {"ka", "lo", "mi", "ne", "tor", "ais", "un", "pe", "ri", "sto"};
  std::mt19937_64 rng(1);
  std::vector<std::string> words;
  for (int i = 0; i < 400; ++i) {
    std::string w;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) w += syllables[rng() % 10];
    words.push_back(w);
  }
  std::vector<double> weights;
  for (std::size_t i = 1; i <= words.size(); ++i) weights.push_back(1.0 / static_cast<double>(i));
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<std::string> docs;
  for (int l = 0; l < 800; ++l) {
    std::string line;
    const int n = 4 + static_cast<int>(rng() % 10);
    for (int k = 0; k < n; ++k) line += (k ? " " : "") + words[pick(rng)];
    docs.push_back(line);
  }
  for (std::size_t target : {20u, 60u, 120u}) {
    const auto r = train(docs, {.target_size = target});
    ASSERT_EQ(r.vocab.size(), target);
    const Encoder enc(r.vocab);
    for (std::size_t d = 0; d < docs.size(); d += 50) EXPECT_EQ(enc.decode(enc.encode(docs[d])), docs[d]);
  }
}
