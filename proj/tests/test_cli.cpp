#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fit_fixtures.hpp"
#include "test_support.hpp"
#include "zipftok/corpus.hpp"
#include "zipftok/tokenize.hpp"
#include "zipftok/zipfstats.hpp"

namespace fs = std::filesystem;
using namespace zipftok;
using zipftok::testing::read_text;
using zipftok::testing::temp_dir;
using zipftok::testing::write_text;

namespace {

struct Run {
  int code;
  std::string out, err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run run(const fs::path& dir, const std::vector<std::string>& args) {
  std::string cmd = "cd " + quote(dir.string()) + " && " + quote(ZIPFTOK_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >stdout.txt 2>stderr.txt";
  const int status = std::system(cmd.c_str());
  Run r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(dir / "stdout.txt"), read_text(dir / "stderr.txt")};
  return r;
}

// Zipf-distributed words over a synthetic lexicon.
std::string synthetic_corpus(std::size_t lines, std::uint64_t seed) {
  static const char* syllables[] = {"ka", "lo", "mi", "ne", "tor", "ais", "un", "pe", "ri", "sto"};
  std::mt19937_64 rng(seed);
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
  std::string text;
  for (std::size_t l = 0; l < lines; ++l) {
    const int n = 4 + static_cast<int>(rng() % 10);
    for (int k = 0; k < n; ++k) text += (k ? " " : "") + words[pick(rng)];
    text += '\n';
  }
  return text;
}

std::string write_csv(const stats::RankFrequencyTable& t) {
  std::ostringstream o;
  stats::write_rank_frequency_csv(o, t);
  return o.str();
}

}  // namespace

TEST(CliTrain, HappyPathAndDeterminism) {
  const auto dir = temp_dir();
  write_text(dir / "c.txt", synthetic_corpus(800, 1));
  for (const std::string algo : {"bpe", "wordpiece", "unigram"}) {
    const auto a = run(dir, {"train", "--algo", algo, "--vocab-size", "120", "--corpus", "c.txt", "--out", algo + "1"});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_TRUE(a.out.empty());
    EXPECT_FALSE(a.err.empty());
    const auto b = run(dir, {"train", "--algo", algo, "--vocab-size", "120", "--corpus", "c.txt", "--out", algo + "2"});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(read_text(dir / (algo + "1") / "vocab.tsv"), read_text(dir / (algo + "2") / "vocab.tsv")) << algo;
    EXPECT_EQ(fs::exists(dir / (algo + "1") / "merges.tsv"), algo != "unigram");
    const auto m = nlohmann::json::parse(read_text(dir / (algo + "1") / "manifest.json"));
    EXPECT_EQ(m["algorithm"], algo);
    EXPECT_EQ(m["target_size"], 120);
    EXPECT_EQ(m["corpus"]["sha256"].get<std::string>().size(), 64u);
  }
  EXPECT_EQ(read_text(dir / "bpe1" / "merges.tsv"), read_text(dir / "bpe2" / "merges.tsv"));
}

TEST(CliTrain, ManifestDigestTracksCorpusContent) {
  const auto dir = temp_dir();
  write_text(dir / "a.txt", "one two three\nfour\n");
  write_text(dir / "b.txt", "one  two three\r\nfour\n");
  write_text(dir / "c.txt", "one two three\nfive\n");
  for (const char* c : {"a", "b", "c"}) {
    ASSERT_EQ(run(dir, {"train", "--algo", "bpe", "--vocab-size", "12", "--corpus", std::string(c) + ".txt", "--out", c}).code, 0);
  }
  const auto digest = [&](const char* c) {
    return nlohmann::json::parse(read_text(dir / c / "manifest.json"))["corpus"]["sha256"].get<std::string>();
  };
  EXPECT_EQ(digest("a"), digest("b"));
  EXPECT_NE(digest("a"), digest("c"));
}

TEST(CliTrain, Errors) {
  const auto dir = temp_dir();
  write_text(dir / "c.txt", synthetic_corpus(50, 2));
  const auto small = run(dir, {"train", "--algo", "bpe", "--vocab-size", "10", "--corpus", "c.txt"});
  EXPECT_EQ(small.code, 2);
  EXPECT_NE(small.err.find("alphabet"), std::string::npos) << small.err;
  EXPECT_EQ(run(dir, {"train", "--algo", "lstm", "--vocab-size", "100", "--corpus", "c.txt"}).code, 2);
  EXPECT_EQ(run(dir, {"train", "--vocab-size", "100", "--corpus", "c.txt"}).code, 2);
  EXPECT_EQ(run(dir, {"train", "--algo", "bpe", "--vocab-size", "100", "--corpus", "missing.txt"}).code, 3);
  write_text(dir / "bad.txt", "ok\n\xFF\xFE\n");
  EXPECT_EQ(run(dir, {"train", "--algo", "bpe", "--vocab-size", "100", "--corpus", "bad.txt"}).code, 3);
  EXPECT_EQ(run(dir, {"frobnicate"}).code, 2);
}

TEST(CliFreq, MatchesLibraryAndHonoursMinCount) {
  const auto dir = temp_dir();
  write_text(dir / "c.txt", synthetic_corpus(600, 3));
  ASSERT_EQ(run(dir, {"train", "--algo", "bpe", "--vocab-size", "150", "--corpus", "c.txt"}).code, 0);
  const auto r = run(dir, {"freq", "--min-count", "5", "--out", "rf5.csv", "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run(dir, {"freq", "--out", "rf1.csv", "--threads", "1"}).code, 0);

  const auto vocab = tok::load_vocabulary((dir / "model" / "vocab.tsv").string(), tok::Algorithm::Bpe);
  const auto merges = tok::load_merges((dir / "model" / "merges.tsv").string());
  const tok::Encoder encoder(vocab, &merges);
  auto reader = corpus::open_corpus((dir / "c.txt").string(), corpus::Format::PlainLines);
  const auto freqs = tok::token_frequencies(reader, encoder, 1);
  EXPECT_EQ(read_text(dir / "rf5.csv"), write_csv(stats::rank_frequency(freqs, 5)));
  EXPECT_EQ(read_text(dir / "rf1.csv"), write_csv(stats::rank_frequency(freqs, 1)));
}

TEST(CliFreq, Errors) {
  const auto dir = temp_dir();
  EXPECT_EQ(run(dir, {"freq", "--model", "nowhere", "--corpus", "c.txt"}).code, 2);
  write_text(dir / "c.txt", synthetic_corpus(100, 4));
  ASSERT_EQ(run(dir, {"train", "--algo", "bpe", "--vocab-size", "60", "--corpus", "c.txt"}).code, 0);
  fs::remove(dir / "c.txt");
  EXPECT_EQ(run(dir, {"freq"}).code, 3);
}

TEST(CliFit, SingleAndBrokenFixtures) {
  const auto dir = temp_dir();
  write_text(dir / "single.csv", write_csv(fixtures::table(fixtures::power_law(1e15, 1.0, 3000))));
  write_text(dir / "broken.csv", write_csv(fixtures::table(fixtures::broken_power_law(20'000, 2'000, 0.9, 1.6, 0.05, 2024))));
  ASSERT_EQ(run(dir, {"fit", "--input", "single.csv", "--out", "single.json", "--detect"}).code, 0);
  const auto r = run(dir, {"fit", "--input", "broken.csv", "--out", "broken.json", "--detect", "--additive"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto single = nlohmann::json::parse(read_text(dir / "single.json"));
  const auto broken = nlohmann::json::parse(read_text(dir / "broken.json"));
  EXPECT_EQ(single["model_preferred"], "single");
  EXPECT_EQ(broken["model_preferred"], "broken");
  const auto bp = broken["phase_transition"]["breakpoint_rank"].get<std::uint64_t>();
  EXPECT_GE(bp, 1600u);
  EXPECT_LE(bp, 2500u);
  ASSERT_EQ(run(dir, {"fit", "--input", "single.csv", "--out", "range.json", "--rank-min", "10", "--rank-max", "1000"}).code, 0);
  EXPECT_EQ(nlohmann::json::parse(read_text(dir / "range.json"))["fits"][0]["fit_range"], nlohmann::json::array({10, 1000}));
}

TEST(CliFit, Errors) {
  const auto dir = temp_dir();
  write_text(dir / "bad.csv", "rank,token_id,frequency\n1,0,5\n2,1\n");
  const auto bad = run(dir, {"fit", "--input", "bad.csv"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("line 3"), std::string::npos) << bad.err;
  EXPECT_EQ(run(dir, {"fit", "--input", "missing.csv"}).code, 3);
  write_text(dir / "short.csv", "rank,token_id,frequency\n1,0,5\n2,1,4\n");
  EXPECT_EQ(run(dir, {"fit", "--input", "short.csv"}).code, 2);
  write_text(dir / "ok.csv", write_csv(fixtures::table(fixtures::power_law(1e9, 1.0, 50))));
  EXPECT_EQ(run(dir, {"fit", "--input", "ok.csv", "--rank-min", "40", "--rank-max", "60"}).code, 2);
}

TEST(CliPlot, StructureAndErrors) {
  const auto dir = temp_dir();
  write_text(dir / "three.csv", "rank,token_id,frequency\n1,0,100\n2,1,50\n3,2,10\n");
  ASSERT_EQ(run(dir, {"plot", "--input", "three.csv", "--out", "three.svg"}).code, 0);
  const auto three = read_text(dir / "three.svg");
  std::size_t circles = 0;
  for (auto p = three.find("<circle"); p != std::string::npos; p = three.find("<circle", p + 1)) ++circles;
  EXPECT_EQ(circles, 3u);

  write_text(dir / "broken.csv", write_csv(fixtures::table(fixtures::broken_power_law(5000, 500, 0.9, 1.6, 0.05, 9))));
  ASSERT_EQ(run(dir, {"fit", "--input", "broken.csv", "--out", "fit.json"}).code, 0);
  ASSERT_EQ(run(dir, {"plot", "--input", "broken.csv", "--report", "fit.json", "--out", "b.svg"}).code, 0);
  const auto b = read_text(dir / "b.svg");
  EXPECT_NE(b.find("class=\"breakpoint\""), std::string::npos);

  write_text(dir / "empty.csv", "rank,token_id,frequency\n");
  EXPECT_EQ(run(dir, {"plot", "--input", "empty.csv"}).code, 2);
}

TEST(CliLengths, HappyPathErrorsAndDeterminism) {
  const auto dir = temp_dir();
  write_text(dir / "c.txt", synthetic_corpus(300, 5));
  ASSERT_EQ(run(dir, {"train", "--algo", "wordpiece", "--vocab-size", "100", "--corpus", "c.txt"}).code, 0);
  ASSERT_EQ(run(dir, {"freq"}).code, 0);
  ASSERT_EQ(run(dir, {"lengths", "--bands", "4", "--out", "l1.csv", "--bands-out", "b1.csv"}).code, 0);
  ASSERT_EQ(run(dir, {"lengths", "--bands", "4", "--out", "l2.csv", "--bands-out", "b2.csv"}).code, 0);
  EXPECT_EQ(read_text(dir / "l1.csv"), read_text(dir / "l2.csv"));
  EXPECT_EQ(read_text(dir / "b1.csv"), read_text(dir / "b2.csv"));
  EXPECT_EQ(read_text(dir / "b1.csv").rfind("band,first_rank,last_rank,mean_length,median_length\n", 0), 0u);
  EXPECT_EQ(run(dir, {"lengths", "--weighting", "by-weight"}).code, 2);
  EXPECT_EQ(run(dir, {"lengths", "--bands", "100000"}).code, 2);
}

TEST(CliClassifyAndSample, HappyPathErrorsAndDeterminism) {
  const auto dir = temp_dir();
  write_text(dir / "c.txt", synthetic_corpus(600, 6));
  ASSERT_EQ(run(dir, {"train", "--algo", "bpe", "--vocab-size", "200", "--corpus", "c.txt"}).code, 0);
  ASSERT_EQ(run(dir, {"freq", "--min-count", "0"}).code, 0);
  const auto c = run(dir, {"classify", "--breakpoint", "50"});
  ASSERT_EQ(c.code, 0) << c.err;
  const auto classified = read_text(dir / "classified.csv");
  EXPECT_EQ(classified.rfind("token_id,surface,rank,char_length,class\n", 0), 0u);
  EXPECT_NE(classified.find(",pragma\n"), std::string::npos);
  EXPECT_NE(classified.find(",idea\n"), std::string::npos);
  EXPECT_EQ(run(dir, {"classify"}).code, 2);
  EXPECT_EQ(run(dir, {"classify", "--breakpoint", "0"}).code, 2);

  ASSERT_EQ(run(dir, {"sample", "--head", "5", "--tail", "5", "--min-tail-length", "3", "--seed", "4", "--out", "s1.csv"}).code, 0);
  ASSERT_EQ(run(dir, {"sample", "--head", "5", "--tail", "5", "--min-tail-length", "3", "--seed", "4", "--out", "s2.csv"}).code, 0);
  EXPECT_EQ(read_text(dir / "s1.csv"), read_text(dir / "s2.csv"));
  const auto infeasible = run(dir, {"sample", "--tail", "5", "--min-tail-length", "500"});
  EXPECT_EQ(infeasible.code, 2);
  EXPECT_NE(infeasible.err.find("only"), std::string::npos) << infeasible.err;
}

TEST(CliPoll, HappyPathErrorsAndDeterminism) {
  const auto dir = temp_dir();
  write_text(dir / "poll.csv",
             "respondent_id,token,can_reformulate,restatement,meanings,context\n"
             "r1,the,yes,a,4,the cat\n"
             "r2,ing,no,,2,\n"
             "r1,nevertheless,yes,however,1,nevertheless true\n");
  ASSERT_EQ(run(dir, {"poll", "--input", "poll.csv", "--out", "p1"}).code, 0);
  ASSERT_EQ(run(dir, {"poll", "--input", "poll.csv", "--out", "p2"}).code, 0);
  for (const char* f : {"meanings.csv", "meanings_heatmap.csv", "restatement_distance.csv", "contextualization_rate.csv",
                        "context_distance.csv"}) {
    EXPECT_EQ(read_text(dir / "p1" / f), read_text(dir / "p2" / f)) << f;
  }
  EXPECT_EQ(read_text(dir / "p1" / "contextualization_rate.csv"), "length_bin,value,count\n3,0.5,2\n12,1,1\n");
  write_text(dir / "bad.csv",
             "respondent_id,token,can_reformulate,restatement,meanings,context\nr1,the,no,a,4,\n");
  const auto bad = run(dir, {"poll", "--input", "bad.csv"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("restatement"), std::string::npos) << bad.err;
  EXPECT_EQ(run(dir, {"poll", "--input", "none.csv"}).code, 3);
}

TEST(CliPipeline, EndToEndByteIdentical) {
  const auto dir = temp_dir();
  write_text(dir / "c.txt", synthetic_corpus(1500, 7));
  for (const char* d : {"run1", "run2"}) {
    fs::create_directories(dir / d);
    const auto p = [&](const char* f) { return std::string(d) + "/" + f; };
    ASSERT_EQ(run(dir, {"train", "--algo", "bpe", "--vocab-size", "300", "--corpus", "c.txt", "--seed", "3", "--out", p("m")}).code, 0);
    ASSERT_EQ(run(dir, {"freq", "--model", p("m"), "--out", p("rf.csv")}).code, 0);
    ASSERT_EQ(run(dir, {"fit", "--input", p("rf.csv"), "--out", p("fit.json"), "--additive", "--detect"}).code, 0);
    ASSERT_EQ(run(dir, {"plot", "--input", p("rf.csv"), "--report", p("fit.json"), "--out", p("plot.svg")}).code, 0);
  }
  for (const char* f : {"m/vocab.tsv", "m/merges.tsv", "rf.csv", "fit.json", "plot.svg"}) {
    EXPECT_EQ(read_text(dir / "run1" / f), read_text(dir / "run2" / f)) << f;
  }
}

TEST(CliStats, PrintsJson) {
  const auto dir = temp_dir();
  write_text(dir / "c.txt", "ab c\n\nd\n");
  const auto r = run(dir, {"stats", "--corpus", "c.txt"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["documents"], 2);
}
