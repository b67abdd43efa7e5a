#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <random>
#include <set>

#include <unicode/utf8.h>

#include "test_support.hpp"
#include "zipftok/corpus.hpp"

using namespace zipftok;
using namespace zipftok::corpus;
using zipftok::testing::temp_dir;
using zipftok::testing::write_text;

namespace {

std::vector<std::string> read_all(CorpusReader reader) {
  std::vector<std::string> out;
  Document d;
  std::uint64_t last = 0;
  bool first = true;
  while (reader.next(d)) {
    if (!first) EXPECT_GT(d.doc_id, last);
    first = false;
    last = d.doc_id;
    EXPECT_EQ(d.text.find('\r'), std::string::npos);
    out.push_back(d.text);
  }
  return out;
}

}  // namespace

TEST(Corpus, PlainLinesSplitsOnNewlines) {
  const auto p = write_text(temp_dir() / "a.txt", "a\nb\n");
  EXPECT_EQ(read_all(open_corpus(p, Format::PlainLines)), (std::vector<std::string>{"a", "b"}));
}

TEST(Corpus, EmptyFileIsEmptyStream) {
  const auto p = write_text(temp_dir() / "e.txt", "");
  EXPECT_TRUE(read_all(open_corpus(p, Format::PlainLines)).empty());
  EXPECT_TRUE(read_all(open_corpus(p, Format::WikitextMarkup)).empty());
}

TEST(Corpus, CrLfAndBlankLinesDropped) {
  const auto p = write_text(temp_dir() / "c.txt", "one\r\n\r\n  two  \r\nthree");
  EXPECT_EQ(read_all(open_corpus(p, Format::PlainLines)), (std::vector<std::string>{"one", "two", "three"}));
}

TEST(Corpus, WikitextHeadingStripped) {
  const auto p = write_text(temp_dir() / "w.txt", " = Title = \n\nBody text\n");
  EXPECT_EQ(read_all(open_corpus(p, Format::WikitextMarkup)), (std::vector<std::string>{"Body text"}));
}

// Ten lines laid out like the raw training split: headings with leading and
// trailing spaces, blank separator lines, one paragraph per line.
TEST(Corpus, WikitextExcerptMatchesHandParse) {
  const std::string excerpt =
      " \n"
      " = Harbour Lights = \n"
      " \n"
      " Harbour Lights is a 1998 album by a coastal folk band . \n"
      " It was recorded over six weeks in a converted boathouse . \n"
      " \n"
      " = = Reception = = \n"
      " \n"
      " Critics praised the 12 @-@ string arrangements . \n"
      " \n";
  const auto p = write_text(temp_dir() / "wiki.txt", excerpt);
  const std::vector<std::string> expected = {
      "Harbour Lights is a 1998 album by a coastal folk band .\nIt was recorded over six weeks in a converted boathouse .",
      "Critics praised the 12 @-@ string arrangements ."};
  EXPECT_EQ(read_all(open_corpus(p, Format::WikitextMarkup)), expected);

  const std::vector<std::string> with_headings = {
      "Harbour Lights",
      "Harbour Lights is a 1998 album by a coastal folk band .\nIt was recorded over six weeks in a converted boathouse .",
      "Reception", "Critics praised the 12 @-@ string arrangements ."};
  EXPECT_EQ(read_all(open_corpus(p, Format::WikitextMarkup, {{}, true})), with_headings);
}

TEST(Corpus, MissingFileIsIoError) {
  EXPECT_THROW(open_corpus("/nonexistent/zipftok/corpus.txt", Format::PlainLines), IoError);
}

TEST(Corpus, InvalidUtf8ReportsFileOffset) {
  const auto p = write_text(temp_dir() / "bad.txt", "ok line\nab\xff" "cd\n");
  auto reader = open_corpus(p, Format::PlainLines);
  Document d;
  ASSERT_TRUE(reader.next(d));
  try {
    reader.next(d);
    FAIL() << "expected a DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.byte_offset(), 10u);
  }
}

TEST(Normalize, CollapsesHorizontalWhitespace) {
  EXPECT_EQ(normalize("a  b"), "a b");
  EXPECT_EQ(normalize("a\t  b"), "a b");
  EXPECT_EQ(normalize("a\nb"), "a\nb");
}

TEST(Normalize, PreservesCaseByDefault) {
  EXPECT_EQ(normalize("Hello"), "Hello");
  EXPECT_EQ(normalize("Hello", {true}), "hello");
}

TEST(Normalize, ComposesCanonically) {
  EXPECT_EQ(normalize("é"), "é");
  EXPECT_EQ(normalize("Å"), "Å");
}

TEST(Normalize, Idempotent) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> pieces = {"a", "B", " ", "  ", "\t", "\n", "\xC3\xA9", "e\xCC\x81", "\xCC\x81",
                                           "\xC2\xA0", "\xE3\x80\x80", "\xC4\xB0", "\xC3\x9F", "\xE1\xBA\x9E", "x\xCC\xA3\xCC\x87", "\xE2\x84\xAB", "\xCE\xA3"};
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const int n = static_cast<int>(rng() % 12);
    for (int k = 0; k < n; ++k) s += pieces[rng() % pieces.size()];
    for (bool lower : {false, true}) {
      const auto once = normalize(s, {lower});
      EXPECT_EQ(normalize(once, {lower}), once) << "input: " << s;
    }
  }
}

TEST(CorpusStats, HandCounted) {
  VectorSource src({"ab", "a"});
  EXPECT_EQ(corpus_stats(src), (CorpusStats{2, 3, 2}));
  VectorSource none({});
  EXPECT_EQ(corpus_stats(none), (CorpusStats{0, 0, 0}));
}

TEST(CorpusStats, MatchesIndependentCounter) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> words = {"the", "zipf", "café", "naïve", "über", "日本",
                                          "\U0001F600", "law", "rank", "жук"};
  std::string file;
  while (file.size() < (1u << 20)) {
    const int n = 1 + static_cast<int>(rng() % 15);
    for (int k = 0; k < n; ++k) {
      if (k) file += ' ';
      file += words[rng() % words.size()];
    }
    file += '\n';
  }
  const auto p = write_text(temp_dir() / "mb.txt", file);

  // Oracle: ICU's U8_NEXT over the raw file, one document per line.
  std::uint64_t docs = 0, chars = 0;
  std::set<UChar32> symbols;
  const auto* bytes = reinterpret_cast<const uint8_t*>(file.data());
  const int32_t len = static_cast<int32_t>(file.size());
  for (int32_t i = 0; i < len;) {
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    if (c == '\n') {
      ++docs;
      continue;
    }
    ++chars;
    symbols.insert(c);
  }
  auto reader = open_corpus(p, Format::PlainLines);
  const auto stats = corpus_stats(reader);
  EXPECT_EQ(stats.doc_count, docs);
  EXPECT_EQ(stats.char_count, chars);
  EXPECT_EQ(stats.distinct_symbol_count, symbols.size());
}

TEST(CorpusStats, StreamsUnderAddressSpaceCap) {
  const auto p = temp_dir() / "big.txt";
  {
    std::ofstream out(p, std::ios::binary);
    const std::string line(999, 'x');
    for (int i = 0; i < 96 * 1024; ++i) out << line << '\n';
  }
  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    std::ifstream status("/proc/self/status");
    std::string key;
    long vm_kb = 0;
    while (status >> key) {
      if (key == "VmSize:") {
        status >> vm_kb;
        break;
      }
    }
    const rlim_t cap = static_cast<rlim_t>(vm_kb + 48 * 1024) * 1024;
    const rlimit lim{cap, cap};
    setrlimit(RLIMIT_AS, &lim);
    try {
      auto reader = open_corpus(p, Format::PlainLines);
      const auto s = corpus_stats(reader);
      _exit(s.doc_count == 96 * 1024 && s.char_count == 96ull * 1024 * 999 ? 0 : 1);
    } catch (...) {
      _exit(2);
    }
  }
  int status = 0;
  waitpid(pid, &status, 0);
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  std::filesystem::remove(p);
}

TEST(CorpusStats, DocOrderDeterministic) {
  const auto p = write_text(temp_dir() / "d.txt", "c\nb\na\nb\n");
  EXPECT_EQ(read_all(open_corpus(p, Format::PlainLines)), read_all(open_corpus(p, Format::PlainLines)));
}
