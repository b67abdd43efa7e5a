#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "zipftok/classify.hpp"
#include "zipftok/manifest.hpp"
#include "zipftok/pollkit.hpp"
#include "zipftok/powerfit.hpp"
#include "zipftok/report.hpp"
#include "zipftok/svg.hpp"
#include "zipftok/tokenize.hpp"
#include "zipftok/zipfstats.hpp"

namespace fs = std::filesystem;
using namespace zipftok;
using tok::TokenId;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kIo = 3, kCompute = 4 };

struct CorpusFlags {
  std::string path;
  std::string format = "plain";
  bool lowercase = false;
  bool keep_headings = false;

  corpus::CorpusReader open() const {
    return corpus::open_corpus(path, corpus::parse_format(format), {{lowercase}, keep_headings});
  }
};

void add_corpus_flags(CLI::App* cmd, CorpusFlags& c, bool required) {
  auto* opt = cmd->add_option("--corpus", c.path, "UTF-8 corpus file");
  if (required) opt->required();
  cmd->add_option("--format", c.format, "plain | wikitext")->check(CLI::IsMember({"plain", "wikitext"}));
  cmd->add_flag("--lowercase", c.lowercase, "lowercase before training/encoding");
  cmd->add_flag("--keep-headings", c.keep_headings, "emit wikitext section titles as documents");
}

unsigned resolve_threads(int flag) {
  if (flag > 0) return static_cast<unsigned>(flag);
  if (const char* env = std::getenv("ZIPFTOK_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw IoError("error while writing '" + p.string() + "'");
}

template <class F>
void write_file(const fs::path& p, F&& body) {
  auto out = open_out(p);
  body(out);
  close_out(out, p);
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), 0);
  }
}

// ---- model directory -------------------------------------------------------

struct Model {
  tok::Vocabulary vocab;
  tok::MergeTable merges;
  nlohmann::json manifest;
};

Model load_model(const fs::path& dir, const std::string& algo_flag) {
  const auto vocab_path = dir / "vocab.tsv";
  if (!fs::exists(vocab_path)) throw ParameterError("no vocabulary at '" + vocab_path.string() + "'; run train first");
  Model m;
  if (fs::exists(dir / "manifest.json")) m.manifest = read_json(dir / "manifest.json");
  std::string algo = algo_flag;
  if (algo.empty()) algo = m.manifest.value("algorithm", "");
  if (algo.empty()) throw ParameterError("algorithm unknown: pass --algo or keep manifest.json next to the vocabulary");
  m.vocab = tok::load_vocabulary(vocab_path.string(), tok::parse_algorithm(algo));
  if (m.vocab.algorithm() == tok::Algorithm::Bpe) {
    const auto merges_path = dir / "merges.tsv";
    if (!fs::exists(merges_path)) throw ParameterError("BPE model lacks '" + merges_path.string() + "'");
    m.merges = tok::load_merges(merges_path.string());
  }
  return m;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
  std::string algo;
  std::size_t vocab_size = 0;
  std::string boundary;
  std::string out = "model";
  std::uint64_t seed = 0;
  int threads = 0;
  CorpusFlags corpus;
};

int cmd_train(const TrainFlags& f) {
  const auto algorithm = tok::parse_algorithm(f.algo);
  const auto boundary = f.boundary.empty()
                            ? (algorithm == tok::Algorithm::Unigram ? tok::Boundary::Word : tok::default_boundary(f.vocab_size))
                            : tok::parse_boundary(f.boundary);
  manifest::RunManifest man;
  man.started_at = manifest::utc_timestamp();
  auto reader = f.corpus.open();
  manifest::HashingSource source(reader);

  tok::Vocabulary vocab;
  tok::MergeTable merges;
  std::vector<std::string> warnings;
  std::size_t last_report = 0;
  const auto progress = [&](std::size_t size) {
    if (size >= last_report + 5000 || size == f.vocab_size) {
      std::cerr << "\rvocabulary " << size << " / " << f.vocab_size << std::flush;
      last_report = size;
    }
  };
  std::cerr << "training " << tok::to_string(algorithm) << " (" << tok::to_string(boundary) << " boundaries) on "
            << f.corpus.path << '\n';
  if (algorithm == tok::Algorithm::Unigram) {
    tok::UnigramOptions opt;
    opt.target_size = f.vocab_size;
    opt.boundary = boundary;
    auto r = tok::train_unigram(source, opt);
    vocab = std::move(r.vocab);
    warnings = std::move(r.warnings);
  } else {
    tok::PairTrainOptions opt{f.vocab_size, boundary, progress};
    auto r = algorithm == tok::Algorithm::Bpe ? tok::train_bpe(source, opt) : tok::train_wordpiece(source, opt);
    std::cerr << '\n';
    vocab = std::move(r.vocab);
    merges = std::move(r.merges);
    warnings = std::move(r.warnings);
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  const fs::path dir(f.out);
  write_file(dir / "vocab.tsv", [&](std::ostream& o) { tok::write_vocabulary(o, vocab); });
  if (algorithm != tok::Algorithm::Unigram) {
    write_file(dir / "merges.tsv", [&](std::ostream& o) { tok::write_merges(o, merges); });
  }
  man.corpus_path = f.corpus.path;
  man.corpus_sha256 = source.hex_digest();
  man.format = f.corpus.format;
  man.lowercase = f.corpus.lowercase;
  man.keep_headings = f.corpus.keep_headings;
  man.algorithm = std::string(tok::to_string(algorithm));
  man.target_size = f.vocab_size;
  man.vocabulary_size = vocab.size();
  man.boundary = std::string(tok::to_string(boundary));
  man.seed = f.seed;
  man.tool_version = ZIPFTOK_VERSION;
  man.finished_at = manifest::utc_timestamp();
  write_file(dir / "manifest.json", [&](std::ostream& o) { o << manifest::to_json(man).dump(2) << '\n'; });
  std::cerr << "wrote " << vocab.size() << " entries to " << (dir / "vocab.tsv").string() << '\n';
  return kOk;
}

// ---- freq ------------------------------------------------------------------

struct FreqFlags {
  std::string model = "model";
  std::string algo;
  std::string out = "rank_frequency.csv";
  std::uint64_t min_count = 1;
  bool use_train_frequency = false;
  int threads = 0;
  CorpusFlags corpus;
};

int cmd_freq(FreqFlags f) {
  const Model m = load_model(f.model, f.algo);
  stats::RankFrequencyTable table;
  if (f.use_train_frequency) {
    std::vector<std::uint64_t> counts;
    for (const auto& e : m.vocab.entries()) counts.push_back(static_cast<std::uint64_t>(std::llround(e.train_frequency)));
    table = stats::rank_frequency(counts, f.min_count);
  } else {
    if (f.corpus.path.empty()) {
      const auto& c = m.manifest.value("corpus", nlohmann::json::object());
      f.corpus.path = c.value("path", "");
      f.corpus.format = c.value("format", f.corpus.format);
      f.corpus.lowercase = c.value("lowercase", f.corpus.lowercase);
      f.corpus.keep_headings = c.value("keep_headings", f.corpus.keep_headings);
      if (f.corpus.path.empty()) throw ParameterError("no --corpus given and none recorded in the manifest");
    }
    const tok::Encoder encoder(m.vocab, m.vocab.algorithm() == tok::Algorithm::Bpe ? &m.merges : nullptr);
    auto reader = f.corpus.open();
    const unsigned threads = resolve_threads(f.threads);
    std::cerr << "encoding " << f.corpus.path << " with " << threads << " thread(s)\n";
    table = stats::rank_frequency(tok::token_frequencies(reader, encoder, threads), f.min_count);
  }
  write_file(f.out, [&](std::ostream& o) { stats::write_rank_frequency_csv(o, table); });
  std::cerr << "wrote " << table.size() << " ranks to " << f.out << '\n';
  return kOk;
}

// ---- fit -------------------------------------------------------------------

struct FitFlags {
  std::string input = "rank_frequency.csv";
  std::string out = "fit.json";
  bool additive = false;
  bool detect = false;
  double threshold = 10.0;
  std::uint64_t rank_min = 0, rank_max = 0;
};

int cmd_fit(const FitFlags& f) {
  const auto table = stats::load_rank_frequency_csv(f.input);
  report::FitReportOptions opt;
  opt.additive = f.additive;
  opt.detect = f.detect;
  opt.detect_threshold = f.threshold;
  if (f.rank_min || f.rank_max) {
    opt.single_range = fit::RankRange{std::max<std::uint64_t>(1, f.rank_min), f.rank_max ? f.rank_max : table.positive_size()};
  }
  const auto rep = report::build_fit_report(table, opt);
  write_file(f.out, [&](std::ostream& o) { o << rep.document.dump(2) << '\n'; });
  std::cerr << "preferred model: " << rep.document["model_preferred"].get<std::string>() << '\n';
  if (rep.error) {
    std::cerr << "error: " << *rep.error << " (partial report written to " << f.out << ")\n";
    return kCompute;
  }
  return kOk;
}

// ---- lengths / classify / sample ------------------------------------------

struct LengthFlags {
  std::string model = "model";
  std::string algo;
  std::string freq = "rank_frequency.csv";
  std::string weighting = "by-type";
  std::size_t bands = 0;
  std::string out = "lengths.csv";
  std::string bands_out = "bands.csv";
};

int cmd_lengths(const LengthFlags& f) {
  const Model m = load_model(f.model, f.algo);
  const auto table = stats::load_rank_frequency_csv(f.freq);
  std::map<TokenId, std::uint64_t> freqs;
  for (const auto& r : table.rows()) freqs[r.token_id] = r.frequency;
  const auto weighting = stats::parse_weighting(f.weighting);
  if (weighting == stats::Weighting::ByType) {
    for (TokenId id = 0; id < m.vocab.size(); ++id) freqs.try_emplace(id, 0);
  }
  const auto hist = stats::length_distribution(m.vocab, freqs, weighting);
  write_file(f.out, [&](std::ostream& o) { stats::write_length_histogram_csv(o, hist); });
  if (f.bands > 0) {
    const auto bands = stats::rank_band_lengths(table, m.vocab, f.bands);
    write_file(f.bands_out, [&](std::ostream& o) {
      o << "band,first_rank,last_rank,mean_length,median_length\n";
      o.precision(17);
      for (std::size_t i = 0; i < bands.size(); ++i) {
        o << i + 1 << ',' << bands[i].first_rank << ',' << bands[i].last_rank << ',' << bands[i].mean_length << ','
          << bands[i].median_length << '\n';
      }
    });
  }
  return kOk;
}

struct ClassifyFlags {
  std::string model = "model";
  std::string algo;
  std::string freq = "rank_frequency.csv";
  std::uint64_t breakpoint = 0;
  std::string report;
  std::string out = "classified.csv";
};

int cmd_classify(const ClassifyFlags& f) {
  const Model m = load_model(f.model, f.algo);
  const auto table = stats::load_rank_frequency_csv(f.freq);
  std::uint64_t bp = f.breakpoint;
  if (bp == 0) {
    if (f.report.empty()) throw ParameterError("pass --breakpoint or --report with a broken fit");
    const auto rep = read_json(f.report);
    for (const auto& fitj : rep.value("fits", nlohmann::json::array())) {
      if (fitj.value("model", "") == "broken") bp = fitj["breakpoint_rank"].get<std::uint64_t>();
    }
    if (bp == 0) throw ParameterError("report '" + f.report + "' holds no broken fit");
  }
  const auto cv = classify::classify_tokens(m.vocab, table, bp);
  write_file(f.out, [&](std::ostream& o) { classify::write_classified_csv(o, cv, m.vocab); });
  std::cerr << "classes are a rank/length proxy with breakpoint rank " << bp << '\n';
  return kOk;
}

struct SampleFlags {
  std::string model = "model";
  std::string algo;
  std::string freq = "rank_frequency.csv";
  std::size_t head = 50, tail = 50;
  std::uint32_t min_tail_length = 15;
  std::uint64_t seed = 0;
  std::string out = "sample.csv";
};

int cmd_sample(const SampleFlags& f) {
  const Model m = load_model(f.model, f.algo);
  const auto table = stats::load_rank_frequency_csv(f.freq);
  const auto s = classify::sample_head_tail(table, m.vocab, f.head, f.tail, f.min_tail_length, f.seed);
  write_file(f.out, [&](std::ostream& o) { classify::write_sample_csv(o, s, m.vocab); });
  return kOk;
}

// ---- poll ------------------------------------------------------------------

struct PollFlags {
  std::string input;
  std::string out = "poll";
};

int cmd_poll(const PollFlags& f) {
  const auto loaded = poll::load_poll(f.input);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  const auto& recs = loaded.records;
  const fs::path dir(f.out);
  const auto meanings = poll::length_vs_meanings(recs);
  write_file(dir / "meanings.csv", [&](std::ostream& o) { poll::write_binned_csv(o, meanings.mean_meanings); });
  write_file(dir / "meanings_heatmap.csv", [&](std::ostream& o) { poll::write_heatmap_csv(o, meanings); });
  write_file(dir / "restatement_distance.csv",
             [&](std::ostream& o) { poll::write_binned_csv(o, poll::restatement_distance(recs)); });
  write_file(dir / "contextualization_rate.csv",
             [&](std::ostream& o) { poll::write_binned_csv(o, poll::contextualization_rate(recs)); });
  write_file(dir / "context_distance.csv", [&](std::ostream& o) { poll::write_binned_csv(o, poll::context_distance(recs)); });
  std::cerr << recs.size() << " poll records analysed\n";
  return kOk;
}

// ---- plot / stats ----------------------------------------------------------

struct PlotFlags {
  std::string input = "rank_frequency.csv";
  std::string report;
  std::string out = "rank_frequency.svg";
  std::string title = "rank-frequency";
};

int cmd_plot(const PlotFlags& f) {
  const auto table = stats::load_rank_frequency_csv(f.input);
  svg::Overlay overlay;
  if (!f.report.empty()) overlay = svg::overlay_from_report(read_json(f.report));
  svg::PlotOptions opt;
  opt.title = f.title;
  if (table.positive_size() == 0) throw ParameterError("'" + f.input + "' has no rows with positive frequency");
  write_file(f.out, [&](std::ostream& o) { svg::write_plot(o, table, overlay, opt); });
  return kOk;
}

int cmd_stats(const CorpusFlags& c) {
  auto reader = c.open();
  const auto s = corpus::corpus_stats(reader);
  std::cout << nlohmann::json{{"documents", s.doc_count}, {"characters", s.char_count}, {"distinct_symbols", s.distinct_symbol_count}}
                   .dump(2)
            << '\n';
  return kOk;
}

int report_error(const std::exception& e, int code) {
  std::cerr << "zipftok: " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subword tokenizer training and rank-frequency analysis"};
  app.set_version_flag("--version", ZIPFTOK_VERSION);
  app.require_subcommand(1);

  TrainFlags train;
  auto* c_train = app.add_subcommand("train", "train a vocabulary");
  c_train->add_option("--algo", train.algo, "bpe | wordpiece | unigram")->required()->check(CLI::IsMember({"bpe", "wordpiece", "unigram"}));
  c_train->add_option("--vocab-size", train.vocab_size, "target vocabulary size")->required();
  c_train->add_option("--boundary", train.boundary, "document | word (default depends on size)")
      ->check(CLI::IsMember({"document", "word"}));
  c_train->add_option("--out", train.out, "output directory")->capture_default_str();
  c_train->add_option("--seed", train.seed, "recorded in the manifest");
  c_train->add_option("--threads", train.threads, "worker threads");
  add_corpus_flags(c_train, train.corpus, true);

  FreqFlags freq;
  auto* c_freq = app.add_subcommand("freq", "rank-frequency table of a trained vocabulary");
  c_freq->add_option("--model", freq.model, "directory written by train")->capture_default_str();
  c_freq->add_option("--algo", freq.algo, "override the algorithm recorded in the manifest");
  c_freq->add_option("--out", freq.out, "CSV output")->capture_default_str();
  c_freq->add_option("--min-count", freq.min_count, "drop tokens seen fewer times")->capture_default_str();
  c_freq->add_flag("--use-train-frequency", freq.use_train_frequency, "rank by training counts instead of re-encoding");
  c_freq->add_option("--threads", freq.threads, "worker threads (env ZIPFTOK_THREADS)");
  add_corpus_flags(c_freq, freq.corpus, false);

  FitFlags fitf;
  auto* c_fit = app.add_subcommand("fit", "fit single, broken and additive power laws");
  c_fit->add_option("--input", fitf.input, "rank-frequency CSV")->capture_default_str();
  c_fit->add_option("--out", fitf.out, "JSON report")->capture_default_str();
  c_fit->add_flag("--additive", fitf.additive, "also fit the two-component additive model");
  c_fit->add_flag("--detect", fitf.detect, "add a phase-transition verdict");
  c_fit->add_option("--threshold", fitf.threshold, "delta-BIC threshold for --detect")->capture_default_str();
  c_fit->add_option("--rank-min", fitf.rank_min, "first rank of the single fit");
  c_fit->add_option("--rank-max", fitf.rank_max, "last rank of the single fit");

  LengthFlags len;
  auto* c_len = app.add_subcommand("lengths", "token length histogram and rank-band lengths");
  c_len->add_option("--model", len.model)->capture_default_str();
  c_len->add_option("--algo", len.algo);
  c_len->add_option("--freq", len.freq, "rank-frequency CSV")->capture_default_str();
  c_len->add_option("--weighting", len.weighting)->check(CLI::IsMember({"by-type", "by-occurrence"}))->capture_default_str();
  c_len->add_option("--bands", len.bands, "number of rank bands (0 = none)");
  c_len->add_option("--out", len.out)->capture_default_str();
  c_len->add_option("--bands-out", len.bands_out)->capture_default_str();

  ClassifyFlags cls;
  auto* c_cls = app.add_subcommand("classify", "label tokens atom / pragma / idea");
  c_cls->add_option("--model", cls.model)->capture_default_str();
  c_cls->add_option("--algo", cls.algo);
  c_cls->add_option("--freq", cls.freq, "rank-frequency CSV written with --min-count 0")->capture_default_str();
  c_cls->add_option("--breakpoint", cls.breakpoint, "breakpoint rank");
  c_cls->add_option("--report", cls.report, "fit report supplying the breakpoint");
  c_cls->add_option("--out", cls.out)->capture_default_str();

  SampleFlags smp;
  auto* c_smp = app.add_subcommand("sample", "draw head and tail tokens for a poll");
  c_smp->add_option("--model", smp.model)->capture_default_str();
  c_smp->add_option("--algo", smp.algo);
  c_smp->add_option("--freq", smp.freq)->capture_default_str();
  c_smp->add_option("--head", smp.head)->capture_default_str();
  c_smp->add_option("--tail", smp.tail)->capture_default_str();
  c_smp->add_option("--min-tail-length", smp.min_tail_length)->capture_default_str();
  c_smp->add_option("--seed", smp.seed)->capture_default_str();
  c_smp->add_option("--out", smp.out)->capture_default_str();

  PollFlags pl;
  auto* c_poll = app.add_subcommand("poll", "analyse poll answers");
  c_poll->add_option("--input", pl.input, "poll CSV")->required();
  c_poll->add_option("--out", pl.out, "output directory")->capture_default_str();

  PlotFlags plot;
  auto* c_plot = app.add_subcommand("plot", "log-log SVG of a rank-frequency table");
  c_plot->add_option("--input", plot.input)->capture_default_str();
  c_plot->add_option("--report", plot.report, "fit report to overlay");
  c_plot->add_option("--out", plot.out)->capture_default_str();
  c_plot->add_option("--title", plot.title);

  CorpusFlags st;
  auto* c_stats = app.add_subcommand("stats", "document, character and symbol counts of a corpus");
  add_corpus_flags(c_stats, st, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_train) return cmd_train(train);
    if (*c_freq) return cmd_freq(freq);
    if (*c_fit) return cmd_fit(fitf);
    if (*c_len) return cmd_lengths(len);
    if (*c_cls) return cmd_classify(cls);
    if (*c_smp) return cmd_sample(smp);
    if (*c_poll) return cmd_poll(pl);
    if (*c_plot) return cmd_plot(plot);
    if (*c_stats) return cmd_stats(st);
  } catch (const ParameterError& e) {
    return report_error(e, kUsage);
  } catch (const ParseError& e) {
    return report_error(e, kUsage);
  } catch (const ValidationError& e) {
    return report_error(e, kUsage);
  } catch (const ConsistencyError& e) {
    return report_error(e, kUsage);
  } catch (const IoError& e) {
    return report_error(e, kIo);
  } catch (const DecodeError& e) {
    return report_error(e, kIo);
  } catch (const fs::filesystem_error& e) {
    return report_error(e, kIo);
  } catch (const Error& e) {
    return report_error(e, kCompute);
  } catch (const std::bad_alloc& e) {
    return report_error(e, kCompute);
  }
  return kUsage;
}
