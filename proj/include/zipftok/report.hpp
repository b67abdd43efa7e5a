#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zipftok/powerfit.hpp"

namespace zipftok::report {

using nlohmann::json;

namespace detail {

inline json log10_amplitude(double ln_c) {
  if (!std::isfinite(ln_c)) return nullptr;
  return ln_c / std::log(10.0);
}

inline json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

/// Total sum of squares of ln f over ranks [1, n].
inline double log_tss(const stats::RankFrequencyTable& rft, std::size_t n) {
  double mean = 0;
  for (std::size_t r = 1; r <= n; ++r) mean += std::log(static_cast<double>(rft.at_rank(r).frequency));
  mean /= static_cast<double>(n);
  double tss = 0;
  for (std::size_t r = 1; r <= n; ++r) {
    const double d = std::log(static_cast<double>(rft.at_rank(r).frequency)) - mean;
    tss += d * d;
  }
  return tss;
}

}  // namespace detail

inline json to_json(const fit::ZipfFit& f) {
  return {{"model", "single"},
          {"exponents", {f.exponent}},
          {"amplitudes", {detail::log10_amplitude(f.log_amplitude)}},
          {"breakpoint_rank", nullptr},
          {"rss", f.rss},
          {"r_squared", f.r_squared},
          {"delta_bic", nullptr},
          {"fit_range", {f.fit_range.lo, f.fit_range.hi}},
          {"method", fit::to_string(f.method)}};
}

inline json to_json(const fit::BrokenZipfFit& b, double tss) {
  return {{"model", "broken"},
          {"exponents", {b.head.exponent, b.tail.exponent}},
          {"amplitudes", {detail::log10_amplitude(b.head.log_amplitude), detail::log10_amplitude(b.tail.log_amplitude)}},
          {"breakpoint_rank", b.breakpoint_rank},
          {"rss", b.total_rss},
          {"r_squared", fit::detail::r_squared(b.total_rss, tss)},
          {"delta_bic", b.delta_bic},
          {"fit_range", {b.single.fit_range.lo, b.single.fit_range.hi}},
          {"method", fit::to_string(fit::Method::LogLogLeastSquares)}};
}

inline json to_json(const fit::AdditiveFit& a, double tss, std::size_t n) {
  return {{"model", "additive"},
          {"exponents", {a.exponent1, a.exponent2}},
          {"amplitudes", {detail::log10_amplitude(a.log_amplitude1), detail::log10_amplitude(a.log_amplitude2)}},
          {"breakpoint_rank", nullptr},
          {"rss", a.rss},
          {"r_squared", fit::detail::r_squared(a.rss, tss)},
          {"delta_bic", nullptr},
          {"fit_range", {1, n}},
          {"method", "log-space-nonlinear-least-squares"},
          {"converged", a.converged}};
}

struct FitReportOptions {
  std::optional<fit::RankRange> single_range;  // whole positive range when absent
  bool additive = false;
  bool detect = false;
  double detect_threshold = 10.0;
};

/// Report assembled so far plus the first computation error, if any.
struct FitReport {
  json document = json::object();
  std::optional<std::string> error;
};

/// Runs the configured fits. ParameterError propagates; computation
/// failures are recorded and the partial report is returned.
inline FitReport build_fit_report(const stats::RankFrequencyTable& rft, const FitReportOptions& opt = {}) {
  const std::size_t n = rft.positive_size();
  if (n < 3) throw ParameterError("rank-frequency table has fewer than 3 positive rows");
  FitReport rep;
  auto& doc = rep.document;
  doc["ranks"] = n;
  doc["total_frequency"] = rft.total();
  doc["fits"] = json::array();
  const auto range = opt.single_range.value_or(fit::RankRange{1, n});
  doc["fits"].push_back(to_json(fit::fit_zipf_ls(rft, range)));
  try {
    doc["fits"].push_back(to_json(fit::fit_zipf_mle(rft, range.lo)));
  } catch (const DegenerateDataError& e) {
    rep.error = e.what();
  }
  const double tss = detail::log_tss(rft, n);
  // The broken and additive fits need 10 rows; shorter tables report the single fits only.
  std::optional<fit::BrokenZipfFit> broken;
  if (n >= 10) {
    broken = fit::fit_broken_zipf(rft);
    doc["fits"].push_back(to_json(*broken, tss));
  }
  doc["model_preferred"] = broken && broken->delta_bic > 0 ? "broken" : "single";
  if (opt.detect) {
    const bool present = broken && broken->delta_bic > opt.detect_threshold;
    doc["phase_transition"] = {{"detected", present},
                               {"threshold", detail::finite_or_null(opt.detect_threshold)},
                               {"breakpoint_rank", present ? json(broken->breakpoint_rank) : json(nullptr)},
                               {"delta_bic", broken ? json(broken->delta_bic) : json(nullptr)}};
  }
  if (opt.additive && n >= 10) {
    try {
      doc["fits"].push_back(to_json(fit::fit_additive_mixture(rft), tss, n));
    } catch (const fit::FitError& e) {
      doc["fits"].push_back(to_json(e.partial(), tss, n));
      if (!rep.error) rep.error = e.what();
    }
  }
  if (rep.error) doc["error"] = *rep.error;
  return rep;
}

}  // namespace zipftok::report
