#pragma once

// Single and two-regime Zipf fits on rank-frequency tables. All fits work on
// x = ln(rank), y = ln(frequency); the model f(r) = C * r^-s is the line
// y = ln C - s x.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "zipftok/errors.hpp"
#include "zipftok/zipfstats.hpp"

namespace zipftok::fit {

using stats::RankFrequencyTable;

struct RankRange {
  std::uint64_t lo = 1;
  std::uint64_t hi = 1;

  friend bool operator==(const RankRange&, const RankRange&) = default;
};

enum class Method { LogLogLeastSquares, DiscreteMle };

inline const char* to_string(Method m) {
  return m == Method::LogLogLeastSquares ? "log-log-least-squares" : "discrete-mle";
}

struct ZipfFit {
  double exponent = 0;       // s
  double log_amplitude = 0;  // ln C
  RankRange fit_range;
  double rss = 0;  // log-log residual sum of squares
  double r_squared = 1;
  Method method = Method::LogLogLeastSquares;
  std::size_t points = 0;
};

struct BrokenZipfFit {
  std::uint64_t breakpoint_rank = 0;
  ZipfFit head;  // ranks [1, r*]
  ZipfFit tail;  // ranks (r*, N]
  double total_rss = 0;
  ZipfFit single;
  double delta_bic = 0;  // BIC(single) - BIC(broken); positive favours the break
};

namespace detail {

struct Line {
  double slope = 0;
  double intercept = 0;
  double rss = 0;
  double tss = 0;
};

// Two-pass ordinary least squares. A single point gets slope 0.
inline Line fit_line(const double* x, const double* y, std::size_t n) {
  Line l;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    l.tss += dy * dy;
  }
  l.slope = sxx > 0 ? sxy / sxx : 0.0;
  l.intercept = my - l.slope * mx;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (l.intercept + l.slope * x[i]);
    l.rss += e * e;
  }
  if (n > 0 && std::all_of(y, y + n, [&](double v) { return v == y[0]; })) {
    l.slope = 0, l.intercept = y[0], l.rss = 0, l.tss = 0;
  }
  return l;
}

inline double r_squared(double rss, double tss) {
  if (tss <= 0) return 1.0;
  return std::clamp(1.0 - rss / tss, 0.0, 1.0);
}

inline ZipfFit to_fit(const Line& l, RankRange range, std::size_t n) {
  ZipfFit f;
  f.exponent = 0.0 - l.slope;
  f.log_amplitude = l.intercept;
  f.fit_range = range;
  f.rss = l.rss;
  f.r_squared = r_squared(l.rss, l.tss);
  f.method = Method::LogLogLeastSquares;
  f.points = n;
  return f;
}

struct LogSeries {
  std::vector<double> x, y;
};

inline LogSeries log_series(const RankFrequencyTable& rft, std::size_t rows) {
  LogSeries s;
  s.x.reserve(rows);
  s.y.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& r = rft.rows()[i];
    s.x.push_back(std::log(static_cast<double>(r.rank)));
    s.y.push_back(std::log(static_cast<double>(r.frequency)));
  }
  return s;
}

// Residual variance floor (residual sd 1e-9 in log space) so exact data
// does not send ln(rss) to -infinity.
inline double bic(double rss, std::size_t n, int params) {
  const double nn = static_cast<double>(n);
  const double floored = std::max(rss, nn * 1e-18);
  return nn * std::log(floored / nn) + params * std::log(nn);
}

// Prefix sums of centred data for O(1) segment RSS during the breakpoint scan.
class SegmentSums {
 public:
  SegmentSums(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    sx_.assign(n + 1, 0), sy_.assign(n + 1, 0), sxx_.assign(n + 1, 0), sxy_.assign(n + 1, 0), syy_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const long double dx = x[i] - mx, dy = y[i] - my;
      sx_[i + 1] = sx_[i] + dx;
      sy_[i + 1] = sy_[i] + dy;
      sxx_[i + 1] = sxx_[i] + dx * dx;
      sxy_[i + 1] = sxy_[i] + dx * dy;
      syy_[i + 1] = syy_[i] + dy * dy;
    }
  }

  // RSS of the OLS line over rows [lo, hi).
  double rss(std::size_t lo, std::size_t hi) const {
    const long double n = hi - lo;
    if (n < 2) return 0;
    const long double sx = sx_[hi] - sx_[lo], sy = sy_[hi] - sy_[lo];
    const long double cxx = sxx_[hi] - sxx_[lo] - sx * sx / n;
    const long double cxy = sxy_[hi] - sxy_[lo] - sx * sy / n;
    const long double cyy = syy_[hi] - syy_[lo] - sy * sy / n;
    const long double r = cxx > 0 ? cyy - cxy * cxy / cxx : cyy;
    return static_cast<double>(std::max<long double>(r, 0));
  }

 private:
  std::vector<long double> sx_, sy_, sxx_, sxy_, syy_;
};

}  // namespace detail

/// Ordinary least squares of ln(frequency) on ln(rank) over `range`.
inline ZipfFit fit_zipf_ls(const RankFrequencyTable& rft, RankRange range) {
  if (range.lo < 1 || range.hi > rft.size() || range.lo > range.hi) {
    throw ParameterError("fit range [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) +
                         "] outside table of " + std::to_string(rft.size()) + " rows");
  }
  const std::size_t n = range.hi - range.lo + 1;
  if (n < 3) throw ParameterError("fit range needs at least 3 ranks");
  std::vector<double> x, y;
  for (std::uint64_t r = range.lo; r <= range.hi; ++r) {
    const auto f = rft.at_rank(r).frequency;
    if (f == 0) throw ParameterError("zero frequency at rank " + std::to_string(r) + " inside fit range");
    x.push_back(std::log(static_cast<double>(r)));
    y.push_back(std::log(static_cast<double>(f)));
  }
  return detail::to_fit(detail::fit_line(x.data(), y.data(), n), range, n);
}

/// Discrete power-law maximum likelihood over ranks r_min..N with
/// P(r) = r^-s / sum_{k=r_min}^{N} k^-s, weighted by the table frequencies.
inline ZipfFit fit_zipf_mle(const RankFrequencyTable& rft, std::uint64_t r_min = 1) {
  if (rft.empty()) throw ParameterError("cannot fit an empty table");
  if (r_min < 1 || r_min > rft.size()) throw ParameterError("r_min outside the table");
  const std::uint64_t n_max = rft.size();
  std::vector<double> logr;
  double mass = 0, weighted = 0;
  std::size_t occupied = 0;
  for (std::uint64_t r = r_min; r <= n_max; ++r) {
    const double lr = std::log(static_cast<double>(r));
    logr.push_back(lr);
    const auto f = static_cast<double>(rft.at_rank(r).frequency);
    mass += f;
    weighted += f * lr;
    occupied += f > 0;
  }
  if (occupied < 2) throw DegenerateDataError("all frequency mass sits at one rank; the exponent is unbounded");
  const double target = weighted / mass;

  // Mean of ln r under the model; decreasing in s, so the score has one root.
  const auto model_mean = [&](double s) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double lr : logr) mx = std::max(mx, -s * lr);
    double z = 0, m = 0;
    for (double lr : logr) {
      const double w = std::exp(-s * lr - mx);
      z += w;
      m += w * lr;
    }
    return m / z;
  };
  const auto score = [&](double s) { return model_mean(s) - target; };
  constexpr double lo = -20.0, hi = 60.0;
  if (score(lo) < 0 || score(hi) > 0) throw DegenerateDataError("maximum-likelihood exponent lies outside [-20, 60]");
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(score, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  const double s = 0.5 * (a + b);

  double log_z_max = -std::numeric_limits<double>::infinity();
  for (double lr : logr) log_z_max = std::max(log_z_max, -s * lr);
  double z = 0;
  for (double lr : logr) z += std::exp(-s * lr - log_z_max);
  const double log_z = log_z_max + std::log(z);

  ZipfFit fit;
  fit.exponent = s;
  fit.log_amplitude = std::log(mass) - log_z;
  fit.fit_range = {r_min, n_max};
  fit.method = Method::DiscreteMle;
  double my = 0;
  std::size_t k = 0;
  for (std::uint64_t r = r_min; r <= n_max; ++r) {
    const auto f = rft.at_rank(r).frequency;
    if (f == 0) continue;
    my += std::log(static_cast<double>(f));
    ++k;
  }
  my /= static_cast<double>(k);
  double rss = 0, tss = 0;
  for (std::uint64_t r = r_min; r <= n_max; ++r) {
    const auto f = rft.at_rank(r).frequency;
    if (f == 0) continue;
    const double y = std::log(static_cast<double>(f));
    const double e = y - (fit.log_amplitude - s * logr[r - r_min]);
    rss += e * e;
    tss += (y - my) * (y - my);
  }
  fit.rss = rss;
  fit.r_squared = detail::r_squared(rss, tss);
  fit.points = k;
  return fit;
}

/// Two independent log-log lines split at the breakpoint minimizing the
/// total RSS. Exhaustive over every breakpoint for up to 1,000 rows;
/// otherwise 200 log-spaced candidates refined exhaustively between the
/// neighbours of the best one. Ties go to the smaller breakpoint.
inline BrokenZipfFit fit_broken_zipf(const RankFrequencyTable& rft) {
  const std::size_t n = rft.positive_size();
  if (n < 10) throw ParameterError("broken fit needs at least 10 rows with positive frequency, got " + std::to_string(n));
  const auto s = detail::log_series(rft, n);
  const auto seg = [&](std::size_t lo, std::size_t hi) {
    return detail::fit_line(s.x.data() + lo, s.y.data() + lo, hi - lo);
  };

  // Breakpoint r* puts rows [0, r*) in the head and [r*, n) in the tail.
  std::size_t best = 0;
  double best_rss = std::numeric_limits<double>::infinity();
  const auto consider = [&](std::size_t r, double rss) {
    if (rss < best_rss || (rss == best_rss && r < best)) best = r, best_rss = rss;
  };
  if (n <= 1000) {
    for (std::size_t r = 2; r <= n - 1; ++r) consider(r, seg(0, r).rss + seg(r, n).rss);
  } else {
    const detail::SegmentSums sums(s.x, s.y);
    const auto total = [&](std::size_t r) { return sums.rss(0, r) + sums.rss(r, n); };
    std::vector<std::size_t> grid;
    const double lmin = std::log(2.0), lmax = std::log(static_cast<double>(n - 1));
    for (int i = 0; i < 200; ++i) {
      const auto r = static_cast<std::size_t>(std::llround(std::exp(lmin + (lmax - lmin) * i / 199.0)));
      if (grid.empty() || r > grid.back()) grid.push_back(std::clamp<std::size_t>(r, 2, n - 1));
    }
    std::size_t gi = 0;
    double grid_best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double t = total(grid[i]);
      if (t < grid_best) grid_best = t, gi = i;
    }
    const std::size_t lo = gi > 0 ? grid[gi - 1] : 2;
    const std::size_t hi = gi + 1 < grid.size() ? grid[gi + 1] : n - 1;
    for (std::size_t r = lo; r <= hi; ++r) consider(r, total(r));
  }

  const auto head = seg(0, best);
  const auto tail = seg(best, n);
  const auto whole = seg(0, n);
  BrokenZipfFit out;
  out.breakpoint_rank = best;
  out.head = detail::to_fit(head, {1, best}, best);
  out.tail = detail::to_fit(tail, {best + 1, n}, n - best);
  out.total_rss = head.rss + tail.rss;
  out.single = detail::to_fit(whole, {1, n}, n);
  // Holds exactly in real arithmetic; clamp away rounding on exact data.
  out.total_rss = std::min(out.total_rss, out.single.rss);
  out.delta_bic = detail::bic(out.single.rss, n, 2) - detail::bic(out.total_rss, n, 5);
  return out;
}

struct PhaseTransition {
  std::uint64_t breakpoint_rank;
  double delta_bic;
};

inline std::optional<PhaseTransition> detect_phase_transition(const RankFrequencyTable& rft, double threshold = 10.0) {
  const auto b = fit_broken_zipf(rft);
  if (b.delta_bic > threshold) return PhaseTransition{b.breakpoint_rank, b.delta_bic};
  return std::nullopt;
}

/// Draws n_draws i.i.d. ranks from the normalized power law over
/// 1..n_ranks. Returns counts indexed by rank - 1. The draw path is integer
/// only (64-bit Mersenne Twister against fixed cumulative thresholds).
inline std::vector<std::uint64_t> sample_zipf(double exponent, std::size_t n_ranks, std::uint64_t n_draws,
                                              std::uint64_t seed) {
  if (n_ranks < 1) throw ParameterError("n_ranks must be at least 1");
  std::vector<double> cdf(n_ranks);
  double z = 0;
  for (std::size_t r = 1; r <= n_ranks; ++r) {
    z += std::pow(static_cast<double>(r), -exponent);
    cdf[r - 1] = z;
  }
  std::vector<std::uint64_t> threshold(n_ranks);
  constexpr double two64 = 18446744073709551616.0;
  for (std::size_t i = 0; i + 1 < n_ranks; ++i) {
    const double q = cdf[i] / z * two64;
    threshold[i] = q >= two64 ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(q);
  }
  threshold[n_ranks - 1] = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> counts(n_ranks, 0);
  std::mt19937_64 engine(seed);
  for (std::uint64_t d = 0; d < n_draws; ++d) {
    const std::uint64_t u = engine();
    ++counts[static_cast<std::size_t>(std::upper_bound(threshold.begin(), threshold.end() - 1, u) - threshold.begin())];
  }
  return counts;
}

/// Builds a rank-frequency table from per-rank counts (index = rank - 1),
/// using the rank as token id.
inline RankFrequencyTable table_from_counts(const std::vector<std::uint64_t>& counts, std::uint64_t min_count = 1) {
  return stats::rank_frequency(counts, min_count);
}

// ---- additive two-component mixture -------------------------------------

struct AdditiveFit {
  // f(r) = C1 r^-s1 + C2 r^-s2 with s1 <= s2. A zero component has
  // log_amplitude -infinity.
  double log_amplitude1 = 0, exponent1 = 0;
  double log_amplitude2 = 0, exponent2 = 0;
  double rss = 0;
  bool converged = false;
  int starts_converged = 0;

  /// Share of total fitted mass over the fitted ranks carried by each component.
  std::pair<double, double> mass_share(std::size_t n_ranks) const {
    double m1 = 0, m2 = 0;
    for (std::size_t r = 1; r <= n_ranks; ++r) {
      const double lr = std::log(static_cast<double>(r));
      m1 += std::exp(log_amplitude1 - exponent1 * lr);
      m2 += std::exp(log_amplitude2 - exponent2 * lr);
    }
    return {m1 / (m1 + m2), m2 / (m1 + m2)};
  }
};

class FitError : public Error {
 public:
  FitError(const std::string& what, AdditiveFit partial) : Error(what), partial_(partial) {}
  const AdditiveFit& partial() const noexcept { return partial_; }

 private:
  AdditiveFit partial_;
};

namespace detail {

using Vec4 = Eigen::Matrix<double, 4, 1>;

inline double mixture_log(const Vec4& p, double x) {
  const double u = p[0] - p[1] * x, v = p[2] - p[3] * x;
  const double m = std::max(u, v);
  return m + std::log(std::exp(u - m) + std::exp(v - m));
}

inline double mixture_rss(const Vec4& p, const LogSeries& s) {
  double rss = 0;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double e = s.y[i] - mixture_log(p, s.x[i]);
    rss += e * e;
  }
  return rss;
}

struct LmResult {
  Vec4 params;
  double rss;
  bool converged;
};

// Levenberg-Marquardt on the log-space residuals.
inline LmResult levenberg_marquardt(Vec4 p, const LogSeries& s, int max_iter = 2000) {
  double rss = mixture_rss(p, s);
  double lambda = 1e-3;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Vec4 jtr = Vec4::Zero();
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double x = s.x[i];
      const double u = p[0] - p[1] * x, v = p[2] - p[3] * x;
      const double m = std::max(u, v);
      const double eu = std::exp(u - m), ev = std::exp(v - m);
      const double w1 = eu / (eu + ev), w2 = ev / (eu + ev);
      const double r = s.y[i] - (m + std::log(eu + ev));
      Vec4 g;  // d(model)/d(params)
      g << w1, -x * w1, w2, -x * w2;
      jtj.noalias() += g * g.transpose();
      jtr.noalias() += g * r;
    }
    if (jtr.cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, rss) || rss < 1e-24) return {p, rss, true};
    bool improved = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::Matrix4d a = jtj;
      for (int k = 0; k < 4; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      const Vec4 step = a.ldlt().solve(jtr);
      const Vec4 cand = p + step;
      const double cand_rss = mixture_rss(cand, s);
      if (std::isfinite(cand_rss) && cand_rss < rss) {
        const double rel = (rss - cand_rss) / std::max(rss, 1e-300);
        p = cand;
        rss = cand_rss;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (rel < 1e-14 && step.norm() < 1e-10 * (1.0 + p.norm())) return {p, rss, true};
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e16) break;
    }
    if (!improved) return {p, rss, true};  // no descent direction left: stationary to working precision
  }
  return {p, rss, false};
}

inline LogSeries log_uniform_subsample(const LogSeries& s, std::size_t max_points) {
  if (s.x.size() <= max_points) return s;
  LogSeries out;
  const double lmax = std::log(static_cast<double>(s.x.size()));
  std::size_t last = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < max_points; ++i) {
    auto idx = static_cast<std::size_t>(std::llround(std::exp(lmax * i / (max_points - 1.0)))) - 1;
    idx = std::min(idx, s.x.size() - 1);
    if (idx == last) continue;
    out.x.push_back(s.x[idx]);
    out.y.push_back(s.y[idx]);
    last = idx;
  }
  return out;
}

}  // namespace detail

/// Fits f(r) = C1 r^-s1 + C2 r^-s2 by least squares on ln f from 16 fixed
/// starting points. Starts are explored on at most 20,000 log-uniform rows;
/// the winner is polished on every row. The nested single power law competes
/// too, so the result never fits worse than it.
inline AdditiveFit fit_additive_mixture(const RankFrequencyTable& rft) {
  const std::size_t n = rft.positive_size();
  if (n < 10) throw ParameterError("additive fit needs at least 10 rows with positive frequency");
  const auto full = detail::log_series(rft, n);
  const auto sub = detail::log_uniform_subsample(full, 20'000);

  const double y_head = full.y.front(), x_tail = full.x.back(), y_tail = full.y.back();
  constexpr double shallow[] = {0.5, 0.8, 0.9, 0.3};
  constexpr double steep[] = {1.5, 1.2, 2.0, 3.0};
  constexpr double offsets[][2] = {{0, 0}, {-1, 0}, {0, -1}, {-2, -2}};

  constexpr double inf = std::numeric_limits<double>::infinity();
  double best_rss = inf, any_rss = inf;
  detail::Vec4 best_p = detail::Vec4::Zero(), any_p = detail::Vec4::Zero();
  int converged = 0;
  for (int i = 0; i < 4; ++i) {
    for (const auto& off : offsets) {
      detail::Vec4 p;
      p << y_tail + shallow[i] * x_tail + off[0], shallow[i], y_head + off[1], steep[i];
      const auto res = detail::levenberg_marquardt(p, sub);
      converged += res.converged;
      if (res.rss < any_rss) any_rss = res.rss, any_p = res.params;
      if (res.converged && res.rss < best_rss) best_rss = res.rss, best_p = res.params;
    }
  }
  const auto canonical = [](detail::Vec4 p) {
    if (p[1] > p[3]) std::swap(p[0], p[2]), std::swap(p[1], p[3]);
    return p;
  };
  if (converged == 0) {
    AdditiveFit partial;
    const auto p = canonical(any_p);
    partial.log_amplitude1 = p[0], partial.exponent1 = p[1], partial.log_amplitude2 = p[2], partial.exponent2 = p[3];
    partial.rss = detail::mixture_rss(any_p, full);
    throw FitError("no starting point converged", partial);
  }
  auto polished = detail::levenberg_marquardt(best_p, full);
  const auto p = canonical(polished.params);
  AdditiveFit out;
  out.log_amplitude1 = p[0], out.exponent1 = p[1], out.log_amplitude2 = p[2], out.exponent2 = p[3];
  out.rss = polished.rss;
  out.converged = true;
  out.starts_converged = converged;

  const auto single = detail::fit_line(full.x.data(), full.y.data(), n);
  if (single.rss <= out.rss) {
    out.log_amplitude1 = single.intercept;
    out.exponent1 = out.exponent2 = -single.slope;
    out.log_amplitude2 = -std::numeric_limits<double>::infinity();
    out.rss = single.rss;
  }
  return out;
}

}  // namespace zipftok::fit
