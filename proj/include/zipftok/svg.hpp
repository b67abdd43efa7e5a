#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zipftok/errors.hpp"
#include "zipftok/zipfstats.hpp"

namespace zipftok::svg {

/// f(r) = 10^log10_amplitude * r^-exponent over [rank_lo, rank_hi].
struct Segment {
  double rank_lo = 1, rank_hi = 1;
  double log10_amplitude = 0;
  double exponent = 0;
};

struct Overlay {
  std::vector<Segment> segments;
  std::optional<std::uint64_t> breakpoint_rank;
};

struct PlotOptions {
  int width = 800;
  int height = 600;
  std::size_t max_points = 5000;
  std::string title = "rank-frequency";
};

/// Picks the preferred single or broken least-squares fit out of a fit report.
inline Overlay overlay_from_report(const nlohmann::json& report) {
  Overlay o;
  const std::string preferred = report.value("model_preferred", "single");
  if (!report.contains("fits")) return o;
  for (const auto& f : report["fits"]) {
    if (f.value("model", "") != preferred || f.value("method", "") != "log-log-least-squares") continue;
    const auto& ex = f["exponents"];
    const auto& am = f["amplitudes"];
    const double lo = f["fit_range"][0].get<double>(), hi = f["fit_range"][1].get<double>();
    if (preferred == "broken") {
      const auto bp = f["breakpoint_rank"].get<std::uint64_t>();
      o.segments.push_back({lo, static_cast<double>(bp), am[0].get<double>(), ex[0].get<double>()});
      o.segments.push_back({static_cast<double>(bp + 1), hi, am[1].get<double>(), ex[1].get<double>()});
      o.breakpoint_rank = bp;
    } else {
      o.segments.push_back({lo, hi, am[0].get<double>(), ex[0].get<double>()});
    }
    break;
  }
  return o;
}

/// Row indices of at most max_points rows, spread log-uniformly in rank.
inline std::vector<std::size_t> log_uniform_ranks(std::size_t n, std::size_t max_points) {
  std::vector<std::size_t> idx;
  if (n <= max_points) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  const double span = std::log(static_cast<double>(n));
  for (std::size_t k = 0; k < max_points; ++k) {
    const double r = std::exp(span * static_cast<double>(k) / static_cast<double>(max_points - 1));
    const auto i = std::min(n - 1, static_cast<std::size_t>(std::llround(r)) - 1);
    if (idx.empty() || i > idx.back()) idx.push_back(i);
  }
  return idx;
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string decade_label(int e) {
  if (e >= 0 && e <= 4) return std::to_string(static_cast<long long>(std::llround(std::pow(10.0, e))));
  return "1e" + std::to_string(e);
}

}  // namespace detail

/// Standalone SVG of the table's positive rows on log-log axes.
inline void write_plot(std::ostream& out, const stats::RankFrequencyTable& rft, const Overlay& overlay = {},
                       const PlotOptions& opt = {}) {
  const std::size_t n = rft.positive_size();
  if (n == 0) throw ParameterError("nothing to plot: no rows with positive frequency");
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;

  const int x_lo = 0;
  const int x_hi = std::max(1, static_cast<int>(std::ceil(std::log10(static_cast<double>(n)) - 1e-12)));
  const double f_min = static_cast<double>(rft.at_rank(n).frequency), f_max = static_cast<double>(rft.at_rank(1).frequency);
  const int y_lo = static_cast<int>(std::floor(std::log10(f_min) + 1e-12));
  const int y_hi = std::max(y_lo + 1, static_cast<int>(std::ceil(std::log10(f_max) - 1e-12)));
  const auto px = [&](double lr) { return left + (lr - x_lo) / (x_hi - x_lo) * pw; };
  const auto py = [&](double lf) { return top + (y_hi - lf) / (y_hi - y_lo) * ph; };
  using detail::num;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  out << "<style>.grid{stroke:#ddd;stroke-width:1}.axis{stroke:#000;stroke-width:1}"
         ".point{fill:#1f77b4;fill-opacity:0.6}.fit{stroke:#d62728;stroke-width:2}"
         ".breakpoint{stroke:#555;stroke-width:1;stroke-dasharray:4 3}text{font-family:sans-serif;font-size:12px}</style>\n";
  out << "<defs><clipPath id=\"plot-area\"><rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\"/></clipPath></defs>\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\">" << detail::xml_escape(opt.title) << "</text>\n";

  out << "<g class=\"grid-lines\">\n";
  for (int e = x_lo; e <= x_hi; ++e) {
    const auto x = num(px(e));
    out << "<line class=\"grid\" x1=\"" << x << "\" y1=\"" << num(top) << "\" x2=\"" << x << "\" y2=\"" << num(top + ph) << "\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << detail::decade_label(e) << "</text>\n";
  }
  for (int e = y_lo; e <= y_hi; ++e) {
    const auto y = num(py(e));
    out << "<line class=\"grid\" x1=\"" << num(left) << "\" y1=\"" << y << "\" x2=\"" << num(left + pw) << "\" y2=\"" << y << "\"/>\n";
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << y << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
        << detail::decade_label(e) << "</text>\n";
  }
  out << "</g>\n";
  out << "<rect class=\"axis\" fill=\"none\" x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\"/>\n";
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << opt.height - 10 << "\" text-anchor=\"middle\">rank</text>\n";
  out << "<text transform=\"rotate(-90)\" x=\"" << num(-(top + ph / 2)) << "\" y=\"16\" text-anchor=\"middle\">frequency</text>\n";

  out << "<g class=\"data\">\n";
  for (std::size_t i : log_uniform_ranks(n, opt.max_points)) {
    const auto& row = rft.rows()[i];
    out << "<circle class=\"point\" cx=\"" << num(px(std::log10(static_cast<double>(row.rank)))) << "\" cy=\""
        << num(py(std::log10(static_cast<double>(row.frequency)))) << "\" r=\"2\"/>\n";
  }
  out << "</g>\n";

  out << "<g class=\"overlay\" clip-path=\"url(#plot-area)\">\n";
  for (const auto& s : overlay.segments) {
    const double a = std::log10(std::max(1.0, s.rank_lo)), b = std::log10(std::max(1.0, s.rank_hi));
    out << "<line class=\"fit\" x1=\"" << num(px(a)) << "\" y1=\"" << num(py(s.log10_amplitude - s.exponent * a))
        << "\" x2=\"" << num(px(b)) << "\" y2=\"" << num(py(s.log10_amplitude - s.exponent * b)) << "\"/>\n";
  }
  if (overlay.breakpoint_rank) {
    const auto x = num(px(std::log10(static_cast<double>(*overlay.breakpoint_rank))));
    out << "<line class=\"breakpoint\" x1=\"" << x << "\" y1=\"" << num(top) << "\" x2=\"" << x << "\" y2=\"" << num(top + ph)
        << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
}

}  // namespace zipftok::svg
