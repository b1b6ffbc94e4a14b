#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "stagdid/mboot.hpp"
#include "stagdid/panel.hpp"

namespace stagdid {

namespace detail {

inline std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Event-study plot for one cohort: estimates with simultaneous band whiskers
// by calendar period. Placebo cells are red, post-treatment cells blue.
inline std::string event_study_svg(const Panel& panel, const BandResult& band, int g) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < band.cells.size(); ++j)
    if (band.cells[j].g == g) idx.push_back(j);
  if (idx.empty()) throw Error("cli", "no cells to plot for cohort " + std::to_string(panel.time_label(g)));

  double lo = 0.0, hi = 0.0;
  for (auto j : idx) {
    lo = std::min(lo, band.lower(static_cast<Eigen::Index>(j)));
    hi = std::max(hi, band.upper(static_cast<Eigen::Index>(j)));
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double width = 640, height = 400, left = 70, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const int T = panel.n_periods();
  auto x_of = [&](int t) { return left + plot_w * (static_cast<double>(t) - 1.5) / std::max(1.0, static_cast<double>(T) - 1.0); };
  auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  using detail::svg_number;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">Group "
      << panel.time_label(g) << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << svg_number(y_of(0.0)) << "\" x2=\"" << width - right << "\" y2=\""
      << svg_number(y_of(0.0)) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << svg_number(y_of(v) + 4) << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << svg_number(v) << "</text>\n";
  }
  for (auto j : idx) {
    const auto jj = static_cast<Eigen::Index>(j);
    const auto& cell = band.cells[j];
    const char* colour = cell.kind == CellKind::placebo ? "#c0392b" : "#1f4e9c";
    const double x = x_of(cell.t);
    out << "<line x1=\"" << svg_number(x) << "\" y1=\"" << svg_number(y_of(band.lower(jj))) << "\" x2=\"" << svg_number(x)
        << "\" y2=\"" << svg_number(y_of(band.upper(jj))) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    out << "<circle cx=\"" << svg_number(x) << "\" cy=\"" << svg_number(y_of(band.estimates(jj))) << "\" r=\"4\" fill=\""
        << colour << "\"/>\n";
    out << "<text x=\"" << svg_number(x) << "\" y=\"" << height - bottom + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << panel.time_label(cell.t) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace stagdid
