// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mimt/error.hpp"

namespace mimt::analysis {

enum class XmiVariant { Difference, LogRatio };
enum class GeneralSource { GeneralAdapter, MixedCheckpoint };

inline std::string to_string(XmiVariant v) { return v == XmiVariant::Difference ? "difference" : "log-ratio"; }
inline std::string to_string(GeneralSource s) {
  return s == GeneralSource::GeneralAdapter ? "general-adapter" : "mixed-checkpoint";
}

inline XmiVariant parse_variant(const std::string& s) {
  if (s == "difference") return XmiVariant::Difference;
  if (s == "log-ratio") return XmiVariant::LogRatio;
  throw ConfigError("unknown XMI variant '" + s + "' (known: difference, log-ratio)");
}

struct XmiHistogram {
  std::vector<double> edges;  // bins + 1, strictly increasing
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  double mean = 0.0;
  XmiVariant variant = XmiVariant::Difference;
  GeneralSource source = GeneralSource::GeneralAdapter;

  double width(std::size_t b) const { return edges[b + 1] - edges[b]; }
  double density(std::size_t b) const {
    return total ? static_cast<double>(counts[b]) / (static_cast<double>(total) * width(b)) : 0.0;
  }
};

inline void to_json(nlohmann::json& j, const XmiHistogram& h) {
  j = {{"edges", h.edges},   {"counts", h.counts},
       {"total", h.total},   {"mean", h.mean},
       {"variant", to_string(h.variant)}, {"p_g_source", to_string(h.source)}};
}

// Fixed-width bins over [lo, hi]; values outside the range land in the end
// bins, the right edge belongs to the last bin.
inline XmiHistogram make_histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError("histogram range must satisfy lo < hi");
  XmiHistogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("histogram value is not finite");
    const double pos = (v - lo) / (hi - lo) * static_cast<double>(bins);
    const auto b = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(bins - 1)));
    ++h.counts[b];
    sum += v;
  }
  h.total = values.size();
  h.mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  return h;
}

// Difference values use [-1, 1]; log ratios use the observed range.
inline XmiHistogram xmi_histogram(const std::vector<double>& xmi, XmiVariant variant, GeneralSource source,
                                  std::size_t bins = 80) {
  double lo = -1.0, hi = 1.0;
  if (variant == XmiVariant::LogRatio && !xmi.empty()) {
    lo = *std::min_element(xmi.begin(), xmi.end());
    hi = *std::max_element(xmi.begin(), xmi.end());
    if (!(lo < hi)) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  auto h = make_histogram(xmi, bins, lo, hi);
  h.variant = variant;
  h.source = source;
  return h;
}

inline void write_histogram_tsv(std::ostream& out, const XmiHistogram& h) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "bin_left\tbin_right\tcount\tdensity\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    out << h.edges[b] << '\t' << h.edges[b + 1] << '\t' << h.counts[b] << '\t' << h.density(b) << '\n';
}

// Standalone bar chart; several histograms share the axes when overlaid.
inline std::string histogram_svg(const std::vector<std::pair<std::string, const XmiHistogram*>>& series,
                                 const std::string& title) {
  if (series.empty()) throw ConfigError("histogram_svg needs at least one series");
  const double w = 640, h = 360, left = 50, right = 20, top = 40, bottom = 40;
  const double lo = series.front().second->edges.front(), hi = series.front().second->edges.back();
  double max_density = 0.0;
  for (const auto& [name, hist] : series)
    for (std::size_t b = 0; b < hist->counts.size(); ++b) max_density = std::max(max_density, hist->density(b));
  if (max_density == 0.0) max_density = 1.0;
  const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e"};
  auto x = [&](double v) { return left + (v - lo) / (hi - lo) * (w - left - right); };
  auto y = [&](double d) { return h - bottom - d / max_density * (h - top - bottom); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& hist = *series[s].second;
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
      if (hist.counts[b] == 0) continue;
      svg << "<rect x=\"" << x(hist.edges[b]) << "\" y=\"" << y(hist.density(b)) << "\" width=\""
          << x(hist.edges[b + 1]) - x(hist.edges[b]) << "\" height=\"" << h - bottom - y(hist.density(b))
          << "\" fill=\"" << colors[s % 4] << "\" fill-opacity=\"0.5\"/>\n";
    }
    svg << "<text x=\"" << w - right - 150 << "\" y=\"" << top + 16 * static_cast<double>(s) << "\" fill=\""
        << colors[s % 4] << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].first
        << " (mean " << hist.mean << ")</text>\n";
  }
  svg << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"" << h - 20 << "\" font-family=\"sans-serif\" font-size=\"12\">" << lo
      << "</text>\n";
  svg << "<text x=\"" << w - right << "\" y=\"" << h - 20
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << hi << "</text>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"" << h - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">XMI (y: density)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mimt::analysis
