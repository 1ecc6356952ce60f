// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mimt/analysis/metrics.hpp"

namespace mimt::analysis {

struct HeatmapRow {
  std::string label;
  Sentence source;
  Sentence tokens;          // hypothesis or gold target
  std::vector<double> xmi;  // one value per token
};

// Red intensity in [0, 1]: max(0, xmi) over the row's largest positive value.
inline std::vector<double> heat_intensities(const std::vector<double>& xmi) {
  double top = 0.0;
  for (double v : xmi) top = std::max(top, v);
  std::vector<double> out;
  out.reserve(xmi.size());
  for (double v : xmi) out.push_back(top > 0.0 ? std::max(0.0, v) / top : 0.0);
  return out;
}

namespace detail {

inline void check_row(const HeatmapRow& row) {
  if (row.tokens.size() != row.xmi.size())
    throw DataError("heatmap row '" + row.label + "': " + std::to_string(row.tokens.size()) + " tokens but " +
                    std::to_string(row.xmi.size()) + " XMI values");
}

inline std::string html_escape(const std::string& s) {
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

}  // namespace detail

inline std::string heatmap_html(const std::vector<HeatmapRow>& rows, const std::string& title = "Token XMI") {
  std::ostringstream html;
  html << std::setprecision(17);
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << detail::html_escape(title)
       << "</title>\n<style>body{font-family:sans-serif}.row{margin:0.8em 0}.src{color:#555}"
          ".tok{padding:0 2px;margin:0 1px}</style></head><body>\n<h1>"
       << detail::html_escape(title) << "</h1>\n";
  for (const auto& row : rows) {
    detail::check_row(row);
    const auto heat = heat_intensities(row.xmi);
    html << "<div class=\"row\"><div class=\"label\">" << detail::html_escape(row.label) << "</div>\n";
    html << "<div class=\"src\">";
    for (std::size_t i = 0; i < row.source.size(); ++i) html << (i ? " " : "") << detail::html_escape(row.source[i]);
    html << "</div>\n<div class=\"tgt\">";
    for (std::size_t i = 0; i < row.tokens.size(); ++i) {
      html << "<span class=\"tok\" data-xmi=\"" << row.xmi[i] << "\"";
      if (heat[i] > 0.0) html << " style=\"background-color:rgba(255,0,0," << heat[i] << ")\"";
      html << ">" << detail::html_escape(row.tokens[i]) << "</span>";
    }
    html << "</div></div>\n";
  }
  html << "</body></html>\n";
  return html.str();
}

// 24-bit background colors blending white toward red.
inline std::string heatmap_ansi(const std::vector<HeatmapRow>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) {
    detail::check_row(row);
    const auto heat = heat_intensities(row.xmi);
    if (!row.label.empty()) out << row.label << '\n';
    for (std::size_t i = 0; i < row.source.size(); ++i) out << (i ? " " : "") << row.source[i];
    out << '\n';
    for (std::size_t i = 0; i < row.tokens.size(); ++i) {
      if (i) out << ' ';
      if (heat[i] > 0.0) {
        const int fade = static_cast<int>(std::lround(255.0 * (1.0 - heat[i])));
        out << "\x1b[48;2;255;" << fade << ';' << fade << "m" << row.tokens[i] << "\x1b[0m";
      } else {
        out << row.tokens[i];
      }
    }
    out << "\n\n";
  }
  return out.str();
}

}  // namespace mimt::analysis
