#pragma once

/// Hand-rolled SVG line charts for run artifacts: one chart = axes with tick
/// labels, optional shaded confidence bands, one polyline per series, and a
/// small legend. Output is deterministic for identical inputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace hymarl {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::vector<double> lo, hi;  // optional band; empty or same length as x
};

namespace svg_detail {

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline const char* palette(int i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % 8];
}

}  // namespace svg_detail

inline std::string line_chart_svg(const std::string& title, const std::string& xlabel,
                                  const std::string& ylabel, const std::vector<Series>& series,
                                  int width = 720, int height = 440) {
  using svg_detail::esc;
  using svg_detail::num;
  if (series.empty()) throw std::invalid_argument("svg: no series to plot");
  for (const Series& s : series) {
    if (s.x.empty()) throw std::invalid_argument("svg: empty series " + s.label);
    if (s.x.size() != s.y.size()) throw std::invalid_argument("svg: x/y length mismatch");
    if (!s.lo.empty() && (s.lo.size() != s.x.size() || s.hi.size() != s.x.size()))
      throw std::invalid_argument("svg: band length mismatch");
  }

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool seen = false;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      double ylo = s.lo.empty() ? s.y[i] : std::min(s.y[i], s.lo[i]);
      double yhi = s.hi.empty() ? s.y[i] : std::max(s.y[i], s.hi[i]);
      if (!seen) {
        xmin = xmax = s.x[i];
        ymin = ylo;
        ymax = yhi;
        seen = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, ylo);
        ymax = std::max(ymax, yhi);
      }
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) {
    double pad = std::max(1.0, std::abs(ymin) * 0.1);
    ymax = ymin + pad;
    ymin -= pad;
  }

  const double ml = 70, mr = 20, mt = 40, mb = 55;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
       "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " +
       std::to_string(height) + "\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
       "font-family=\"sans-serif\">" + esc(title) + "</text>\n";

  // axes
  o += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" +
       num(mt + ph) + "\" stroke=\"black\"/>\n";
  o += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt + ph) + "\" x2=\"" + num(ml + pw) +
       "\" y2=\"" + num(mt + ph) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double fx = xmin + (xmax - xmin) * k / 4.0;
    double fy = ymin + (ymax - ymin) * k / 4.0;
    o += "<line x1=\"" + num(px(fx)) + "\" y1=\"" + num(mt + ph) + "\" x2=\"" + num(px(fx)) +
         "\" y2=\"" + num(mt + ph + 5) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(mt + ph + 20) +
         "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" + num(fx) +
         "</text>\n";
    o += "<line x1=\"" + num(ml - 5) + "\" y1=\"" + num(py(fy)) + "\" x2=\"" + num(ml) +
         "\" y2=\"" + num(py(fy)) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(ml - 9) + "\" y=\"" + num(py(fy) + 4) +
         "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" + num(fy) +
         "</text>\n";
  }
  o += "<text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(height - 12.0) +
       "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" + esc(xlabel) +
       "</text>\n";
  o += "<text x=\"16\" y=\"" + num(mt + ph / 2) +
       "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 16 " +
       num(mt + ph / 2) + ")\">" + esc(ylabel) + "</text>\n";

  // bands then lines, so every line stays visible
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    if (s.lo.empty() || s.x.empty()) continue;
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      pts += num(px(s.x[i])) + "," + num(py(s.hi[i])) + " ";
    for (std::size_t i = s.x.size(); i-- > 0;)
      pts += num(px(s.x[i])) + "," + num(py(s.lo[i])) + " ";
    o += "<polygon points=\"" + pts + "\" fill=\"" + svg_detail::palette(static_cast<int>(si)) +
         "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    if (s.x.empty()) continue;
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    o += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" +
         svg_detail::palette(static_cast<int>(si)) + "\" stroke-width=\"1.8\"/>\n";
  }

  double ly = mt + 6;
  for (std::size_t si = 0; si < series.size(); ++si) {
    o += "<rect x=\"" + num(ml + pw - 150) + "\" y=\"" + num(ly) +
         "\" width=\"12\" height=\"4\" fill=\"" + svg_detail::palette(static_cast<int>(si)) + "\"/>\n";
    o += "<text x=\"" + num(ml + pw - 132) + "\" y=\"" + num(ly + 6) +
         "\" font-size=\"11\" font-family=\"sans-serif\">" + esc(series[si].label) + "</text>\n";
    ly += 16;
  }
  o += "</svg>\n";
  return o;
}

}  // namespace hymarl
