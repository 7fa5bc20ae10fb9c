#pragma once

// Minimal self-contained SVG plots: line charts with optional vertical
// markers, bar charts with error bars, and heatmaps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cflab::svg {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool step = false;  // draw as a right-continuous step function
  bool dashed = false;
};

struct Marker {
  double x = 0;
  std::string text;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<Marker> markers;  // vertical lines
  std::optional<double> y_min, y_max;
  double width = 640, height = 400;
};

namespace detail {

struct Frame {
  double left = 70, right = 20, top = 40, bottom = 50;
  double w = 0, h = 0;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (w - left - right); }
  double py(double y) const { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); }
};

inline void open(std::ostringstream& o, double w, double h, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
}

inline void axes(std::ostringstream& o, const Frame& f, const std::string& xl, const std::string& yl) {
  const double xa = f.left, xb = f.w - f.right, ya = f.h - f.bottom, yb = f.top;
  o << "<rect x=\"" << num(xa) << "\" y=\"" << num(yb) << "\" width=\"" << num(xb - xa) << "\" height=\""
    << num(ya - yb) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
    o << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(ya + 16) << "\" text-anchor=\"middle\">" << label(xv)
      << "</text>\n";
    o << "<text x=\"" << num(xa - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << label(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << num((xa + xb) / 2) << "\" y=\"" << num(f.h - 12) << "\" text-anchor=\"middle\">"
    << escape(xl) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num((ya + yb) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num((ya + yb) / 2) << ")\">" << escape(yl) << "</text>\n";
}

inline void padded_range(double& lo, double& hi) {
  if (!(lo <= hi)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
}

}  // namespace detail

inline std::string render(const LinePlot& p) {
  detail::Frame f;
  f.w = p.width;
  f.h = p.height;
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : p.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  for (const auto& m : p.markers) {
    xlo = std::min(xlo, m.x);
    xhi = std::max(xhi, m.x);
  }
  if (p.y_min) ylo = *p.y_min;
  if (p.y_max) yhi = *p.y_max;
  detail::padded_range(xlo, xhi);
  detail::padded_range(ylo, yhi);
  f.x0 = xlo, f.x1 = xhi, f.y0 = ylo, f.y1 = yhi;

  std::ostringstream o;
  detail::open(o, f.w, f.h, p.title);
  detail::axes(o, f, p.x_label, p.y_label);
  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto& s = p.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
      << (s.dashed ? " stroke-dasharray=\"6 3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (s.step && i > 0) o << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i - 1])) << ' ';
      o << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
    }
    o << "\"/>\n";
    const double ly = f.top + 14 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << num(f.w - f.right - 150) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
      << num(f.w - f.right - 130) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(f.w - f.right - 125) << "\" y=\"" << num(ly) << "\">" << escape(s.name) << "</text>\n";
  }
  for (const auto& m : p.markers) {
    o << "<line class=\"marker\" x1=\"" << num(f.px(m.x)) << "\" y1=\"" << num(f.top) << "\" x2=\"" << num(f.px(m.x))
      << "\" y2=\"" << num(f.h - f.bottom) << "\" stroke=\"black\" stroke-dasharray=\"4 2\"/>\n";
    o << "<text x=\"" << num(f.px(m.x) + 4) << "\" y=\"" << num(f.top + 12) << "\">" << escape(m.text) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

struct BarPlot {
  std::string title;
  std::string y_label;
  std::vector<std::string> labels;
  std::vector<double> values;
  std::vector<double> errors;  // half-length of the error bar, may be empty
  double width = 640, height = 400;
};

inline std::string render(const BarPlot& p) {
  detail::Frame f;
  f.w = p.width;
  f.h = p.height;
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double e = i < p.errors.size() ? p.errors[i] : 0.0;
    lo = std::min(lo, p.values[i] - e);
    hi = std::max(hi, p.values[i] + e);
  }
  detail::padded_range(lo, hi);
  f.x0 = 0;
  f.x1 = static_cast<double>(std::max<std::size_t>(1, p.values.size()));
  f.y0 = lo;
  f.y1 = hi;

  std::ostringstream o;
  detail::open(o, f.w, f.h, p.title);
  const double xa = f.left, xb = f.w - f.right, ya = f.h - f.bottom, yb = f.top;
  o << "<rect x=\"" << num(xa) << "\" y=\"" << num(yb) << "\" width=\"" << num(xb - xa) << "\" height=\""
    << num(ya - yb) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = lo + (hi - lo) * i / 5.0;
    o << "<text x=\"" << num(xa - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << label(yv)
      << "</text>\n";
  }
  o << "<text x=\"16\" y=\"" << num((ya + yb) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num((ya + yb) / 2) << ")\">" << escape(p.y_label) << "</text>\n";
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double cx = f.px(static_cast<double>(i) + 0.5);
    const double bw = 0.6 * (f.px(1) - f.px(0));
    const double top = f.py(std::max(0.0, p.values[i])), base = f.py(std::min(0.0, p.values[i]));
    o << "<rect x=\"" << num(cx - bw / 2) << "\" y=\"" << num(top) << "\" width=\"" << num(bw) << "\" height=\""
      << num(base - top) << "\" fill=\"" << kPalette[0] << "\"/>\n";
    if (i < p.errors.size()) {
      const double e1 = f.py(p.values[i] + p.errors[i]), e0 = f.py(p.values[i] - p.errors[i]);
      o << "<line x1=\"" << num(cx) << "\" y1=\"" << num(e0) << "\" x2=\"" << num(cx) << "\" y2=\"" << num(e1)
        << "\" stroke=\"black\"/>\n";
      o << "<line x1=\"" << num(cx - 5) << "\" y1=\"" << num(e1) << "\" x2=\"" << num(cx + 5) << "\" y2=\""
        << num(e1) << "\" stroke=\"black\"/>\n";
      o << "<line x1=\"" << num(cx - 5) << "\" y1=\"" << num(e0) << "\" x2=\"" << num(cx + 5) << "\" y2=\""
        << num(e0) << "\" stroke=\"black\"/>\n";
    }
    if (i < p.labels.size()) {
      o << "<text x=\"" << num(cx) << "\" y=\"" << num(ya + 16) << "\" text-anchor=\"middle\">" << escape(p.labels[i])
        << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

struct Heatmap {
  std::string title;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;  // [row][column]
  double cell = 48;
};

/// White-to-red scale over the matrix range; each cell is annotated.
inline std::string render(const Heatmap& p) {
  const std::size_t n = p.values.size();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : p.values) {
    for (double v : row) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  detail::padded_range(lo, hi);
  const double margin = 90;
  const double w = margin + p.cell * static_cast<double>(n) + 20;
  const double h = margin + p.cell * static_cast<double>(n) + 20;
  std::ostringstream o;
  detail::open(o, w, h, p.title);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = margin + p.cell * static_cast<double>(i);
    if (i < p.labels.size()) {
      o << "<text x=\"" << num(margin - 6) << "\" y=\"" << num(y + p.cell / 2 + 4) << "\" text-anchor=\"end\">"
        << escape(p.labels[i]) << "</text>\n";
      o << "<text x=\"" << num(margin + p.cell * (static_cast<double>(i) + 0.5)) << "\" y=\"" << num(margin - 8)
        << "\" text-anchor=\"middle\">" << escape(p.labels[i]) << "</text>\n";
    }
    for (std::size_t j = 0; j < p.values[i].size(); ++j) {
      const double v = p.values[i][j];
      const double t = std::isfinite(v) ? (v - lo) / (hi - lo) : 1.0;
      const int gb = static_cast<int>(std::lround(255 * (1 - t)));
      const double x = margin + p.cell * static_cast<double>(j);
      o << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(p.cell) << "\" height=\""
        << num(p.cell) << "\" fill=\"rgb(255," << gb << ',' << gb << ")\" stroke=\"#888\"/>\n";
      o << "<text x=\"" << num(x + p.cell / 2) << "\" y=\"" << num(y + p.cell / 2 + 4)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << label(v) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace cflab::svg
