#pragma once

// Minimal standalone SVG plots: heat map, line chart, scatter with fitted line.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace vibesense::svg {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
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

struct Frame {
  double width = 640, height = 420;
  double left = 70, right = 20, top = 40, bottom = 60;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline void axes(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel) {
  os << "<text x=\"" << num(f.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">"
     << escape(title) << "</text>\n";
  os << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(f.height - f.bottom) << "\" x2=\""
     << num(f.width - f.right) << "\" y2=\"" << num(f.height - f.bottom) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(f.top) << "\" x2=\"" << num(f.left) << "\" y2=\""
     << num(f.height - f.bottom) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(f.height - f.bottom + 18)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << num(xv) << "</text>\n";
    os << "<text x=\"" << num(f.left - 6) << "\" y=\"" << num(f.py(yv) + 4)
       << "\" text-anchor=\"end\" font-size=\"11\">" << num(yv) << "</text>\n";
  }
  os << "<text x=\"" << num(f.width / 2) << "\" y=\"" << num(f.height - 15)
     << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(xlabel) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(f.height / 2) << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
     << num(f.height / 2) << ")\">" << escape(ylabel) << "</text>\n";
}

inline std::string open(double w, double h) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return os.str();
}

inline void pad_range(double& lo, double& hi) {
  if (hi <= lo) {
    lo -= 1.0;
    hi += 1.0;
  } else {
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
}

}  // namespace detail

/// Row-normalized values in [0, 1] rendered as a blue heat map with cell labels.
inline std::string heatmap(const std::vector<std::vector<double>>& values, const std::vector<std::string>& labels,
                           const std::string& title) {
  const std::size_t n = values.size();
  const double cell = 70, left = 150, top = 50;
  const double w = left + cell * static_cast<double>(n) + 20;
  const double h = top + cell * static_cast<double>(n) + 120;
  std::ostringstream os;
  os << detail::open(w, h);
  os << "<text x=\"" << detail::num(w / 2) << "\" y=\"25\" text-anchor=\"middle\" font-size=\"16\">"
     << detail::escape(title) << "</text>\n";
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < values[r].size(); ++c) {
      const double v = std::clamp(values[r][c], 0.0, 1.0);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      const double x = left + cell * static_cast<double>(c);
      const double y = top + cell * static_cast<double>(r);
      os << "<rect x=\"" << detail::num(x) << "\" y=\"" << detail::num(y) << "\" width=\"" << detail::num(cell)
         << "\" height=\"" << detail::num(cell) << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"gray\"/>\n";
      os << "<text x=\"" << detail::num(x + cell / 2) << "\" y=\"" << detail::num(y + cell / 2 + 5)
         << "\" text-anchor=\"middle\" font-size=\"13\" fill=\"" << (v > 0.5 ? "white" : "black") << "\">"
         << detail::num(values[r][c]) << "</text>\n";
    }
    os << "<text x=\"" << detail::num(left - 8) << "\" y=\"" << detail::num(top + cell * (static_cast<double>(r) + 0.5) + 5)
       << "\" text-anchor=\"end\" font-size=\"12\">" << detail::escape(labels[r]) << "</text>\n";
  }
  for (std::size_t c = 0; c < n; ++c) {
    const double x = left + cell * (static_cast<double>(c) + 0.5);
    const double y = top + cell * static_cast<double>(n) + 10;
    os << "<text x=\"" << detail::num(x) << "\" y=\"" << detail::num(y) << "\" font-size=\"12\" transform=\"rotate(45 "
       << detail::num(x) << ' ' << detail::num(y) << ")\">" << detail::escape(labels[c]) << "</text>\n";
  }
  os << "<text x=\"" << detail::num(left - 8) << "\" y=\"" << detail::num(top - 8)
     << "\" text-anchor=\"end\" font-size=\"11\">true \\ predicted</text>\n";
  os << "</svg>\n";
  return os.str();
}

inline std::string line_chart(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& title,
                              const std::string& xlabel, const std::string& ylabel) {
  detail::Frame f;
  if (!xs.empty()) {
    f.x0 = *std::min_element(xs.begin(), xs.end());
    f.x1 = *std::max_element(xs.begin(), xs.end());
    f.y0 = *std::min_element(ys.begin(), ys.end());
    f.y1 = *std::max_element(ys.begin(), ys.end());
  }
  detail::pad_range(f.x0, f.x1);
  detail::pad_range(f.y0, f.y1);
  std::ostringstream os;
  os << detail::open(f.width, f.height);
  detail::axes(os, f, title, xlabel, ylabel);
  os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) os << detail::num(f.px(xs[i])) << ',' << detail::num(f.py(ys[i])) << ' ';
  os << "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << "<circle cx=\"" << detail::num(f.px(xs[i])) << "\" cy=\"" << detail::num(f.py(ys[i]))
       << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Scatter of (x, y) plus the line y = slope * x + intercept.
inline std::string scatter_fit(const std::vector<double>& xs, const std::vector<double>& ys, double slope,
                               double intercept, const std::string& title, const std::string& xlabel,
                               const std::string& ylabel) {
  detail::Frame f;
  if (!xs.empty()) {
    f.x0 = *std::min_element(xs.begin(), xs.end());
    f.x1 = *std::max_element(xs.begin(), xs.end());
    f.y0 = *std::min_element(ys.begin(), ys.end());
    f.y1 = *std::max_element(ys.begin(), ys.end());
    f.y0 = std::min({f.y0, slope * f.x0 + intercept, slope * f.x1 + intercept});
    f.y1 = std::max({f.y1, slope * f.x0 + intercept, slope * f.x1 + intercept});
  }
  detail::pad_range(f.x0, f.x1);
  detail::pad_range(f.y0, f.y1);
  std::ostringstream os;
  os << detail::open(f.width, f.height);
  detail::axes(os, f, title, xlabel, ylabel);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << "<circle cx=\"" << detail::num(f.px(xs[i])) << "\" cy=\"" << detail::num(f.py(ys[i]))
       << "\" r=\"4\" fill=\"darkorange\"/>\n";
  }
  os << "<line x1=\"" << detail::num(f.px(f.x0)) << "\" y1=\"" << detail::num(f.py(slope * f.x0 + intercept))
     << "\" x2=\"" << detail::num(f.px(f.x1)) << "\" y2=\"" << detail::num(f.py(slope * f.x1 + intercept))
     << "\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace vibesense::svg
