/**
 * @file svg.hpp
 * @brief Minimal, byte-stable SVG charts: stacked line panels and heatmaps.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace relucert::svg {

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

struct Panel {
  std::string title;
  std::vector<double> x;
  std::vector<double> y;
  bool log_y = false;
};

/// Panels stacked vertically, one polyline each. Non-finite (and, on log axes,
/// non-positive) points break the line.
inline std::string line_panels(const std::string& title, const std::vector<Panel>& panels) {
  constexpr double kW = 640, kH = 150, kPad = 50, kTop = 30;
  std::ostringstream os;
  const double height = kTop + kH * static_cast<double>(panels.size()) + 10;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kW) << "\" height=\"" << num(height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << num(kW / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
     << "</text>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& pan = panels[p];
    const double y0 = kTop + kH * static_cast<double>(p);
    const double plot_h = kH - 40;
    auto tr = [&](double v) { return pan.log_y ? std::log10(v) : v; };
    auto usable = [&](double v) { return std::isfinite(v) && (!pan.log_y || v > 0.0); };
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (std::size_t i = 0; i < pan.x.size() && i < pan.y.size(); ++i) {
      if (!usable(pan.y[i]) || !std::isfinite(pan.x[i])) continue;
      xmin = std::min(xmin, pan.x[i]);
      xmax = std::max(xmax, pan.x[i]);
      ymin = std::min(ymin, tr(pan.y[i]));
      ymax = std::max(ymax, tr(pan.y[i]));
    }
    os << "<g>\n<text x=\"" << num(kPad) << "\" y=\"" << num(y0 + 12) << "\">" << escape(pan.title)
       << (pan.log_y ? " (log10)" : "") << "</text>\n";
    os << "<rect x=\"" << num(kPad) << "\" y=\"" << num(y0 + 18) << "\" width=\"" << num(kW - 2 * kPad)
       << "\" height=\"" << num(plot_h) << "\" fill=\"none\" stroke=\"#888\"/>\n";
    if (!(xmin <= xmax)) {
      os << "</g>\n";
      continue;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) {
      ymax += 0.5;
      ymin -= 0.5;
    }
    os << "<text x=\"" << num(kPad - 4) << "\" y=\"" << num(y0 + 26) << "\" text-anchor=\"end\">" << label(ymax)
       << "</text>\n";
    os << "<text x=\"" << num(kPad - 4) << "\" y=\"" << num(y0 + 18 + plot_h) << "\" text-anchor=\"end\">"
       << label(ymin) << "</text>\n";
    os << "<text x=\"" << num(kW - kPad) << "\" y=\"" << num(y0 + 30 + plot_h) << "\" text-anchor=\"end\">"
       << label(xmax) << "</text>\n";
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) os << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"" << pts << "\"/>\n";
      pts.clear();
    };
    for (std::size_t i = 0; i < pan.x.size() && i < pan.y.size(); ++i) {
      if (!usable(pan.y[i])) {
        flush();
        continue;
      }
      const double px = kPad + (pan.x[i] - xmin) / (xmax - xmin) * (kW - 2 * kPad);
      const double py = y0 + 18 + plot_h - (tr(pan.y[i]) - ymin) / (ymax - ymin) * plot_h;
      if (!pts.empty()) pts += ' ';
      pts += num(px) + "," + num(py);
    }
    flush();
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// values[r][c] with row labels (drawn top to bottom) and column labels. NaN cells are grey.
inline std::string heatmap(const std::string& title, const std::string& row_name, const std::vector<double>& rows,
                           const std::string& col_name, const std::vector<double>& cols,
                           const std::vector<std::vector<double>>& values) {
  constexpr double kCell = 56, kLeft = 80, kTop = 50;
  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (const auto& r : values)
    for (double v : r)
      if (std::isfinite(v)) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
  const double w = kLeft + kCell * static_cast<double>(cols.size()) + 20;
  const double h = kTop + kCell * static_cast<double>(rows.size()) + 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << num(w / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
     << "</text>\n";
  os << "<text x=\"10\" y=\"" << num(kTop - 8) << "\">" << escape(row_name) << " \\ " << escape(col_name)
     << "</text>\n";
  for (std::size_t c = 0; c < cols.size(); ++c)
    os << "<text x=\"" << num(kLeft + kCell * (static_cast<double>(c) + 0.5)) << "\" y=\"" << num(kTop - 8)
       << "\" text-anchor=\"middle\">" << label(cols[c]) << "</text>\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y = kTop + kCell * static_cast<double>(r);
    os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(y + kCell / 2 + 4) << "\" text-anchor=\"end\">"
       << label(rows[r]) << "</text>\n";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double v = r < values.size() && c < values[r].size() ? values[r][c] : std::nan("");
      std::string fill = "#cccccc";
      if (std::isfinite(v)) {
        const double t = vmax > vmin ? (v - vmin) / (vmax - vmin) : 1.0;
        const int red = static_cast<int>(std::lround(255 * (1 - t)));
        const int green = static_cast<int>(std::lround(255 - 120 * t));
        const int blue = static_cast<int>(std::lround(255 * (1 - 0.4 * t)));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", red, green, blue);
        fill = buf;
      }
      const double x = kLeft + kCell * static_cast<double>(c);
      os << "<rect class=\"cell\" x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(kCell)
         << "\" height=\"" << num(kCell) << "\" fill=\"" << fill << "\" stroke=\"#fff\"/>\n";
      os << "<text x=\"" << num(x + kCell / 2) << "\" y=\"" << num(y + kCell / 2 + 4)
         << "\" text-anchor=\"middle\">" << (std::isfinite(v) ? label(v) : "n/a") << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace relucert::svg
