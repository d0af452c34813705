#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "fedcarbon/errors.hpp"
#include "fedcarbon/predictor.hpp"

namespace fedcarbon {

struct FitPanel {
  std::string title;
  std::string x_label;
  std::vector<std::pair<double, double>> points;
  RegressionFit fit;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// Writes a row of scatter panels with the fitted line overlaid. Pure
/// geometry, no styling dependencies, so the file diffs cleanly.
inline void write_fit_svg(const std::string& path, const std::vector<FitPanel>& panels) {
  if (panels.empty()) throw MalformedDocument("fit plot needs at least one panel");
  const double panel_w = 320, panel_h = 260, margin = 48, gap = 24;
  const double width = margin + panels.size() * (panel_w + gap);
  const double height = panel_h + 2 * margin;

  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw ConfigError(path, "cannot open for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const FitPanel& panel = panels[p];
    const double x0 = margin + p * (panel_w + gap);
    const double y0 = margin;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!panel.points.empty()) {
      xmin = xmax = panel.points[0].first;
      ymin = ymax = panel.points[0].second;
      for (const auto& [x, y] : panel.points) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
    xmin -= xpad, xmax += xpad, ymin -= ypad, ymax += ypad;
    const auto sx = [&](double x) { return x0 + (x - xmin) / (xmax - xmin) * panel_w; };
    const auto sy = [&](double y) { return y0 + panel_h - (y - ymin) / (ymax - ymin) * panel_h; };

    out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w << "\" height=\""
        << panel_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << panel.title << "</text>\n";
    out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 + panel_h + 32
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << panel.x_label << "</text>\n";
    out << "<text x=\"" << x0 + 4 << "\" y=\"" << y0 + 14
        << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">slope "
        << detail::svg_num(panel.fit.slope) << ", r2 " << detail::svg_num(panel.fit.r_squared)
        << "</text>\n";
    out << "<text x=\"" << x0 << "\" y=\"" << y0 + panel_h + 14
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << detail::svg_num(xmin)
        << "</text>\n";
    out << "<text x=\"" << x0 + panel_w << "\" y=\"" << y0 + panel_h + 14
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << detail::svg_num(xmax) << "</text>\n";

    const double fx0 = xmin, fx1 = xmax;
    const double fy0 = panel.fit.slope * fx0 + panel.fit.intercept;
    const double fy1 = panel.fit.slope * fx1 + panel.fit.intercept;
    out << "<line x1=\"" << sx(fx0) << "\" y1=\"" << sy(std::clamp(fy0, ymin, ymax))
        << "\" x2=\"" << sx(fx1) << "\" y2=\"" << sy(std::clamp(fy1, ymin, ymax))
        << "\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n";
    for (const auto& [x, y] : panel.points)
      out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y)
          << "\" r=\"3\" fill=\"#2980b9\" fill-opacity=\"0.7\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace fedcarbon
