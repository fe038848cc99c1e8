#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "coopsim/errors.hpp"
#include "coopsim/eval.hpp"
#include "coopsim/geom.hpp"

namespace coopsim::svg {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b",
                                  "#17becf", "#7f7f7f"};
  return kColors[i % (sizeof(kColors) / sizeof(kColors[0]))];
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct ChartOptions {
  int width = 760, height = 440;
  std::string title, x_label, y_label;
  bool log_x = false;
  double y_min = std::numeric_limits<double>::quiet_NaN();  // NaN = auto
  double y_max = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Tick step of the form {1, 2, 5} * 10^k giving roughly `target` steps.
inline double nice_step(double span, int target) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

}  // namespace detail

// Multi-series line chart with markers, optional log-scaled x axis, and a
// legend. Output depends only on the inputs.
inline std::string line_chart(std::span<const Series> series,
                              const ChartOptions& opt) {
  if (series.empty()) throw InternalError("line_chart: no series");
  const double left = 64, right = 20, top = 34, bottom = 50;
  const double pw = opt.width - left - right;
  const double ph = opt.height - top - bottom;

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = std::numeric_limits<double>::infinity(), y_hi = -y_lo;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size())
      throw InternalError("line_chart: series length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double xv = opt.log_x ? std::log10(s.x[i]) : s.x[i];
      x_lo = std::min(x_lo, xv);
      x_hi = std::max(x_hi, xv);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  }
  if (!(x_hi > x_lo)) x_hi = x_lo + 1.0;
  if (!std::isnan(opt.y_min)) y_lo = opt.y_min;
  if (!std::isnan(opt.y_max)) y_hi = opt.y_max;
  if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;
  const double y_pad = std::isnan(opt.y_min) ? 0.06 * (y_hi - y_lo) : 0.0;
  y_lo -= y_pad;
  if (std::isnan(opt.y_max)) y_hi += 0.06 * (y_hi - y_lo);

  auto px = [&](double xv) {
    const double v = opt.log_x ? std::log10(xv) : xv;
    return left + (v - x_lo) / (x_hi - x_lo) * pw;
  };
  auto py = [&](double yv) {
    return top + (1.0 - (yv - y_lo) / (y_hi - y_lo)) * ph;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(opt.width) + "\" height=\"" +
         std::to_string(opt.height) + "\" viewBox=\"0 0 " +
         std::to_string(opt.width) + " " + std::to_string(opt.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\" fill=\"#202020\">" +
         escape(opt.title) + "</text>\n";

  out += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#404040\">\n";
  if (opt.log_x) {
    const int d_lo = static_cast<int>(std::floor(x_lo));
    const int d_hi = static_cast<int>(std::ceil(x_hi));
    for (int d = d_lo; d <= d_hi; ++d) {
      const double xv = std::pow(10.0, d);
      const double gx = px(xv);
      if (gx < left - 0.5 || gx > left + pw + 0.5) continue;
      out += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(top) + "\" x2=\"" +
             fmt(gx) + "\" y2=\"" + fmt(top + ph) +
             "\" stroke=\"#e0e0e0\"/>\n";
      out += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(top + ph + 16) +
             "\" text-anchor=\"middle\">" + fmt(xv) + "</text>\n";
    }
  } else {
    const double step = detail::nice_step(x_hi - x_lo, 6);
    for (double t = std::ceil(x_lo / step) * step; t <= x_hi + 1e-9; t += step) {
      const double gx = px(t);
      out += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(top) + "\" x2=\"" +
             fmt(gx) + "\" y2=\"" + fmt(top + ph) +
             "\" stroke=\"#e0e0e0\"/>\n";
      out += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(top + ph + 16) +
             "\" text-anchor=\"middle\">" + fmt(t) + "</text>\n";
    }
  }
  const double ystep = detail::nice_step(y_hi - y_lo, 5);
  for (double t = std::ceil(y_lo / ystep) * ystep; t <= y_hi + 1e-9;
       t += ystep) {
    const double gy = py(t);
    out += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(gy) + "\" x2=\"" +
           fmt(left + pw) + "\" y2=\"" + fmt(gy) + "\" stroke=\"#e0e0e0\"/>\n";
    out += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(gy + 4) +
           "\" text-anchor=\"end\">" + fmt(t) + "</text>\n";
  }
  out += "</g>\n";

  out += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" +
         fmt(pw) + "\" height=\"" + fmt(ph) +
         "\" fill=\"none\" stroke=\"#808080\"/>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = palette(si);
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!pts.empty()) pts += " ";
      pts += fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out += "<circle cx=\"" + fmt(px(s.x[i])) + "\" cy=\"" + fmt(py(s.y[i])) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
  }

  const double lx = left + 10, ly = top + 10;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double row = ly + 16.0 * static_cast<double>(si);
    out += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(row) + "\" x2=\"" +
           fmt(lx + 18) + "\" y2=\"" + fmt(row) + "\" stroke=\"" +
           std::string(palette(si)) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fmt(lx + 24) + "\" y=\"" + fmt(row + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#202020\">" + escape(series[si].label) + "</text>\n";
  }

  out += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" +
         fmt(opt.height - 10.0) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\" fill=\"#202020\">" +
         escape(opt.x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + fmt(top + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" fill=\"#202020\" transform=\"rotate(-90 16 " +
         fmt(top + ph / 2) + ")\">" + escape(opt.y_label) + "</text>\n";
  out += "</svg>\n";
  return out;
}

// Annular-sector heatmap of a polar histogram, ego at the center, forward
// axis pointing up. Shading is logarithmic in the bin count.
inline std::string polar_heatmap(const PolarDensity& density,
                                 const std::string& title) {
  const int size = 560;
  const double cx = size / 2.0, cy = size / 2.0 + 14.0;
  const double radius = size / 2.0 - 44.0;

  long long cmax = 1;
  for (long long c : density.counts) cmax = std::max(cmax, c);
  const double log_max = std::log1p(static_cast<double>(cmax));

  auto shade = [&](long long c) {
    const double t = std::log1p(static_cast<double>(c)) / log_max;
    const int r = static_cast<int>(std::lround(247 + t * (8 - 247)));
    const int g = static_cast<int>(std::lround(251 + t * (48 - 251)));
    const int b = static_cast<int>(std::lround(255 + t * (107 - 255)));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };

  // Bearing 0 (straight ahead) renders upward; bearings grow
  // counterclockwise in the vehicle frame, which is clockwise on screen.
  auto point = [&](double bearing, double range) {
    const double rr = range / density.max_radius * radius;
    return std::pair<double, double>{cx + rr * std::sin(-bearing),
                                     cy - rr * std::cos(bearing)};
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(size) + "\" height=\"" + std::to_string(size) +
         "\" viewBox=\"0 0 " + std::to_string(size) + " " +
         std::to_string(size) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += "<text x=\"" + fmt(cx) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\" fill=\"#202020\">" +
         escape(title) + "</text>\n";

  for (int ri = 0; ri < density.n_radius; ++ri) {
    const double r0 = density.max_radius * ri / density.n_radius;
    const double r1 = density.max_radius * (ri + 1) / density.n_radius;
    for (int ai = 0; ai < density.n_angle; ++ai) {
      const double a0 = -kPi + 2.0 * kPi * ai / density.n_angle;
      const double a1 = -kPi + 2.0 * kPi * (ai + 1) / density.n_angle;
      const auto [x00, y00] = point(a0, r0);
      const auto [x01, y01] = point(a1, r0);
      const auto [x10, y10] = point(a0, r1);
      const auto [x11, y11] = point(a1, r1);
      const double pr0 = r0 / density.max_radius * radius;
      const double pr1 = r1 / density.max_radius * radius;
      std::string d = "M" + fmt(x00) + " " + fmt(y00);
      d += "L" + fmt(x10) + " " + fmt(y10);
      d += "A" + fmt(pr1) + " " + fmt(pr1) + " 0 0 0 " + fmt(x11) + " " +
           fmt(y11);
      d += "L" + fmt(x01) + " " + fmt(y01);
      if (pr0 > 0.0)
        d += "A" + fmt(pr0) + " " + fmt(pr0) + " 0 0 1 " + fmt(x00) + " " +
             fmt(y00);
      d += "Z";
      out += "<path d=\"" + d + "\" fill=\"" +
             shade(density.at(ri, ai)) + "\" stroke=\"#d8d8d8\" "
             "stroke-width=\"0.4\"/>\n";
    }
  }

  for (int ri = 1; ri <= density.n_radius; ri += (density.n_radius + 3) / 4) {
    const double rr = radius * ri / density.n_radius;
    out += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" +
           fmt(rr) + "\" fill=\"none\" stroke=\"#a0a0a0\" "
           "stroke-dasharray=\"3 3\"/>\n";
    out += "<text x=\"" + fmt(cx + 4) + "\" y=\"" + fmt(cy - rr - 3) +
           "\" font-family=\"sans-serif\" font-size=\"10\" "
           "fill=\"#606060\">" +
           fmt(density.max_radius * ri / density.n_radius) + " m</text>\n";
  }
  out += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) +
         "\" r=\"4\" fill=\"#d62728\"/>\n";
  out += "<text x=\"" + fmt(cx) + "\" y=\"" + fmt(cy - radius - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\" fill=\"#606060\">forward</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace coopsim::svg
