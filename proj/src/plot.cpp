/*
 * Copyright 2026 The FD-VAE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fdvae/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "fdvae/error.hpp"

namespace fdvae::plot {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string Escape(const std::string& s) {
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
  double x0, x1, y0, y1;

  double X(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double Y(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

Frame Bounds(const Chart& chart) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) {
      throw InternalError("SeriesMismatch", "series " + s.name + " has unequal x/y lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) return {0, 1, 0, 1};
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad};
}

void Axes(std::ostringstream& out, const Chart& chart, const Frame& f) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << Escape(chart.title) << "</text>\n";
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left
      << "\" height=\"" << bottom - top << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << std::setprecision(4);
  for (int i = 0; i <= 4; ++i) {
    const double vx = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double vy = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << f.X(vx) << "\" y=\"" << bottom + 16
        << "\" text-anchor=\"middle\">" << vx << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << f.Y(vy) + 4 << "\" text-anchor=\"end\">"
        << vy << "</text>\n";
    out << "<line x1=\"" << left << "\" x2=\"" << right << "\" y1=\"" << f.Y(vy) << "\" y2=\""
        << f.Y(vy) << "\" stroke=\"#eee\"/>\n";
  }
  out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << Escape(chart.x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << (top + bottom) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(chart.y_label) << "</text>\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const double y = top + 14 + 18 * double(k);
    out << "<rect x=\"" << right + 12 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[k % 10] << "\"/><text x=\"" << right + 28 << "\" y=\"" << y << "\">"
        << Escape(chart.series[k].name) << "</text>\n";
  }
}

std::string Render(const Chart& chart, bool lines) {
  const Frame f = Bounds(chart);
  std::ostringstream out;
  Axes(out, chart, f);
  out << std::setprecision(6);
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kPalette[k % 10];
    if (lines) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (std::isfinite(s.y[i])) out << f.X(s.x[i]) << ',' << f.Y(s.y[i]) << ' ';
      }
      out << "\"/>\n";
    } else {
      out << "<g fill=\"" << color << "\" fill-opacity=\"0.6\">\n";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << "<circle cx=\"" << f.X(s.x[i]) << "\" cy=\"" << f.Y(s.y[i]) << "\" r=\"2\"/>\n";
      }
      out << "</g>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::filesystem::path Write(const Chart& chart, const std::filesystem::path& stem, bool lines) {
  std::filesystem::path svg = stem;
  svg += ".svg";
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::ofstream(svg) << Render(chart, lines);
  std::ofstream(csv) << ChartCsv(chart);
  if (!std::filesystem::exists(svg)) {
    throw DataError("UnwritableFile", "cannot write " + svg.string());
  }
  return svg;
}

}  // namespace

std::string LineChartSvg(const Chart& chart) { return Render(chart, true); }
std::string ScatterChartSvg(const Chart& chart) { return Render(chart, false); }

std::string ChartCsv(const Chart& chart) {
  std::ostringstream out;
  out << "series,x,y\n" << std::setprecision(17);
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << s.name << ',' << s.x[i] << ',' << s.y[i] << '\n';
    }
  }
  return out.str();
}

std::filesystem::path WriteLineChart(const Chart& chart, const std::filesystem::path& stem) {
  return Write(chart, stem, true);
}

std::filesystem::path WriteScatterChart(const Chart& chart, const std::filesystem::path& stem) {
  return Write(chart, stem, false);
}

}  // namespace fdvae::plot
