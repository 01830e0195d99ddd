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

// Minimal SVG charts. Every chart is written together with a CSV holding the
// exact plotted values.

#ifndef FDVAE_PLOT_HPP_
#define FDVAE_PLOT_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace fdvae::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

std::string LineChartSvg(const Chart& chart);
std::string ScatterChartSvg(const Chart& chart);

// Long-format CSV: series,x,y (full precision).
std::string ChartCsv(const Chart& chart);

// Writes <stem>.svg and <stem>.csv; returns the SVG path.
std::filesystem::path WriteLineChart(const Chart& chart, const std::filesystem::path& stem);
std::filesystem::path WriteScatterChart(const Chart& chart, const std::filesystem::path& stem);

}  // namespace fdvae::plot

#endif  // FDVAE_PLOT_HPP_
