#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "core/tensorio.hpp"

namespace repalign::report {

struct BinRow {
  std::string system;
  std::string condition;
  std::string metric;
  std::size_t bin = 0;
  std::size_t first_layer = 0;  // position in the unit_index-sorted series
  std::size_t last_layer = 0;
  std::size_t n_layers = 0;
  double mean = 0.0;
};

/// Equal-width bins over layer position for every (system, condition, metric)
/// series: layer i of n lands in bin floor(i * B / n), B = min(bins, n).
std::vector<BinRow> bin_scores(const tensorio::ScoreTable& scores, std::size_t bins);

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Minimal standalone SVG line chart.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::vector<Series>& series);

/// Writes bins.csv, layers.csv (raw per-layer values) and one SVG per
/// (system, condition) into out_dir. Returns the written paths.
std::vector<std::filesystem::path> write_report(const tensorio::ScoreTable& scores, std::size_t bins,
                                                const std::filesystem::path& out_dir);

}  // namespace repalign::report
