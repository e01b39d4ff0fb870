#include "core/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <tuple>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace repalign::report {

namespace fs = std::filesystem;
using tensorio::ScoreRow;

namespace {

using SeriesKey = std::tuple<std::string, std::string, std::string>;

std::map<SeriesKey, std::vector<const ScoreRow*>> group_series(const tensorio::ScoreTable& scores) {
  if (scores.empty()) fail(Errc::invalid_argument, "score table is empty");
  std::map<SeriesKey, std::vector<const ScoreRow*>> groups;
  for (const auto& r : scores.rows()) groups[{r.system, r.condition, r.metric}].push_back(&r);
  for (auto& [key, rows] : groups)
    std::stable_sort(rows.begin(), rows.end(), [](const ScoreRow* a, const ScoreRow* b) {
      return std::tie(a->unit_index, a->unit) < std::tie(b->unit_index, b->unit);
    });
  return groups;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
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

std::string file_safe(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::vector<BinRow> bin_scores(const tensorio::ScoreTable& scores, std::size_t bins) {
  if (bins == 0) fail(Errc::invalid_argument, "bin count must be positive");
  std::vector<BinRow> out;
  for (const auto& [key, rows] : group_series(scores)) {
    const std::size_t n = rows.size();
    const std::size_t b_count = std::min(bins, n);
    std::vector<BinRow> local(b_count);
    for (std::size_t b = 0; b < b_count; ++b) {
      local[b].system = std::get<0>(key);
      local[b].condition = std::get<1>(key);
      local[b].metric = std::get<2>(key);
      local[b].bin = b;
      local[b].first_layer = n;
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& br = local[i * b_count / n];
      br.first_layer = std::min(br.first_layer, i);
      br.last_layer = std::max(br.last_layer, i);
      ++br.n_layers;
      br.mean += rows[i]->value;
    }
    for (auto& br : local) {
      br.mean /= static_cast<double>(br.n_layers);
      out.push_back(std::move(br));
    }
  }
  return out;
}

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 160, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 0;
  bool first = true;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      if (first) {
        x0 = x1 = x;
        y0 = y1 = y;
        first = false;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
      << "</text>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (double y : {y0, (y0 + y1) / 2, y1})
    svg << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  for (double x : {x0, x1})
    svg << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
  if (y0 < 0 && y1 > 0)
    svg << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0)
        << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << escape_xml(x_label)
      << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (auto [x, y] : series[k].points)
      if (std::isfinite(y)) pts += num(px(x)) + "," + num(py(y)) + " ";
    if (!pts.empty()) pts.pop_back();
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    const double ly = T + 14.0 * static_cast<double>(k);
    svg << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 28 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << W - R + 32 << "\" y=\"" << ly + 4 << "\">" << escape_xml(series[k].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<fs::path> write_report(const tensorio::ScoreTable& scores, std::size_t bins, const fs::path& out_dir) {
  const auto binned = bin_scores(scores, bins);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  std::vector<csv::Row> bin_rows;
  for (const auto& b : binned)
    bin_rows.push_back({b.system, b.condition, b.metric, std::to_string(b.bin), std::to_string(b.first_layer),
                        std::to_string(b.last_layer), std::to_string(b.n_layers), csv::format_double(b.mean)});
  csv::write_file(out_dir / "bins.csv",
                  {"system", "condition", "metric", "bin", "first_layer", "last_layer", "n_layers", "mean"}, bin_rows);
  written.push_back(out_dir / "bins.csv");

  const auto groups = group_series(scores);
  std::vector<csv::Row> layer_rows;
  std::map<std::pair<std::string, std::string>, std::vector<Series>> charts;
  for (const auto& [key, rows] : groups) {
    Series s;
    s.label = std::get<2>(key);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto* r = rows[i];
      layer_rows.push_back({r->system, r->unit, std::to_string(r->unit_index), r->condition, r->metric,
                            std::to_string(i), csv::format_double(r->value)});
      s.points.emplace_back(static_cast<double>(i), r->value);
    }
    charts[{std::get<0>(key), std::get<1>(key)}].push_back(std::move(s));
  }
  csv::write_file(out_dir / "layers.csv", {"system", "unit", "unit_index", "condition", "metric", "layer", "value"},
                  layer_rows);
  written.push_back(out_dir / "layers.csv");

  for (const auto& [key, series] : charts) {
    fs::path path = out_dir / (file_safe(key.first) + "__" + file_safe(key.second) + ".svg");
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(Errc::io, "cannot write " + path.string());
    f << line_chart_svg(key.first + " / " + key.second, "layer position", series);
    written.push_back(path);
  }
  return written;
}

}  // namespace repalign::report
