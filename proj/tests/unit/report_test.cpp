#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/report.hpp"
#include "support/fixtures.hpp"

using namespace repalign;
using namespace repalign::report;
using tensorio::ScoreTable;

namespace {

ScoreTable ten_layers() {
  ScoreTable t;
  for (int i = 0; i < 10; ++i) {
    std::string u = "l" + std::to_string(i);
    t.add({"net", u, i, "Baseline", "rsa_saliency", 0.1 * i - 0.3, 10, 0});
    t.add({"net", u, i, "Baseline", "rsa_semantics", 0.05 * i, 10, 0});
    t.add({"net", u, i, "Control", "delta_rsa_saliency", 0.01 * (i + 1), 10, 0});
  }
  return t;
}

}  // namespace

TEST(Bins, TenLayersInFiveBins) {
  auto rows = bin_scores(ten_layers(), 5);
  std::vector<BinRow> sal;
  for (const auto& r : rows)
    if (r.metric == "rsa_saliency") sal.push_back(r);
  ASSERT_EQ(sal.size(), 5u);
  for (std::size_t b = 0; b < 5; ++b) {
    EXPECT_EQ(sal[b].bin, b);
    EXPECT_EQ(sal[b].first_layer, 2 * b);
    EXPECT_EQ(sal[b].last_layer, 2 * b + 1);
    EXPECT_EQ(sal[b].n_layers, 2u);
    EXPECT_NEAR(sal[b].mean, 0.1 * (2 * b + 0.5) - 0.3, 1e-12);
  }
}

TEST(Bins, SingleBinIsGrandMean) {
  auto rows = bin_scores(ten_layers(), 1);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.n_layers, 10u);
    if (r.metric == "delta_rsa_saliency") EXPECT_NEAR(r.mean, 0.055, 1e-12);
  }
}

TEST(Bins, GroupByOracle) {
  Rng rng{2};
  ScoreTable t;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<std::pair<int, double>>> oracle;
  for (std::string sys : {"a", "b"})
    for (int i = 0; i < 7; ++i) {
      double v = rng.unit() - 0.5;
      t.add({sys, "u" + std::to_string(i), 6 - i, "Baseline", "rsa_saliency", v, 5, 0});
      oracle[{sys, "Baseline", "rsa_saliency"}].push_back({6 - i, v});
    }
  auto rows = bin_scores(t, 3);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    auto series = oracle.at({r.system, r.condition, r.metric});
    std::sort(series.begin(), series.end());
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < series.size(); ++i)
      if (i * 3 / series.size() == r.bin) s += series[i].second, ++n;
    EXPECT_EQ(r.n_layers, n);
    EXPECT_NEAR(r.mean, s / n, 1e-12);
  }
}

TEST(Bins, MoreBinsThanLayers) {
  ScoreTable t;
  t.add({"n", "a", 0, "Baseline", "rsa_saliency", 0.2, 3, 0});
  t.add({"n", "b", 1, "Baseline", "rsa_saliency", 0.4, 3, 0});
  auto rows = bin_scores(t, 5);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[1].mean, 0.4);
}

TEST(Bins, Rejections) {
  EXPECT_THROW(bin_scores(ScoreTable{}, 5), Error);
  EXPECT_THROW(bin_scores(ten_layers(), 0), Error);
}

TEST(Report, WritesFiles) {
  testkit::TempDir dir;
  auto paths = write_report(ten_layers(), 5, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir / "bins.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "layers.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "net__Baseline.svg"));
  EXPECT_TRUE(std::filesystem::exists(dir / "net__Control.svg"));
  EXPECT_EQ(paths.size(), 4u);
  auto svg = testkit::read_bytes(dir / "net__Baseline.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("rsa_semantics"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Report, SvgEscapesText) {
  auto svg = line_chart_svg("a<b & c", "layer", {{"s", {{0, 1}, {1, 2}}}});
  EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}
