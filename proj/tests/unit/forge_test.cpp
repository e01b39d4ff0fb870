#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/forge.hpp"
#include "core/repsim.hpp"
#include "support/fixtures.hpp"

using namespace repalign;
using namespace repalign::forge;
using testkit::Rgb;

TEST(Overlay, TenPercentAtSourceAspect) {
  EXPECT_EQ(resize_for_overlay(640, 480, 400, 200), (OverlaySize{248, 124}));
  EXPECT_EQ(resize_for_overlay(500, 500, 77, 77), (OverlaySize{158, 158}));
  EXPECT_EQ(resize_for_overlay(10, 10, 1000, 1), (OverlaySize{100, 1}));
}

TEST(Overlay, AreaAndAspectWithinRoundingOnRandomPairs) {
  Rng rng{11};
  for (int i = 0; i < 500; ++i) {
    int tw = static_cast<int>(rng.between(200, 1200)), th = static_cast<int>(rng.between(200, 1200));
    int sw = static_cast<int>(rng.between(100, 1000)), sh = static_cast<int>(rng.between(100, 1000));
    auto s = resize_for_overlay(tw, th, sw, sh);
    double lo = std::min(s.width, s.height), hi = std::max(s.width, s.height);
    double ratio = static_cast<double>(std::max(sw, sh)) / std::min(sw, sh);
    double area = s.width * static_cast<double>(s.height) / (0.1 * tw * th);
    ASSERT_LE(std::fabs(area - 1.0), 1.01 * (0.5 / lo + 1.0 / hi)) << tw << "x" << th << " " << sw << "x" << sh;
    ASSERT_LE(std::fabs(lo - hi / ratio), 0.5 + 1e-9);
    if (lo >= 30) ASSERT_LE(std::fabs(area - 1.0), 0.02);
  }
}

TEST(Overlay, RejectsBadSizes) {
  EXPECT_THROW(resize_for_overlay(0, 10, 5, 5), Error);
  EXPECT_THROW(resize_for_overlay(10, 10, 5, -1), Error);
}

TEST(Placement, FlushWithSideAndInsideTarget) {
  Rng rng{5};
  OverlaySize s{30, 20};
  int seen[4] = {0, 0, 0, 0};
  for (int i = 0; i < 2000; ++i) {
    auto p = sample_placement(rng, 100, 80, s);
    ++seen[static_cast<int>(p.side)];
    int x = p.x(100), y = p.y(80);
    ASSERT_GE(x, 0);
    ASSERT_GE(y, 0);
    ASSERT_LE(x + s.width, 100);
    ASSERT_LE(y + s.height, 80);
    switch (p.side) {
      case Side::Top: ASSERT_EQ(y, 0); break;
      case Side::Bottom: ASSERT_EQ(y + s.height, 80); break;
      case Side::Left: ASSERT_EQ(x, 0); break;
      case Side::Right: ASSERT_EQ(x + s.width, 100); break;
    }
  }
  for (int n : seen) EXPECT_GT(n, 400);
  EXPECT_FALSE(fits(100, 80, OverlaySize{101, 10}));
  EXPECT_THROW(sample_placement(rng, 100, 80, OverlaySize{10, 81}), Error);
}

TEST(Compose, ChangesOnlyTheRectangle) {
  Image target(120, 90, 10, 20, 30);
  Image dist(40, 40, 200, 100, 50);
  Placement p{Side::Right, 17, 33, 25};
  auto out = compose(target, dist, p);
  int x0 = p.x(120), y0 = p.y(90);
  EXPECT_EQ(x0, 87);
  EXPECT_EQ(y0, 17);
  for (int y = 0; y < 90; ++y)
    for (int x = 0; x < 120; ++x) {
      bool inside = x >= x0 && x < x0 + 33 && y >= y0 && y < y0 + 25;
      const auto* px = out.pixel(x, y);
      if (inside)
        ASSERT_TRUE(px[0] == 200 && px[1] == 100 && px[2] == 50) << x << "," << y;
      else
        ASSERT_TRUE(px[0] == 10 && px[1] == 20 && px[2] == 30) << x << "," << y;
    }
  Placement bad{Side::Top, 100, 33, 25};
  EXPECT_THROW(compose(target, dist, bad), Error);
}

TEST(Percentile, IntegerOracle) {
  std::vector<double> v;
  for (int i = 100; i >= 0; --i) v.push_back(i);
  for (int p : {0, 1, 5, 50, 95, 99, 100}) EXPECT_DOUBLE_EQ(percentile(v, p), p);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({7}, 99), 7.0);
  EXPECT_THROW(percentile({}, 5), Error);
  EXPECT_THROW(percentile({1, 2}, 101), Error);
}

TEST(Classify, Quadrants) {
  ThresholdSpec t{0.1, 0.5, 0.2, 0.8};
  EXPECT_EQ(classify_candidate(0.05, 0.1, t), DistractorType::Control);
  EXPECT_EQ(classify_candidate(0.6, 0.2, t), DistractorType::Salient);
  EXPECT_EQ(classify_candidate(0.1, 0.9, t), DistractorType::Semantic);
  EXPECT_EQ(classify_candidate(0.5, 0.8, t), DistractorType::SalientSemantic);
  EXPECT_EQ(classify_candidate(0.3, 0.1, t), std::nullopt);
  EXPECT_EQ(classify_candidate(0.05, 0.5, t), std::nullopt);
}

TEST(Thresholds, Validation) {
  EXPECT_NO_THROW((ThresholdSpec{0.1, 0.5, 0.2, 0.8}.validate()));
  try {
    ThresholdSpec{0.5, 0.5, 0.2, 0.8}.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate);
  }
  EXPECT_THROW((ThresholdSpec{0.1, 2.5, 0.2, 0.8}.validate()), Error);
}

TEST(Names, RoundTrip) {
  for (auto t : {DistractorType::Control, DistractorType::Salient, DistractorType::Semantic,
                 DistractorType::SalientSemantic, DistractorType::Baseline})
    EXPECT_EQ(parse_distractor_type(to_string(t)), t);
  for (auto s : {Side::Top, Side::Bottom, Side::Left, Side::Right}) EXPECT_EQ(parse_side(to_string(s)), s);
  EXPECT_THROW(parse_side("middle"), Error);
}

TEST(Disruption, IdenticalImageIsZero) {
  auto img = testkit::disk_image(160, 120, 80, 60, 20, Rgb{255, 0, 0}, Rgb{0, 0, 0});
  EXPECT_EQ(saliency_disruption(img, img), 0.0);
  auto other = testkit::disk_image(160, 120, 30, 30, 20, Rgb{255, 0, 0}, Rgb{0, 0, 0});
  EXPECT_GT(saliency_disruption(img, other), 0.1);
}

class ForgeCorpusTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new testkit::ForgeCorpus(testkit::forge_corpus());
    pool_ = new MemoryImageSource(corpus_->ids, corpus_->images);
    CalibrationOptions co;
    co.n_saliency_pairs = 100;
    co.n_caption_items = corpus_->ids.size();
    co.seed = 21;
    co.workers = 2;
    thresholds_ = new ThresholdSpec(calibrate_thresholds(*pool_, corpus_->embeddings, co));
  }
  static void TearDownTestSuite() {
    delete thresholds_;
    delete pool_;
    delete corpus_;
  }
  static BuildOptions options(int workers) {
    BuildOptions bo;
    bo.n_targets = 3;
    bo.seed = 4;
    bo.workers = workers;
    return bo;
  }
  static std::size_t index_of(const std::string& id) {
    return static_cast<std::size_t>(std::find(corpus_->ids.begin(), corpus_->ids.end(), id) - corpus_->ids.begin());
  }

  static testkit::ForgeCorpus* corpus_;
  static MemoryImageSource* pool_;
  static ThresholdSpec* thresholds_;
};

testkit::ForgeCorpus* ForgeCorpusTest::corpus_ = nullptr;
MemoryImageSource* ForgeCorpusTest::pool_ = nullptr;
ThresholdSpec* ForgeCorpusTest::thresholds_ = nullptr;

TEST_F(ForgeCorpusTest, CalibratedThresholdsAreOrdered) {
  EXPECT_NO_THROW(thresholds_->validate());
  EXPECT_EQ(thresholds_->n_saliency_pairs, 100u);
  EXPECT_EQ(thresholds_->seed, 21u);
  EXPECT_DOUBLE_EQ(thresholds_->sem_lo, 0.0);
  EXPECT_DOUBLE_EQ(thresholds_->sem_hi, 1.0);
}

TEST_F(ForgeCorpusTest, CalibrationIsDeterministic) {
  CalibrationOptions co;
  co.n_saliency_pairs = 100;
  co.n_caption_items = corpus_->ids.size();
  co.seed = 21;
  co.workers = 1;
  auto again = calibrate_thresholds(*pool_, corpus_->embeddings, co);
  EXPECT_EQ(again.sal_lo, thresholds_->sal_lo);
  EXPECT_EQ(again.sal_hi, thresholds_->sal_hi);
}

TEST_F(ForgeCorpusTest, CalibrationRejectsBadOptions) {
  CalibrationOptions co;
  co.n_saliency_pairs = 1;
  co.n_caption_items = 4;
  EXPECT_THROW(calibrate_thresholds(*pool_, corpus_->embeddings, co), Error);
  co.n_saliency_pairs = 10;
  co.n_caption_items = corpus_->ids.size() + 1;
  EXPECT_THROW(calibrate_thresholds(*pool_, corpus_->embeddings, co), Error);
}

TEST_F(ForgeCorpusTest, ClosedLoopRemeasurement) {
  auto result = build_dataset(*pool_, corpus_->embeddings, *thresholds_, options(2));
  ASSERT_TRUE(result.exhausted.empty());
  ASSERT_EQ(result.records.size(), 15u);
  ASSERT_EQ(result.images.size(), 15u);
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    const auto& target = corpus_->images[index_of(r.target_id)];
    if (r.dtype == DistractorType::Baseline) {
      EXPECT_FALSE(r.placement);
      EXPECT_EQ(result.images[i], target);
      continue;
    }
    ASSERT_TRUE(r.placement);
    double sal = saliency_disruption(target, result.images[i]);
    EXPECT_EQ(sal, r.sal_disruption);
    double sem = repsim::cosine_distance(corpus_->embeddings.row(index_of(r.target_id)),
                                         corpus_->embeddings.row(index_of(r.distractor_id)));
    EXPECT_EQ(sem, r.sem_distance);
    EXPECT_EQ(classify_candidate(sal, sem, *thresholds_), r.dtype) << r.target_id << " " << to_string(r.dtype);
    const auto& d = corpus_->images[index_of(r.distractor_id)];
    auto size = resize_for_overlay(target.width, target.height, d.width, d.height);
    EXPECT_EQ(r.placement->dist_w, size.width);
    EXPECT_EQ(r.placement->dist_h, size.height);
    EXPECT_EQ(compose(target, d, *r.placement), result.images[i]);
  }
  std::size_t per_type[5] = {};
  for (const auto& r : result.records) ++per_type[static_cast<int>(r.dtype)];
  for (auto n : per_type) EXPECT_EQ(n, 3u);
}

TEST_F(ForgeCorpusTest, DeterministicAcrossWorkers) {
  auto a = build_dataset(*pool_, corpus_->embeddings, *thresholds_, options(1));
  auto b = build_dataset(*pool_, corpus_->embeddings, *thresholds_, options(3));
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].distractor_id, b.records[i].distractor_id);
    EXPECT_EQ(a.records[i].placement, b.records[i].placement);
    EXPECT_EQ(a.records[i].attempts, b.records[i].attempts);
    EXPECT_EQ(a.images[i], b.images[i]);
  }
}

TEST_F(ForgeCorpusTest, WritesByteIdenticalOutputs) {
  testkit::TempDir d1, d2;
  auto o1 = options(1);
  o1.out_dir = d1.path();
  auto o2 = options(2);
  o2.out_dir = d2.path();
  auto a = build_dataset(*pool_, corpus_->embeddings, *thresholds_, o1);
  auto b = build_dataset(*pool_, corpus_->embeddings, *thresholds_, o2);
  EXPECT_TRUE(a.images.empty());
  write_dataset_manifest(a.records, d1 / "dataset_manifest.csv");
  write_dataset_manifest(b.records, d2 / "dataset_manifest.csv");
  EXPECT_EQ(testkit::read_bytes(d1 / "dataset_manifest.csv"), testkit::read_bytes(d2 / "dataset_manifest.csv"));
  for (const auto& r : a.records) {
    ASSERT_TRUE(std::filesystem::exists(d1.path() / r.composed_path)) << r.composed_path;
    EXPECT_EQ(testkit::read_bytes(d1.path() / r.composed_path), testkit::read_bytes(d2.path() / r.composed_path));
  }
  auto back = read_dataset_manifest(d1 / "dataset_manifest.csv");
  ASSERT_EQ(back.size(), a.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].target_id, a.records[i].target_id);
    EXPECT_EQ(back[i].dtype, a.records[i].dtype);
    EXPECT_EQ(back[i].placement, a.records[i].placement);
    EXPECT_EQ(back[i].sal_disruption, a.records[i].sal_disruption);
    EXPECT_EQ(back[i].composed_path, a.records[i].composed_path);
  }
}

TEST_F(ForgeCorpusTest, ImpossibleThresholdsExhaust) {
  ThresholdSpec t = *thresholds_;
  t.sal_lo = -1;
  t.sal_hi = 1.99;
  EXPECT_THROW(t.validate(), Error);
  t.sal_lo = 0.0;
  std::vector<std::string> lines;
  auto bo = options(1);
  bo.retry_budget = 5;
  bo.log = [&](const std::string& s) { lines.push_back(s); };
  try {
    build_dataset(*pool_, corpus_->embeddings, t, bo);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::exhausted);
  }
  EXPECT_EQ(lines.size(), 3u);
}

TEST_F(ForgeCorpusTest, BuildValidatesOptions) {
  auto bo = options(1);
  bo.n_targets = 0;
  EXPECT_THROW(build_dataset(*pool_, corpus_->embeddings, *thresholds_, bo), Error);
  bo.n_targets = 100;
  EXPECT_THROW(build_dataset(*pool_, corpus_->embeddings, *thresholds_, bo), Error);
  bo.n_targets = 3;
  bo.retry_budget = 0;
  EXPECT_THROW(build_dataset(*pool_, corpus_->embeddings, *thresholds_, bo), Error);
}

TEST(ThresholdsFile, RoundTrip) {
  testkit::TempDir dir;
  ThresholdSpec t{0.0123456789012345, 0.6, 0.01, 0.99, 1000, 5000, 77};
  write_thresholds(t, dir / "thresholds.json");
  auto back = read_thresholds(dir / "thresholds.json");
  EXPECT_EQ(back.sal_lo, t.sal_lo);
  EXPECT_EQ(back.sem_hi, t.sem_hi);
  EXPECT_EQ(back.n_caption_items, 5000u);
  EXPECT_EQ(back.seed, 77u);
}
