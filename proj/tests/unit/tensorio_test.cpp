#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "core/error.hpp"
#include "core/tensorio.hpp"
#include "support/fixtures.hpp"

using namespace repalign;
using tensorio::FeatureMatrix;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::partial;
}

}  // namespace

TEST(FeatureMatrix, ValidatesShapeAndContents) {
  EXPECT_EQ(code_of([] { FeatureMatrix({"a"}, 1, {1.0}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { FeatureMatrix({"a", "b"}, 0, {}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { FeatureMatrix({"a", "b"}, 2, {1, 2, 3}); }), Errc::format);
  EXPECT_EQ(code_of([] { FeatureMatrix({"a", "a"}, 1, {1, 2}); }), Errc::duplicate_key);
  EXPECT_EQ(code_of([] { FeatureMatrix({"a", "b"}, 1, {1, std::numeric_limits<double>::quiet_NaN()}); }),
            Errc::non_finite);
  EXPECT_EQ(code_of([] { FeatureMatrix({"a", "b"}, 1, {1, std::numeric_limits<double>::infinity()}); }),
            Errc::non_finite);
}

TEST(FeatureMatrix, ReorderPermutesRows) {
  FeatureMatrix m({"a", "b", "c"}, 4, {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2});
  auto r = m.reordered({"c", "a", "b"});
  EXPECT_EQ(r.items(), (std::vector<std::string>{"c", "a", "b"}));
  EXPECT_EQ(r.row(0)[0], 2.0);
  EXPECT_EQ(r.row(1)[0], 0.0);
  EXPECT_EQ(r.row(2)[3], 1.0);
}

TEST(FeatureMatrix, ReorderReportsMissingAndUnexpectedIds) {
  FeatureMatrix m({"a", "b", "c"}, 1, {0, 1, 2});
  try {
    m.reordered({"a", "b", "z"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::id_mismatch);
    std::string what = e.what();
    EXPECT_NE(what.find("\"z\""), std::string::npos);
    EXPECT_NE(what.find("\"c\""), std::string::npos);
  }
}

TEST(TensorIo, SidecarPathReplacesExtension) {
  EXPECT_EQ(tensorio::ids_sidecar_path("/x/layer3.npy"), std::filesystem::path("/x/layer3.ids.txt"));
}

TEST(TensorIo, SaveLoadRoundTripWithExpectedOrder) {
  testkit::TempDir dir;
  auto m = testkit::random_matrix(5, 7, 3);
  tensorio::save_feature_matrix(m, dir / "feat.npy");
  auto same = tensorio::load_feature_matrix(dir / "feat.npy");
  EXPECT_EQ(same.items(), m.items());
  EXPECT_EQ(same.data(), m.data());
  EXPECT_EQ(same.source_tag(), "feat");

  std::vector<std::string> order = m.items();
  std::reverse(order.begin(), order.end());
  auto rev = tensorio::load_feature_matrix(dir / "feat.npy", order);
  EXPECT_EQ(rev.items(), order);
  EXPECT_EQ(rev.row(0)[0], m.row(4)[0]);
}

TEST(TensorIo, LoadFailsWithoutSidecarOrOnRowMismatch) {
  testkit::TempDir dir;
  auto m = testkit::random_matrix(3, 2, 1);
  tensorio::save_feature_matrix(m, dir / "f.npy");
  std::filesystem::remove(dir / "f.ids.txt");
  EXPECT_EQ(code_of([&] { tensorio::load_feature_matrix(dir / "f.npy"); }), Errc::io);
  tensorio::write_ids(dir / "f.ids.txt", {"a", "b"});
  EXPECT_EQ(code_of([&] { tensorio::load_feature_matrix(dir / "f.npy"); }), Errc::format);
  EXPECT_EQ(code_of([&] { tensorio::load_feature_matrix(dir / "nope.npy"); }), Errc::io);
}

TEST(TensorIo, CaptionAverageIsOrderInvariant) {
  std::vector<std::vector<double>> caps = {{1, 2, 3}, {4, 5, 6}, {-1, 0.5, 9}};
  auto a = tensorio::average_caption_embeddings(caps);
  std::reverse(caps.begin(), caps.end());
  auto b = tensorio::average_caption_embeddings(caps);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-15);
  EXPECT_NEAR(a[0], 4.0 / 3.0, 1e-15);
  std::vector<std::vector<double>> dup = {{0.25, 0.5}, {0.25, 0.5}};
  EXPECT_EQ(tensorio::average_caption_embeddings(dup), (std::vector<double>{0.25, 0.5}));
  EXPECT_THROW(tensorio::average_caption_embeddings(std::vector<std::vector<double>>{}), Error);
  std::vector<std::vector<double>> ragged = {{1, 2}, {1}};
  EXPECT_THROW(tensorio::average_caption_embeddings(ragged), Error);
}

TEST(Manifest, RoundTripWithCaptionsAndLabels) {
  testkit::TempDir dir;
  std::filesystem::create_directories(dir / "img");
  write_png(Image(4, 4, 1, 2, 3), dir / "img/a.png");
  write_png(Image(4, 4, 3, 2, 1), dir / "img/b.png");
  tensorio::DatasetManifest m;
  m.entries.push_back({"a", "img/a.png", {"a cat", "the cat"}, {"cat"}});
  m.entries.push_back({"b", "img/b.png", {"a dog"}, {"dog", "person"}});
  tensorio::write_manifest(m, dir / "manifest.csv");
  ASSERT_TRUE(std::filesystem::exists(dir / "captions.json"));

  tensorio::ManifestOptions opt;
  opt.require_captions = true;
  auto back = tensorio::load_manifest(dir / "manifest.csv", opt);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.ids(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(back.entries[0].captions.size(), 2u);
  EXPECT_EQ(back.entries[1].labels, (std::vector<std::string>{"dog", "person"}));
  EXPECT_EQ(back.entries[0].image_path, dir / "img/a.png");
}

TEST(Manifest, DetectsMissingImagesDuplicatesAndCaptions) {
  testkit::TempDir dir;
  std::ofstream(dir / "m.csv") << "image_id,image_path,labels\na,missing.png,x\n";
  EXPECT_EQ(code_of([&] { tensorio::load_manifest(dir / "m.csv"); }), Errc::io);
  tensorio::ManifestOptions lax;
  lax.check_paths = false;
  EXPECT_NO_THROW(tensorio::load_manifest(dir / "m.csv", lax));
  lax.require_captions = true;
  EXPECT_EQ(code_of([&] { tensorio::load_manifest(dir / "m.csv", lax); }), Errc::missing_input);

  std::ofstream(dir / "d.csv") << "image_id,image_path\na,x.png\na,y.png\n";
  tensorio::ManifestOptions nocheck;
  nocheck.check_paths = false;
  EXPECT_EQ(code_of([&] { tensorio::load_manifest(dir / "d.csv", nocheck); }), Errc::duplicate_key);
  std::ofstream(dir / "h.csv") << "id,path\na,x.png\n";
  EXPECT_EQ(code_of([&] { tensorio::load_manifest(dir / "h.csv", nocheck); }), Errc::format);
}

TEST(ScoreTable, RejectsDuplicatesAndOutOfRangeValues) {
  tensorio::ScoreTable t;
  t.add({"net", "layer1", 0, "Baseline", "rsa_saliency", 0.5, 10, 1});
  EXPECT_EQ(code_of([&] { t.add({"net", "layer1", 0, "Baseline", "rsa_saliency", 0.1, 10, 1}); }),
            Errc::duplicate_key);
  EXPECT_EQ(code_of([&] { t.add({"net", "layer1", 0, "Baseline", "rsa_semantics", 1.5, 10, 1}); }),
            Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { t.add({"net", "layer1", 0, "Salient", "delta_rsa_saliency", -0.1, 10, 1}); }),
            Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { t.add({"net", "layer1", 0, "Baseline", "brain_score", std::nan(""), 10, 1}); }),
            Errc::non_finite);
  EXPECT_NO_THROW(t.add({"net", "layer1", 0, "Salient", "delta_rsa_saliency", 1.7, 10, 1}));
  EXPECT_EQ(t.find("net", "layer1", "Baseline", "rsa_saliency"), 0.5);
  EXPECT_FALSE(t.find("net", "layer2", "Baseline", "rsa_saliency").has_value());
}

TEST(ScoreTable, CsvRoundTripIsExact) {
  testkit::TempDir dir;
  tensorio::ScoreTable t;
  t.add({"resnet,50", "layer\"1", 0, "Baseline", "rsa_saliency", 1.0 / 3.0, 1150, 7});
  t.add({"resnet,50", "layer2", 1, "Salient", "delta_rsa_semantics", 0.1, 1150, 7});
  tensorio::write_score_table(t, dir / "scores.csv");
  auto back = tensorio::read_score_table(dir / "scores.csv");
  EXPECT_TRUE(back == t);
  tensorio::write_score_table(back, dir / "again.csv");
  EXPECT_EQ(testkit::read_bytes(dir / "scores.csv"), testkit::read_bytes(dir / "again.csv"));
}

TEST(ScoreTable, ReadRejectsWrongHeader) {
  testkit::TempDir dir;
  std::ofstream(dir / "s.csv") << "system,unit\nx,y\n";
  EXPECT_EQ(code_of([&] { tensorio::read_score_table(dir / "s.csv"); }), Errc::format);
}
