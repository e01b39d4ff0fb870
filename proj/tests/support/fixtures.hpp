#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/tensorio.hpp"

namespace repalign::testkit {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct Rgb {
  std::uint8_t r, g, b;
};

Image disk_image(int w, int h, double cx, double cy, double radius, Rgb fg, Rgb bg);
Image bar_image(int w, int h, double cx, double cy, double length, double thickness, double angle_deg, Rgb fg, Rgb bg);
Image noise_image(int w, int h, std::uint64_t seed, int base = 128, int amplitude = 60);

std::vector<std::string> make_ids(std::size_t n, const std::string& prefix = "img");
tensorio::FeatureMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, const std::string& prefix = "img");

std::string read_bytes(const fs::path& path);

/// Pool for distractor synthesis. The first three entries are targets: a
/// faint disk on flat gray. The rest split into two caption groups with
/// orthogonal embeddings; each group has flat-gray "camouflage" images and
/// loud high-contrast images. Targets share the first group.
struct ForgeCorpus {
  std::vector<std::string> ids;
  std::vector<Image> images;
  tensorio::FeatureMatrix embeddings;
  std::size_t n_targets = 3;
};

ForgeCorpus forge_corpus();

/// Writes PNGs, manifest.csv, captions.json and embeddings.npy into dir.
void write_corpus(const ForgeCorpus& corpus, const fs::path& dir);

}  // namespace repalign::testkit

namespace repalign::testkit {

struct StudyOptions {
  bool brain = true;
  bool drop_condition = false;  // leaves one condition matrix out
  std::size_t n_perm = 200;
};

/// Synthetic study on disk: target features, two networks with layer and
/// condition matrices, two subjects x two ROIs of responses and run.toml.
/// netA/layer1 equals the semantic features; netA Control and Salient
/// matrices equal their baseline layer. Returns the config path.
fs::path write_study(const fs::path& dir, const StudyOptions& options = {});

}  // namespace repalign::testkit
