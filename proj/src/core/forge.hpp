#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/parallel.hpp"
#include "core/tensorio.hpp"

namespace repalign::forge {

struct ThresholdSpec {
  double sal_lo = 0.0;  // 5th percentile of saliency disruption
  double sal_hi = 0.0;  // 95th percentile
  double sem_lo = 0.0;  // 1st percentile of caption cosine distance
  double sem_hi = 0.0;  // 99th percentile
  std::size_t n_saliency_pairs = 0;
  std::size_t n_caption_items = 0;
  std::uint64_t seed = 0;

  /// Throws degenerate unless lo < hi for both axes, invalid_argument when a
  /// value leaves [0, 2].
  void validate() const;
};

enum class DistractorType { Control, Salient, Semantic, SalientSemantic, Baseline };
enum class Side { Top, Bottom, Left, Right };

const char* to_string(DistractorType t) noexcept;
const char* to_string(Side s) noexcept;
DistractorType parse_distractor_type(const std::string& s);
Side parse_side(const std::string& s);

inline constexpr DistractorType kDistractorClasses[] = {DistractorType::Control, DistractorType::Salient,
                                                        DistractorType::Semantic, DistractorType::SalientSemantic};

struct OverlaySize {
  int width = 0;
  int height = 0;
  bool operator==(const OverlaySize&) const = default;
};

/// Distractor rectangle anchored flush with one side of the target.
struct Placement {
  Side side = Side::Top;
  int offset = 0;  // along the chosen side
  int dist_w = 0;
  int dist_h = 0;

  int x(int target_w) const;
  int y(int target_h) const;
  bool operator==(const Placement&) const = default;
};

/// Size covering 10% of the target area at the source aspect ratio. With r the
/// long/short ratio of the source, the longer side is round(sqrt(0.1 * tw * th * r))
/// and the shorter side round(longer / r), both half-up and at least one pixel.
OverlaySize resize_for_overlay(int target_w, int target_h, int src_w, int src_h);

bool fits(int target_w, int target_h, OverlaySize size);

/// Uniform side, then uniform offset over the flush positions on that side.
Placement sample_placement(Rng& rng, int target_w, int target_h, OverlaySize size);

/// Opaque paste of the distractor, resized to the placement rectangle.
Image compose(const Image& target, const Image& distractor, const Placement& p);

/// Cosine distance between the flattened saliency maps of both images.
double saliency_disruption(const Image& target, const Image& composed);
double saliency_disruption(std::span<const double> target_map, const Image& composed);

/// Linear-interpolation percentile (p in [0, 100]) of unsorted samples.
double percentile(std::vector<double> samples, double p);

std::optional<DistractorType> classify_candidate(double sal_disruption, double sem_distance, const ThresholdSpec& t);

// ---------------------------------------------------------------------------

/// Random-access image pool; index order matches the embeddings rows.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual const std::string& id(std::size_t i) const = 0;
  virtual Image load(std::size_t i) const = 0;
};

/// Decodes images from a manifest on demand.
class ManifestImageSource : public ImageSource {
 public:
  explicit ManifestImageSource(tensorio::DatasetManifest manifest) : manifest_(std::move(manifest)) {}
  std::size_t size() const override { return manifest_.entries.size(); }
  const std::string& id(std::size_t i) const override { return manifest_.entries[i].image_id; }
  Image load(std::size_t i) const override { return read_image(manifest_.entries[i].image_path); }
  const tensorio::DatasetManifest& manifest() const { return manifest_; }

 private:
  tensorio::DatasetManifest manifest_;
};

/// Images already in memory.
class MemoryImageSource : public ImageSource {
 public:
  MemoryImageSource(std::vector<std::string> ids, std::vector<Image> images);
  std::size_t size() const override { return images_.size(); }
  const std::string& id(std::size_t i) const override { return ids_[i]; }
  Image load(std::size_t i) const override { return images_[i]; }

 private:
  std::vector<std::string> ids_;
  std::vector<Image> images_;
};

struct CalibrationOptions {
  std::size_t n_saliency_pairs = 1000;
  std::size_t n_caption_items = 5000;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Saliency thresholds from sampled (target, distractor, placement) triples;
/// semantic thresholds from all pairwise caption distances over a sample of
/// n_caption_items rows. `embeddings` rows must follow the pool order.
ThresholdSpec calibrate_thresholds(const ImageSource& pool, const tensorio::FeatureMatrix& embeddings,
                                   const CalibrationOptions& options);

struct DistractorRecord {
  std::string target_id;
  std::string distractor_id;  // empty for Baseline
  DistractorType dtype = DistractorType::Baseline;
  std::optional<Placement> placement;
  double sal_disruption = 0.0;
  double sem_distance = 0.0;
  std::string composed_path;  // relative to the output directory
  std::size_t attempts = 0;
};

struct BuildOptions {
  std::size_t n_targets = 0;
  std::size_t retry_budget = 200;  // (candidate, placement) attempts per class per target
  std::uint64_t seed = 0;
  int workers = 1;
  /// When set, composed images are written as PNG under out_dir/images.
  std::optional<std::filesystem::path> out_dir;
  /// Receives one line per exhausted target.
  std::function<void(const std::string&)> log;
};

struct ExhaustedTarget {
  std::string target_id;
  DistractorType dtype;
  std::size_t attempts = 0;
};

struct DatasetResult {
  std::vector<DistractorRecord> records;  // 5 per successful target, targets in pool order
  std::vector<Image> images;              // parallel to records when out_dir is unset
  std::vector<ExhaustedTarget> exhausted;
};

/// Targets are the first n_targets pool entries. Each gets a Baseline record
/// and one record per distractor class. A target whose search runs out of
/// budget for any class is dropped whole; more than 10% dropped is an error.
DatasetResult build_dataset(const ImageSource& pool, const tensorio::FeatureMatrix& embeddings,
                            const ThresholdSpec& thresholds, const BuildOptions& options);

extern const std::vector<std::string> kDatasetManifestHeader;

void write_dataset_manifest(const std::vector<DistractorRecord>& records, const std::filesystem::path& path);
std::vector<DistractorRecord> read_dataset_manifest(const std::filesystem::path& path);
void write_thresholds(const ThresholdSpec& t, const std::filesystem::path& path);
ThresholdSpec read_thresholds(const std::filesystem::path& path);

}  // namespace repalign::forge
