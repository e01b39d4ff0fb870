#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace repalign::tensorio {

/// n_items x d matrix of finite values, one row per image. The item list
/// fixes row order for every downstream computation.
class FeatureMatrix {
 public:
  FeatureMatrix(std::vector<std::string> items, std::size_t cols, std::vector<double> data,
                std::string source_tag = {});

  std::size_t rows() const noexcept { return items_.size(); }
  std::size_t cols() const noexcept { return cols_; }
  const std::vector<std::string>& items() const noexcept { return items_; }
  const std::vector<double>& data() const noexcept { return data_; }
  const std::string& source_tag() const noexcept { return source_tag_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  /// Rows re-ordered to `order`, which must be a permutation of items().
  FeatureMatrix reordered(const std::vector<std::string>& order) const;

 private:
  std::vector<std::string> items_;
  std::size_t cols_;
  std::vector<double> data_;
  std::string source_tag_;
};

/// `<stem>.ids.txt` next to `<stem>.npy`.
std::filesystem::path ids_sidecar_path(const std::filesystem::path& npy_path);

std::vector<std::string> read_ids(const std::filesystem::path& path);
void write_ids(const std::filesystem::path& path, const std::vector<std::string>& ids);

/// Loads an NPY matrix plus its id sidecar. With `expected_items`, the id sets
/// must match exactly and rows come back in that order.
FeatureMatrix load_feature_matrix(const std::filesystem::path& path,
                                  const std::optional<std::vector<std::string>>& expected_items = std::nullopt);
void save_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);

std::vector<double> average_caption_embeddings(std::span<const std::vector<double>> per_caption);

// ---------------------------------------------------------------------------
// Dataset manifests: manifest.csv (image_id,image_path,labels) plus an optional
// captions.json mapping image_id to a list of caption strings.

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path image_path;  // resolved against the manifest directory
  std::vector<std::string> captions;
  std::vector<std::string> labels;
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<ManifestEntry> entries;

  std::vector<std::string> ids() const;
};

struct ManifestOptions {
  bool check_paths = true;
  bool require_captions = false;
  /// Defaults to captions.json beside the manifest when present.
  std::optional<std::filesystem::path> captions_path;
};

DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Score tables: scores.csv with header
//   system,unit,unit_index,condition,metric,value,n_items,seed

struct ScoreRow {
  std::string system;
  std::string unit;
  std::int64_t unit_index = 0;
  std::string condition;
  std::string metric;
  double value = 0.0;
  std::int64_t n_items = 0;
  std::int64_t seed = 0;

  bool operator==(const ScoreRow&) const = default;
};

class ScoreTable {
 public:
  using Key = std::tuple<std::string, std::string, std::string, std::string>;

  /// Throws duplicate_key when (system, unit, condition, metric) exists, and
  /// invalid_argument when an RSA-type value lies outside its range.
  void add(ScoreRow row);
  void append(const ScoreTable& other);

  const std::vector<ScoreRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  std::optional<double> find(const std::string& system, const std::string& unit, const std::string& condition,
                             const std::string& metric) const;

  bool operator==(const ScoreTable& o) const { return rows_ == o.rows_; }

 private:
  std::vector<ScoreRow> rows_;
  std::map<Key, std::size_t> keys_;
};

extern const std::vector<std::string> kScoreHeader;

void write_score_table(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable read_score_table(const std::filesystem::path& path);

}  // namespace repalign::tensorio
