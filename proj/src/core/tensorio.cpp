#include "core/tensorio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/npy.hpp"

namespace repalign::tensorio {

namespace fs = std::filesystem;

FeatureMatrix::FeatureMatrix(std::vector<std::string> items, std::size_t cols, std::vector<double> data,
                             std::string source_tag)
    : items_(std::move(items)), cols_(cols), data_(std::move(data)), source_tag_(std::move(source_tag)) {
  if (items_.size() < 2) fail(Errc::invalid_argument, "feature matrix needs at least 2 items, got " +
                                                          std::to_string(items_.size()));
  if (cols_ < 1) fail(Errc::invalid_argument, "feature matrix needs at least 1 column");
  if (data_.size() != items_.size() * cols_)
    fail(Errc::format, "feature matrix shape mismatch: " + std::to_string(items_.size()) + " ids x " +
                           std::to_string(cols_) + " columns but " + std::to_string(data_.size()) + " values");
  std::unordered_set<std::string> seen;
  for (const auto& id : items_)
    if (!seen.insert(id).second) fail(Errc::duplicate_key, "duplicate image id '" + id + "'");
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k]))
      fail(Errc::non_finite, "non-finite entry at row " + std::to_string(k / cols_) + " ('" + items_[k / cols_] +
                                 "'), column " + std::to_string(k % cols_));
  }
}

FeatureMatrix FeatureMatrix::reordered(const std::vector<std::string>& order) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < items_.size(); ++i) index.emplace(items_[i], i);

  std::vector<std::string> missing;  // expected but absent from the matrix
  std::unordered_set<std::string> wanted(order.begin(), order.end());
  for (const auto& id : order)
    if (!index.count(id)) missing.push_back(id);
  std::vector<std::string> extra;  // present in the matrix but not expected
  for (const auto& id : items_)
    if (!wanted.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty() || wanted.size() != order.size()) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size() && i < 10; ++i) s += (i ? ", " : "") + ("\"" + v[i] + "\"");
      if (v.size() > 10) s += ", ...";
      return s;
    };
    fail(Errc::id_mismatch, "id mismatch: expected but missing [" + join(missing) + "]; present but unexpected [" +
                                join(extra) + "]");
  }

  std::vector<double> data(data_.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto src = row(index.at(order[r]));
    std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(r * cols_));
  }
  return FeatureMatrix(order, cols_, std::move(data), source_tag_);
}

fs::path ids_sidecar_path(const fs::path& npy_path) {
  fs::path p = npy_path;
  if (p.extension() == ".npy") p.replace_extension();
  p += ".ids.txt";
  return p;
}

std::vector<std::string> read_ids(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open id sidecar " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ids.push_back(line);
  }
  return ids;
}

void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  for (const auto& id : ids) {
    if (id.find_first_of("\r\n") != std::string::npos) fail(Errc::invalid_argument, "image id contains a newline");
    out << id << '\n';
  }
}

FeatureMatrix load_feature_matrix(const fs::path& path, const std::optional<std::vector<std::string>>& expected_items) {
  if (!fs::exists(path)) fail(Errc::io, "missing file " + path.string());
  npy::Array2D arr = npy::read(path);
  std::vector<std::string> ids = read_ids(ids_sidecar_path(path));
  if (ids.size() != arr.rows)
    fail(Errc::format, path.string() + ": " + std::to_string(arr.rows) + " rows but " + std::to_string(ids.size()) +
                           " ids in sidecar");
  FeatureMatrix m(std::move(ids), arr.cols, std::move(arr.values), path.stem().string());
  if (expected_items) return m.reordered(*expected_items);
  return m;
}

void save_feature_matrix(const FeatureMatrix& m, const fs::path& path) {
  npy::write(path, m.rows(), m.cols(), m.data());
  write_ids(ids_sidecar_path(path), m.items());
}

std::vector<double> average_caption_embeddings(std::span<const std::vector<double>> per_caption) {
  if (per_caption.empty()) fail(Errc::invalid_argument, "no caption embeddings to average");
  const std::size_t d = per_caption.front().size();
  if (d == 0) fail(Errc::invalid_argument, "caption embeddings are empty vectors");
  std::vector<double> mean(d, 0.0);
  for (const auto& v : per_caption) {
    if (v.size() != d)
      fail(Errc::invalid_argument, "caption embedding dimension mismatch: " + std::to_string(v.size()) + " vs " +
                                       std::to_string(d));
    for (std::size_t k = 0; k < d; ++k) mean[k] += v[k];
  }
  const double n = static_cast<double>(per_caption.size());
  for (double& x : mean) x /= n;
  return mean;
}

// ---------------------------------------------------------------------------

std::vector<std::string> DatasetManifest::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.image_id);
  return out;
}

namespace {

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ';'))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

bool blank_row(const csv::Row& r) { return r.size() == 1 && r[0].empty(); }

}  // namespace

DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& options) {
  auto rows = csv::read_file(path);
  if (rows.empty()) fail(Errc::format, path.string() + ": empty manifest");
  const csv::Row& header = rows.front();
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  auto id_col = col("image_id");
  auto path_col = col("image_path");
  auto label_col = col("labels");
  if (!id_col || !path_col) fail(Errc::format, path.string() + ": manifest header needs image_id,image_path");

  DatasetManifest m;
  m.dataset_name = path.parent_path().filename().string();
  if (m.dataset_name.empty()) m.dataset_name = path.stem().string();
  const fs::path base = path.parent_path();
  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (blank_row(rows[r])) continue;
    const auto& row = rows[r];
    if (row.size() != header.size())
      fail(Errc::format, path.string() + ": line " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                             " fields, header has " + std::to_string(header.size()));
    ManifestEntry e;
    e.image_id = row[*id_col];
    if (e.image_id.empty()) fail(Errc::format, path.string() + ": empty image_id on line " + std::to_string(r + 1));
    if (!seen.insert(e.image_id).second) fail(Errc::duplicate_key, path.string() + ": duplicate image_id '" + e.image_id + "'");
    fs::path p = row[*path_col];
    e.image_path = p.is_absolute() ? p : base / p;
    if (options.check_paths && !fs::exists(e.image_path))
      fail(Errc::io, path.string() + ": image for '" + e.image_id + "' not found at " + e.image_path.string());
    if (label_col) e.labels = split_labels(row[*label_col]);
    m.entries.push_back(std::move(e));
  }

  fs::path captions = options.captions_path.value_or(base / "captions.json");
  if (fs::exists(captions)) {
    std::ifstream in(captions);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      fail(Errc::format, captions.string() + ": " + ex.what());
    }
    if (!j.is_object()) fail(Errc::format, captions.string() + ": expected an object keyed by image_id");
    for (auto& e : m.entries) {
      auto it = j.find(e.image_id);
      if (it == j.end()) continue;
      if (!it->is_array()) fail(Errc::format, captions.string() + ": captions for '" + e.image_id + "' not a list");
      for (const auto& c : *it) e.captions.push_back(c.get<std::string>());
    }
  } else if (options.captions_path) {
    fail(Errc::io, "missing captions file " + captions.string());
  }
  if (options.require_captions) {
    for (const auto& e : m.entries)
      if (e.captions.empty()) fail(Errc::missing_input, "no captions for image '" + e.image_id + "'");
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::vector<csv::Row> rows;
  nlohmann::json captions = nlohmann::json::object();
  bool any_captions = false;
  for (const auto& e : manifest.entries) {
    std::string labels;
    for (std::size_t i = 0; i < e.labels.size(); ++i) labels += (i ? ";" : "") + e.labels[i];
    fs::path p = e.image_path;
    if (p.is_absolute()) p = p.lexically_relative(path.parent_path());
    rows.push_back({e.image_id, p.generic_string(), labels});
    if (!e.captions.empty()) {
      captions[e.image_id] = e.captions;
      any_captions = true;
    }
  }
  csv::write_file(path, {"image_id", "image_path", "labels"}, rows);
  if (any_captions) {
    std::ofstream out(path.parent_path() / "captions.json");
    out << captions.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------

const std::vector<std::string> kScoreHeader = {"system", "unit", "unit_index", "condition",
                                               "metric", "value", "n_items", "seed"};

namespace {

void check_value_range(const ScoreRow& row) {
  if (!std::isfinite(row.value))
    fail(Errc::non_finite, "score '" + row.metric + "' for " + row.system + "/" + row.unit + " is not finite");
  const bool delta = row.metric.find("delta_rsa") != std::string::npos;
  const bool rsa_like = !delta && (row.metric.find("rsa") != std::string::npos || row.metric == "brain_score");
  if (delta && (row.value < 0.0 || row.value > 2.0))
    fail(Errc::invalid_argument, "delta RSA value out of [0,2]: " + csv::format_double(row.value));
  if (rsa_like && (row.value < -1.0 || row.value > 1.0))
    fail(Errc::invalid_argument, "RSA value out of [-1,1]: " + csv::format_double(row.value));
}

}  // namespace

void ScoreTable::add(ScoreRow row) {
  check_value_range(row);
  Key key{row.system, row.unit, row.condition, row.metric};
  if (!keys_.emplace(key, rows_.size()).second)
    fail(Errc::duplicate_key, "duplicate score key (" + row.system + ", " + row.unit + ", " + row.condition + ", " +
                                  row.metric + ")");
  rows_.push_back(std::move(row));
}

void ScoreTable::append(const ScoreTable& other) {
  for (const auto& r : other.rows_) add(r);
}

std::optional<double> ScoreTable::find(const std::string& system, const std::string& unit,
                                       const std::string& condition, const std::string& metric) const {
  auto it = keys_.find(Key{system, unit, condition, metric});
  if (it == keys_.end()) return std::nullopt;
  return rows_[it->second].value;
}

void write_score_table(const ScoreTable& table, const fs::path& path) {
  std::vector<csv::Row> rows;
  rows.reserve(table.size());
  for (const auto& r : table.rows())
    rows.push_back({r.system, r.unit, std::to_string(r.unit_index), r.condition, r.metric,
                    csv::format_double(r.value), std::to_string(r.n_items), std::to_string(r.seed)});
  csv::write_file(path, kScoreHeader, rows);
}

ScoreTable read_score_table(const fs::path& path) {
  auto rows = csv::read_file(path);
  if (rows.empty() || rows.front() != kScoreHeader)
    fail(Errc::format, path.string() + ": score table header must be system,unit,unit_index,condition,metric,value,n_items,seed");
  ScoreTable table;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (blank_row(r)) continue;
    if (r.size() != kScoreHeader.size())
      fail(Errc::format, path.string() + ": malformed row on line " + std::to_string(i + 1));
    ScoreRow row;
    row.system = r[0];
    row.unit = r[1];
    row.unit_index = csv::parse_int(r[2], "unit_index");
    row.condition = r[3];
    row.metric = r[4];
    row.value = csv::parse_double(r[5], "value");
    row.n_items = csv::parse_int(r[6], "n_items");
    row.seed = csv::parse_int(r[7], "seed");
    table.add(std::move(row));
  }
  return table;
}

}  // namespace repalign::tensorio
