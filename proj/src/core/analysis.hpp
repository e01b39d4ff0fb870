#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core/repsim.hpp"
#include "core/tensorio.hpp"

namespace repalign::analysis {

struct BrainScore {
  std::string subject;
  std::string roi;
  double rho = 0.0;
  std::size_t n_items = 0;
};

/// RDM over the vertex responses, then RSA against `target`. Items must match
/// the target RDM exactly (rows are re-ordered to the target order).
BrainScore brain_rsa(const tensorio::FeatureMatrix& responses, const repsim::Rdm& target, std::string subject = {},
                     std::string roi = {}, int workers = 1);

/// Rows of `m` for `ids`, in that order. Throws id_mismatch on an unknown id.
tensorio::FeatureMatrix select_rows(const tensorio::FeatureMatrix& m, const std::vector<std::string>& ids);

/// Sample Pearson correlation; equal lengths >= 3, non-constant inputs.
double pearson_r(std::span<const double> x, std::span<const double> y);

/// Two-sided permutation p-value, (1 + #{|r_perm| >= |r_obs|}) / (n_perm + 1),
/// shuffling y. Permutation i draws from its own stream keyed (seed, i), so the
/// value does not depend on `workers`.
double permutation_p(std::span<const double> x, std::span<const double> y, std::size_t n_perm, std::uint64_t seed,
                     int workers = 1);

enum class MetaSubset { All, NegativeSaliency, PositiveSaliency };
const char* to_string(MetaSubset s) noexcept;

struct MetaCorrelation {
  std::string predictor;  // "semantics" or "saliency"
  MetaSubset subset = MetaSubset::All;
  double r = 0.0;          // NaN when the subset has fewer than 3 layers or is constant
  double p_value = 0.0;    // NaN alongside r
  std::size_t n = 0;
};

struct LayerSummary {
  std::string system;
  std::string unit;
  std::int64_t unit_index = 0;
  double semantics_rsa = 0.0;
  double saliency_rsa = 0.0;
  double brain_score = 0.0;
};

struct MetaOptions {
  std::size_t n_perm = 9999;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string condition = "Baseline";
};

/// Per-layer (rsa_semantics, rsa_saliency, brain_score) triples from the
/// table, ordered by (system, unit_index, unit). Systems named "brain:*" are
/// ROI rows and are ignored. A layer missing any of the three metrics throws
/// missing_input.
std::vector<LayerSummary> collect_layers(const tensorio::ScoreTable& scores, const std::string& condition = "Baseline");

/// (a) semantics/all, (b) saliency/all, (c) saliency restricted to
/// SaliencyRSA < 0, (d) saliency restricted to SaliencyRSA >= 0.
std::vector<MetaCorrelation> layer_brain_meta(const tensorio::ScoreTable& scores, const MetaOptions& options = {});

void write_meta_csv(const std::vector<MetaCorrelation>& rows, const std::filesystem::path& path);

using Predictions = std::map<std::string, std::vector<std::string>>;

/// JSON object mapping image_id to an ordered list of 5 label strings.
Predictions read_predictions(const std::filesystem::path& path);

/// Percentage of manifest images whose top-5 predictions hit any of their labels.
double top5_accuracy(const Predictions& predictions, const tensorio::DatasetManifest& manifest);

}  // namespace repalign::analysis
