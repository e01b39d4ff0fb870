#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/analysis.hpp"
#include "core/repsim.hpp"
#include "core/tensorio.hpp"

namespace repalign::pipeline {

namespace fs = std::filesystem;

struct NetworkSpec {
  std::string name;
  std::string layers;                       // glob; one NPY per layer, unit = file stem
  std::optional<std::string> conditions;    // glob containing {condition}
  std::optional<std::string> brain_layers;  // glob over the brain image set, matched by stem
};

struct BrainResponseSpec {
  std::string subject;
  std::string roi;
  fs::path path;
};

struct ForgeSpec {
  fs::path manifest;
  fs::path embeddings;
  std::size_t n_targets = 0;
  std::size_t retry_budget = 200;
  std::size_t n_saliency_pairs = 1000;
  std::size_t n_caption_items = 5000;
  std::optional<fs::path> thresholds;  // reuse instead of calibrating
};

struct RunConfig {
  fs::path config_path;
  std::uint64_t seed = 0;
  fs::path output_dir;
  std::string saliency_variant;
  bool want_saliency = true;
  bool want_semantics = true;
  bool want_brain = false;

  std::optional<fs::path> saliency_features;
  std::optional<fs::path> semantics_features;
  std::vector<std::string> conditions;
  std::vector<NetworkSpec> networks;

  std::vector<BrainResponseSpec> brain_responses;
  std::string score_roi = "OTC";
  std::optional<fs::path> brain_saliency;
  std::optional<fs::path> brain_semantics;

  std::size_t n_perm = 9999;
  std::size_t report_bins = 5;
  std::optional<ForgeSpec> forge;
};

/// Parses a TOML run file; relative paths resolve against its directory.
/// Throws config for malformed or inconsistent settings.
RunConfig load_run_config(const fs::path& path);

/// Every referenced input exists and every layer glob matches at least one file.
void validate(const RunConfig& config);

/// Glob matches in natural order (layer10 after layer9).
std::vector<fs::path> expand_glob(const std::string& pattern);

struct LayerFile {
  std::string system;
  std::string unit;
  std::int64_t unit_index = 0;
  fs::path path;
};

std::vector<LayerFile> resolve_layers(const NetworkSpec& network);

/// Saliency and semantics RDMs over the reference item order, built on first
/// use and shared by every layer and condition afterwards.
class TargetRdmCache {
 public:
  TargetRdmCache(std::optional<tensorio::FeatureMatrix> saliency, std::optional<tensorio::FeatureMatrix> semantics,
                 int workers);

  const std::vector<std::string>& items() const noexcept { return items_; }
  bool has(repsim::RsaTarget target) const;
  const repsim::Rdm& get(repsim::RsaTarget target);
  const tensorio::FeatureMatrix* features(repsim::RsaTarget target) const;
  std::size_t builds() const noexcept { return builds_; }

 private:
  std::vector<std::string> items_;
  std::optional<tensorio::FeatureMatrix> features_[2];
  std::optional<repsim::Rdm> rdms_[2];
  std::size_t builds_ = 0;
  int workers_;
};

/// Loads the configured target feature matrices (semantics re-ordered to the
/// saliency item order when both are present).
TargetRdmCache make_target_cache(const RunConfig& config, int workers);

struct StageResult {
  tensorio::ScoreTable scores;
  std::vector<std::string> skipped;  // one human-readable line per skipped layer or condition
};

/// rsa_<target> rows (condition "Baseline") for one layer feature matrix.
void append_baseline_rows(tensorio::ScoreTable& table, const LayerFile& layer, const repsim::Rdm& layer_rdm,
                          TargetRdmCache& targets, std::uint64_t seed);

StageResult run_baseline(const RunConfig& config, TargetRdmCache& targets, int workers);

/// base_rsa_<t>, dist_rsa_<t> and delta_rsa_<t> rows per (layer, condition).
StageResult run_delta(const RunConfig& config, TargetRdmCache& targets, int workers);

/// ROI rows (system "brain:<subject>" and "brain:mean") and per-layer
/// brain_score rows (subject rows plus the subject average under "Baseline").
StageResult run_brain(const RunConfig& config, TargetRdmCache& targets, int workers);

struct RunResult {
  tensorio::ScoreTable scores;
  std::vector<analysis::MetaCorrelation> meta;
  std::vector<std::string> skipped;
  std::vector<fs::path> outputs;
  std::size_t target_rdm_builds = 0;
};

/// Full run: optional dataset generation, baseline and delta sweeps, brain
/// analysis, meta-analysis, report and run.lock.json under output_dir.
RunResult run(const RunConfig& config, int workers, const std::function<void(const std::string&)>& log = {});

}  // namespace repalign::pipeline
