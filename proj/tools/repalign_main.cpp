#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "repalign/repalign.h"

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kPartial = 4 };

int exit_code(repalign_status st) {
  switch (st) {
    case REPALIGN_OK: return kOk;
    case REPALIGN_ERR_INVALID_ARGUMENT:
    case REPALIGN_ERR_CONFIG: return kUsage;
    case REPALIGN_ERR_PARTIAL: return kPartial;
    default: return kData;
  }
}

int report(repalign_status st) {
  if (st != REPALIGN_OK)
    std::fprintf(stderr, "repalign: %s: %s\n", repalign_status_name(st), repalign_last_error());
  return exit_code(st);
}

struct MatrixDeleter {
  void operator()(repalign_matrix* m) const { repalign_matrix_destroy(m); }
};
struct RdmDeleter {
  void operator()(repalign_rdm* r) const { repalign_rdm_destroy(r); }
};
struct ScoresDeleter {
  void operator()(repalign_scores* s) const { repalign_scores_destroy(s); }
};
using Matrix = std::unique_ptr<repalign_matrix, MatrixDeleter>;
using Rdm = std::unique_ptr<repalign_rdm, RdmDeleter>;
using Scores = std::unique_ptr<repalign_scores, ScoresDeleter>;

#define TRY(expr)                                   \
  do {                                              \
    repalign_status st_ = (expr);                   \
    if (st_ != REPALIGN_OK) return report(st_);     \
  } while (0)

std::string fmt(double v) {
  if (std::isnan(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_log(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representational alignment toolkit: saliency maps, RSA, distractor datasets, brain and meta analyses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(repalign_version()));

  std::string manifest, out, maps_dir;
  auto* sal = app.add_subcommand("saliency", "Saliency maps for every image of a manifest, as an NPY matrix");
  sal->add_option("--manifest", manifest, "manifest.csv")->required()->check(CLI::ExistingFile);
  sal->add_option("--out", out, "Output .npy (an .ids.txt sidecar is written beside it)")->required();
  sal->add_option("--maps-dir", maps_dir, "Also write one grayscale PNG per map here");

  std::string features, target, target_rdm, dist, save_rdm;
  auto* rsa = app.add_subcommand("rsa", "RSA between a feature matrix and a target (optionally with a condition)");
  rsa->add_option("--features", features, "Layer feature matrix (.npy)")->required()->check(CLI::ExistingFile);
  auto* tgt_f = rsa->add_option("--target", target, "Target feature matrix (.npy)")->check(CLI::ExistingFile);
  auto* tgt_r = rsa->add_option("--target-rdm", target_rdm, "Precomputed target RDM (.npy)")->check(CLI::ExistingFile);
  tgt_f->excludes(tgt_r);
  rsa->add_option("--dist", dist, "Condition feature matrix; adds Dist RSA and delta")->check(CLI::ExistingFile);
  rsa->add_option("--save-rdm", save_rdm, "Write the layer RDM here");

  std::string embeddings, thresholds;
  repalign_forge_options fo;
  repalign_forge_options_init(&fo);
  auto* frg = app.add_subcommand("forge", "Build the distractor dataset");
  frg->add_option("--manifest", manifest, "Pool manifest.csv")->required()->check(CLI::ExistingFile);
  frg->add_option("--embeddings", embeddings, "Caption embeddings (.npy), one row per pool image")
      ->required()
      ->check(CLI::ExistingFile);
  frg->add_option("--out", out, "Output directory")->required();
  frg->add_option("--n-targets", fo.n_targets, "Targets taken from the head of the pool")->required();
  frg->add_option("--seed", fo.seed, "Random seed")->required();
  frg->add_option("--retry-budget", fo.retry_budget, "Attempts per class per target")->capture_default_str();
  frg->add_option("--saliency-pairs", fo.n_saliency_pairs, "Calibration samples")->capture_default_str();
  frg->add_option("--caption-items", fo.n_caption_items, "Calibration caption rows")->capture_default_str();
  frg->add_option("--thresholds", thresholds, "Reuse a thresholds.json instead of calibrating")
      ->check(CLI::ExistingFile);

  std::string responses;
  auto* brn = app.add_subcommand("brain", "RSA between ROI responses and a target");
  brn->add_option("--responses", responses, "ROI response matrix (.npy)")->required()->check(CLI::ExistingFile);
  auto* b_rdm = brn->add_option("--target-rdm", target_rdm, "Target RDM (.npy)")->check(CLI::ExistingFile);
  auto* b_feat = brn->add_option("--target-features", target, "Target feature matrix (.npy)")->check(CLI::ExistingFile);
  b_rdm->excludes(b_feat);

  std::string scores_path;
  std::size_t n_perm = 9999;
  std::uint64_t seed = 0;
  auto* meta = app.add_subcommand("meta", "Layer Saliency/Semantics RSA versus Brain Score correlations");
  meta->add_option("--scores", scores_path, "scores.csv")->required()->check(CLI::ExistingFile);
  meta->add_option("--n-perm", n_perm, "Permutations")->capture_default_str();
  meta->add_option("--seed", seed, "Permutation seed")->capture_default_str();
  meta->add_option("--out", out, "Write meta.csv here");

  std::string preds;
  auto* top5 = app.add_subcommand("top5", "Top-5 multi-label accuracy");
  top5->add_option("--preds", preds, "Predictions JSON (image_id -> 5 labels)")->required()->check(CLI::ExistingFile);
  top5->add_option("--manifest", manifest, "manifest.csv with labels")->required()->check(CLI::ExistingFile);

  std::size_t bins = 5;
  auto* rep = app.add_subcommand("report", "Binned means, per-layer values and SVG charts");
  rep->add_option("--scores", scores_path, "scores.csv")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", out, "Output directory")->required();
  rep->add_option("--bins", bins, "Equal-width layer bins")->capture_default_str();

  std::string config;
  auto* run = app.add_subcommand("run", "End-to-end run from a TOML config");
  run->add_option("--config", config, "run.toml")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*sal) {
    TRY(repalign_saliency_manifest(manifest.c_str(), out.c_str(), maps_dir.empty() ? nullptr : maps_dir.c_str(), 0));
    return kOk;
  }

  if (*rsa) {
    if (target.empty() && target_rdm.empty()) {
      std::fprintf(stderr, "repalign rsa: one of --target or --target-rdm is required\n");
      return kUsage;
    }
    repalign_rdm* raw = nullptr;
    Rdm tgt;
    Matrix layer;
    repalign_matrix* mraw = nullptr;
    if (!target.empty()) {
      TRY(repalign_matrix_load(target.c_str(), &mraw));
      Matrix tm(mraw);
      TRY(repalign_matrix_load_like(features.c_str(), tm.get(), &mraw));
      layer.reset(mraw);
      TRY(repalign_rdm_build(tm.get(), 0, &raw));
      tgt.reset(raw);
    } else {
      TRY(repalign_rdm_load(target_rdm.c_str(), &raw));
      tgt.reset(raw);
      TRY(repalign_matrix_load(features.c_str(), &mraw));
      layer.reset(mraw);
    }
    TRY(repalign_rdm_build(layer.get(), 0, &raw));
    Rdm lrdm(raw);
    if (!save_rdm.empty()) TRY(repalign_rdm_save(lrdm.get(), save_rdm.c_str()));
    if (dist.empty()) {
      double rho = 0;
      std::size_t pairs = 0;
      TRY(repalign_rsa(lrdm.get(), tgt.get(), &rho, &pairs));
      std::printf("{\"rho\": %s, \"n_pairs\": %zu}\n", fmt(rho).c_str(), pairs);
    } else {
      TRY(repalign_matrix_load_like(dist.c_str(), layer.get(), &mraw));
      Matrix dm(mraw);
      TRY(repalign_rdm_build(dm.get(), 0, &raw));
      Rdm drdm(raw);
      double b = 0, d = 0, delta = 0;
      TRY(repalign_delta_rsa(lrdm.get(), drdm.get(), tgt.get(), &b, &d, &delta));
      std::printf("{\"base_rsa\": %s, \"dist_rsa\": %s, \"delta_rsa\": %s}\n", fmt(b).c_str(), fmt(d).c_str(),
                  fmt(delta).c_str());
    }
    return kOk;
  }

  if (*frg) {
    fo.thresholds_path = thresholds.empty() ? nullptr : thresholds.c_str();
    std::size_t records = 0, exhausted = 0;
    TRY(repalign_forge(manifest.c_str(), embeddings.c_str(), out.c_str(), &fo, &records, &exhausted));
    std::printf("{\"records\": %zu, \"exhausted_targets\": %zu}\n", records, exhausted);
    return kOk;
  }

  if (*brn) {
    if (target.empty() && target_rdm.empty()) {
      std::fprintf(stderr, "repalign brain: one of --target-rdm or --target-features is required\n");
      return kUsage;
    }
    repalign_rdm* raw = nullptr;
    repalign_matrix* mraw = nullptr;
    if (!target_rdm.empty()) {
      TRY(repalign_rdm_load(target_rdm.c_str(), &raw));
    } else {
      TRY(repalign_matrix_load(target.c_str(), &mraw));
      Matrix tm(mraw);
      TRY(repalign_rdm_build(tm.get(), 0, &raw));
    }
    Rdm tgt(raw);
    TRY(repalign_matrix_load(responses.c_str(), &mraw));
    Matrix resp(mraw);
    double rho = 0;
    std::size_t n = 0;
    TRY(repalign_brain_rsa(resp.get(), tgt.get(), 0, &rho, &n));
    std::printf("{\"rho\": %s, \"n_items\": %zu}\n", fmt(rho).c_str(), n);
    return kOk;
  }

  if (*meta) {
    repalign_scores* raw = nullptr;
    TRY(repalign_scores_load(scores_path.c_str(), &raw));
    Scores s(raw);
    repalign_meta_row rows[REPALIGN_META_ROWS];
    TRY(repalign_meta(s.get(), n_perm, seed, 0, rows, out.empty() ? nullptr : out.c_str()));
    std::printf("predictor,subset,r,p_value,n\n");
    for (const auto& r : rows)
      std::printf("%s,%s,%s,%s,%zu\n", r.predictor, r.subset, fmt(r.r).c_str(), fmt(r.p_value).c_str(), r.n);
    return kOk;
  }

  if (*top5) {
    double pct = 0;
    TRY(repalign_top5(preds.c_str(), manifest.c_str(), &pct));
    std::printf("%.4f\n", pct);
    return kOk;
  }

  if (*rep) {
    repalign_scores* raw = nullptr;
    TRY(repalign_scores_load(scores_path.c_str(), &raw));
    Scores s(raw);
    TRY(repalign_report(s.get(), bins, out.c_str()));
    return kOk;
  }

  if (*run) {
    std::size_t rows = 0, skipped = 0;
    repalign_status st = repalign_run(config.c_str(), 0, print_log, nullptr, &rows, &skipped);
    if (st == REPALIGN_OK || st == REPALIGN_ERR_PARTIAL)
      std::printf("{\"rows\": %zu, \"skipped\": %zu}\n", rows, skipped);
    return report(st);
  }
  return kUsage;
}
