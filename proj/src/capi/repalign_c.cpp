#include "repalign/repalign.h"

#include <cmath>
#include <exception>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "core/analysis.hpp"
#include "core/error.hpp"
#include "core/forge.hpp"
#include "core/parallel.hpp"
#include "core/pipeline.hpp"
#include "core/report.hpp"
#include "core/repsim.hpp"
#include "core/saliency.hpp"
#include "core/tensorio.hpp"

#ifndef REPALIGN_VERSION
#define REPALIGN_VERSION "0.0.0"
#endif

using namespace repalign;

struct repalign_matrix {
  tensorio::FeatureMatrix m;
};

struct repalign_rdm {
  repsim::Rdm r;
};

struct repalign_scores {
  tensorio::ScoreTable t;
};

namespace {

thread_local std::string g_last_error;

repalign_status to_status(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return REPALIGN_ERR_INVALID_ARGUMENT;
    case Errc::io: return REPALIGN_ERR_IO;
    case Errc::format: return REPALIGN_ERR_FORMAT;
    case Errc::non_finite: return REPALIGN_ERR_NON_FINITE;
    case Errc::id_mismatch: return REPALIGN_ERR_ID_MISMATCH;
    case Errc::zero_norm: return REPALIGN_ERR_ZERO_NORM;
    case Errc::degenerate: return REPALIGN_ERR_DEGENERATE;
    case Errc::duplicate_key: return REPALIGN_ERR_DUPLICATE_KEY;
    case Errc::exhausted: return REPALIGN_ERR_EXHAUSTED;
    case Errc::missing_input: return REPALIGN_ERR_MISSING_INPUT;
    case Errc::config: return REPALIGN_ERR_CONFIG;
    case Errc::partial: return REPALIGN_ERR_PARTIAL;
  }
  return REPALIGN_ERR_INTERNAL;
}

template <class F>
repalign_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return REPALIGN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return REPALIGN_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return REPALIGN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return REPALIGN_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return REPALIGN_ERR_INTERNAL;
  }
}

template <class T>
void require(const T* p, const char* name) {
  if (p == nullptr) fail(Errc::invalid_argument, std::string(name) + " must not be NULL");
}

int workers_or_default(int workers) {
  if (workers < 0) fail(Errc::invalid_argument, "workers must be non-negative");
  return workers == 0 ? default_workers() : workers;
}

std::span<const double> span_of(const double* p, std::size_t n) { return {p, n}; }

}  // namespace

extern "C" {

const char* repalign_version(void) { return REPALIGN_VERSION; }

const char* repalign_status_name(repalign_status status) {
  switch (status) {
    case REPALIGN_OK: return "ok";
    case REPALIGN_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case REPALIGN_ERR_IO: return "io";
    case REPALIGN_ERR_FORMAT: return "format";
    case REPALIGN_ERR_NON_FINITE: return "non_finite";
    case REPALIGN_ERR_ID_MISMATCH: return "id_mismatch";
    case REPALIGN_ERR_ZERO_NORM: return "zero_norm";
    case REPALIGN_ERR_DEGENERATE: return "degenerate";
    case REPALIGN_ERR_DUPLICATE_KEY: return "duplicate_key";
    case REPALIGN_ERR_EXHAUSTED: return "exhausted";
    case REPALIGN_ERR_MISSING_INPUT: return "missing_input";
    case REPALIGN_ERR_CONFIG: return "config";
    case REPALIGN_ERR_PARTIAL: return "partial";
    case REPALIGN_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* repalign_last_error(void) { return g_last_error.c_str(); }

repalign_status repalign_default_workers(int* out) {
  return guarded([&] {
    require(out, "out");
    *out = default_workers();
  });
}

// ---- matrices ----------------------------------------------------------------

repalign_status repalign_matrix_create(const char* const* ids, size_t rows, size_t cols, const double* data,
                                       repalign_matrix** out) {
  return guarded([&] {
    require(ids, "ids");
    require(data, "data");
    require(out, "out");
    std::vector<std::string> items;
    for (size_t i = 0; i < rows; ++i) {
      require(ids[i], "ids[i]");
      items.emplace_back(ids[i]);
    }
    std::vector<double> values(data, data + rows * cols);
    *out = new repalign_matrix{tensorio::FeatureMatrix(std::move(items), cols, std::move(values))};
  });
}

repalign_status repalign_matrix_load(const char* npy_path, repalign_matrix** out) {
  return guarded([&] {
    require(npy_path, "npy_path");
    require(out, "out");
    *out = new repalign_matrix{tensorio::load_feature_matrix(npy_path)};
  });
}

repalign_status repalign_matrix_load_like(const char* npy_path, const repalign_matrix* like, repalign_matrix** out) {
  return guarded([&] {
    require(npy_path, "npy_path");
    require(like, "like");
    require(out, "out");
    *out = new repalign_matrix{tensorio::load_feature_matrix(npy_path, like->m.items())};
  });
}

repalign_status repalign_matrix_save(const repalign_matrix* m, const char* npy_path) {
  return guarded([&] {
    require(m, "matrix");
    require(npy_path, "npy_path");
    tensorio::save_feature_matrix(m->m, npy_path);
  });
}

size_t repalign_matrix_rows(const repalign_matrix* m) { return m ? m->m.rows() : 0; }
size_t repalign_matrix_cols(const repalign_matrix* m) { return m ? m->m.cols() : 0; }
const double* repalign_matrix_data(const repalign_matrix* m) { return m ? m->m.data().data() : nullptr; }
const char* repalign_matrix_id(const repalign_matrix* m, size_t row) {
  return (m && row < m->m.rows()) ? m->m.items()[row].c_str() : nullptr;
}
void repalign_matrix_destroy(repalign_matrix* m) { delete m; }

// ---- RDMs --------------------------------------------------------------------

repalign_status repalign_rdm_build(const repalign_matrix* features, int workers, repalign_rdm** out) {
  return guarded([&] {
    require(features, "features");
    require(out, "out");
    *out = new repalign_rdm{repsim::build_rdm(features->m, workers_or_default(workers))};
  });
}

repalign_status repalign_rdm_load(const char* npy_path, repalign_rdm** out) {
  return guarded([&] {
    require(npy_path, "npy_path");
    require(out, "out");
    *out = new repalign_rdm{repsim::load_rdm(npy_path)};
  });
}

repalign_status repalign_rdm_save(const repalign_rdm* rdm, const char* npy_path) {
  return guarded([&] {
    require(rdm, "rdm");
    require(npy_path, "npy_path");
    repsim::save_rdm(rdm->r, npy_path);
  });
}

size_t repalign_rdm_size(const repalign_rdm* rdm) { return rdm ? rdm->r.size() : 0; }
const double* repalign_rdm_cells(const repalign_rdm* rdm) { return rdm ? rdm->r.cells().data() : nullptr; }
const char* repalign_rdm_id(const repalign_rdm* rdm, size_t i) {
  return (rdm && i < rdm->r.size()) ? rdm->r.items()[i].c_str() : nullptr;
}
void repalign_rdm_destroy(repalign_rdm* rdm) { delete rdm; }

// ---- statistics ----------------------------------------------------------------

repalign_status repalign_cosine_distance(const double* u, const double* v, size_t n, double* out) {
  return guarded([&] {
    require(u, "u");
    require(v, "v");
    require(out, "out");
    *out = repsim::cosine_distance(span_of(u, n), span_of(v, n));
  });
}

repalign_status repalign_spearman(const double* x, const double* y, size_t n, double* out) {
  return guarded([&] {
    require(x, "x");
    require(y, "y");
    require(out, "out");
    *out = repsim::spearman_rho(span_of(x, n), span_of(y, n));
  });
}

repalign_status repalign_pearson(const double* x, const double* y, size_t n, double* out) {
  return guarded([&] {
    require(x, "x");
    require(y, "y");
    require(out, "out");
    *out = analysis::pearson_r(span_of(x, n), span_of(y, n));
  });
}

repalign_status repalign_permutation_p(const double* x, const double* y, size_t n, size_t n_perm, uint64_t seed,
                                       int workers, double* out) {
  return guarded([&] {
    require(x, "x");
    require(y, "y");
    require(out, "out");
    *out = analysis::permutation_p(span_of(x, n), span_of(y, n), n_perm, seed, workers_or_default(workers));
  });
}

repalign_status repalign_rsa(const repalign_rdm* a, const repalign_rdm* b, double* rho, size_t* n_pairs) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(rho, "rho");
    auto s = repsim::rsa(a->r, b->r);
    *rho = s.rho;
    if (n_pairs) *n_pairs = s.n_pairs;
  });
}

repalign_status repalign_delta_rsa(const repalign_rdm* layer_base, const repalign_rdm* layer_dist,
                                   const repalign_rdm* target, double* base, double* dist, double* delta) {
  return guarded([&] {
    require(layer_base, "layer_base");
    require(layer_dist, "layer_dist");
    require(target, "target");
    auto b = repsim::rsa(layer_base->r, target->r, repsim::RsaKind::Base);
    auto d = repsim::rsa(layer_dist->r, target->r, repsim::RsaKind::Dist);
    if (base) *base = b.rho;
    if (dist) *dist = d.rho;
    if (delta) *delta = repsim::delta_rsa(b, d);
  });
}

// ---- saliency ------------------------------------------------------------------

repalign_status repalign_saliency_file(const char* image_path, double* out_map) {
  return guarded([&] {
    require(image_path, "image_path");
    require(out_map, "out_map");
    auto map = saliency::compute_saliency(read_image(image_path));
    std::copy(map.grid.px.begin(), map.grid.px.end(), out_map);
  });
}

repalign_status repalign_saliency_manifest(const char* manifest_csv, const char* out_npy, const char* maps_dir,
                                           int workers) {
  return guarded([&] {
    require(manifest_csv, "manifest_csv");
    require(out_npy, "out_npy");
    const int w = workers_or_default(workers);
    auto manifest = tensorio::load_manifest(manifest_csv);
    std::optional<std::filesystem::path> dir;
    if (maps_dir) {
      dir = maps_dir;
      std::filesystem::create_directories(*dir);
    }
    std::vector<saliency::SaliencyMap> maps(manifest.entries.size());
    parallel_for(maps.size(), w, [&](std::size_t i) {
      const auto& e = manifest.entries[i];
      maps[i] = saliency::compute_saliency(read_image(e.image_path), e.image_id);
      if (dir) {
        std::string name = e.image_id;
        for (char& c : name)
          if (c == '/' || c == '\\') c = '_';
        write_heatmap_png(maps[i].grid.px, maps[i].grid.width, maps[i].grid.height, *dir / (name + ".png"));
      }
    });
    tensorio::save_feature_matrix(saliency::maps_to_feature_matrix(maps), out_npy);
  });
}

// ---- forge ---------------------------------------------------------------------

void repalign_forge_options_init(repalign_forge_options* options) {
  if (!options) return;
  options->n_targets = 0;
  options->retry_budget = 200;
  options->n_saliency_pairs = 1000;
  options->n_caption_items = 5000;
  options->seed = 0;
  options->workers = 0;
  options->thresholds_path = nullptr;
}

repalign_status repalign_forge(const char* manifest_csv, const char* embeddings_npy, const char* out_dir,
                               const repalign_forge_options* options, size_t* n_records, size_t* n_exhausted) {
  return guarded([&] {
    require(manifest_csv, "manifest_csv");
    require(embeddings_npy, "embeddings_npy");
    require(out_dir, "out_dir");
    require(options, "options");
    const int w = workers_or_default(options->workers);
    auto manifest = tensorio::load_manifest(manifest_csv);
    auto embeddings = tensorio::load_feature_matrix(embeddings_npy, manifest.ids());
    forge::ManifestImageSource pool(std::move(manifest));

    forge::ThresholdSpec thresholds;
    if (options->thresholds_path) {
      thresholds = forge::read_thresholds(options->thresholds_path);
    } else {
      forge::CalibrationOptions co;
      co.n_saliency_pairs = options->n_saliency_pairs;
      co.n_caption_items = options->n_caption_items;
      co.seed = options->seed;
      co.workers = w;
      thresholds = forge::calibrate_thresholds(pool, embeddings, co);
    }
    forge::BuildOptions bo;
    bo.n_targets = options->n_targets;
    bo.retry_budget = options->retry_budget;
    bo.seed = options->seed;
    bo.workers = w;
    bo.out_dir = std::filesystem::path(out_dir);
    auto ds = forge::build_dataset(pool, embeddings, thresholds, bo);
    forge::write_thresholds(thresholds, std::filesystem::path(out_dir) / "thresholds.json");
    forge::write_dataset_manifest(ds.records, std::filesystem::path(out_dir) / "dataset_manifest.csv");
    if (n_records) *n_records = ds.records.size();
    if (n_exhausted) *n_exhausted = ds.exhausted.size();
  });
}

// ---- brain ---------------------------------------------------------------------

repalign_status repalign_brain_rsa(const repalign_matrix* responses, const repalign_rdm* target, int workers,
                                   double* rho, size_t* n_items) {
  return guarded([&] {
    require(responses, "responses");
    require(target, "target");
    require(rho, "rho");
    auto s = analysis::brain_rsa(responses->m, target->r, {}, {}, workers_or_default(workers));
    *rho = s.rho;
    if (n_items) *n_items = s.n_items;
  });
}

// ---- scores --------------------------------------------------------------------

repalign_status repalign_scores_create(repalign_scores** out) {
  return guarded([&] {
    require(out, "out");
    *out = new repalign_scores{};
  });
}

repalign_status repalign_scores_load(const char* csv_path, repalign_scores** out) {
  return guarded([&] {
    require(csv_path, "csv_path");
    require(out, "out");
    *out = new repalign_scores{tensorio::read_score_table(csv_path)};
  });
}

repalign_status repalign_scores_save(const repalign_scores* scores, const char* csv_path) {
  return guarded([&] {
    require(scores, "scores");
    require(csv_path, "csv_path");
    tensorio::write_score_table(scores->t, csv_path);
  });
}

repalign_status repalign_scores_add(repalign_scores* scores, const repalign_score_row* row) {
  return guarded([&] {
    require(scores, "scores");
    require(row, "row");
    require(row->system, "row->system");
    require(row->unit, "row->unit");
    require(row->condition, "row->condition");
    require(row->metric, "row->metric");
    scores->t.add({row->system, row->unit, row->unit_index, row->condition, row->metric, row->value, row->n_items,
                   row->seed});
  });
}

size_t repalign_scores_size(const repalign_scores* scores) { return scores ? scores->t.size() : 0; }

repalign_status repalign_scores_row(const repalign_scores* scores, size_t i, repalign_score_row* out) {
  return guarded([&] {
    require(scores, "scores");
    require(out, "out");
    if (i >= scores->t.size()) fail(Errc::invalid_argument, "row index out of range");
    const auto& r = scores->t.rows()[i];
    *out = {r.system.c_str(), r.unit.c_str(), r.unit_index, r.condition.c_str(), r.metric.c_str(),
            r.value,          r.n_items,      r.seed};
  });
}

repalign_status repalign_scores_find(const repalign_scores* scores, const char* system, const char* unit,
                                     const char* condition, const char* metric, double* out) {
  return guarded([&] {
    require(scores, "scores");
    require(system, "system");
    require(unit, "unit");
    require(condition, "condition");
    require(metric, "metric");
    require(out, "out");
    auto v = scores->t.find(system, unit, condition, metric);
    if (!v) fail(Errc::missing_input, "no score row for the requested key");
    *out = *v;
  });
}

void repalign_scores_destroy(repalign_scores* scores) { delete scores; }

// ---- meta / top5 / report ---------------------------------------------------------

repalign_status repalign_meta(const repalign_scores* scores, size_t n_perm, uint64_t seed, int workers,
                              repalign_meta_row* out, const char* out_csv) {
  return guarded([&] {
    require(scores, "scores");
    require(out, "out");
    analysis::MetaOptions mo;
    mo.n_perm = n_perm;
    mo.seed = seed;
    mo.workers = workers_or_default(workers);
    auto rows = analysis::layer_brain_meta(scores->t, mo);
    for (std::size_t i = 0; i < rows.size() && i < REPALIGN_META_ROWS; ++i) {
      out[i].predictor = rows[i].predictor == "semantics" ? "semantics" : "saliency";
      out[i].subset = analysis::to_string(rows[i].subset);
      out[i].r = rows[i].r;
      out[i].p_value = rows[i].p_value;
      out[i].n = rows[i].n;
    }
    if (out_csv) analysis::write_meta_csv(rows, out_csv);
  });
}

repalign_status repalign_top5(const char* predictions_json, const char* manifest_csv, double* out_percent) {
  return guarded([&] {
    require(predictions_json, "predictions_json");
    require(manifest_csv, "manifest_csv");
    require(out_percent, "out_percent");
    tensorio::ManifestOptions mo;
    mo.check_paths = false;
    auto manifest = tensorio::load_manifest(manifest_csv, mo);
    *out_percent = analysis::top5_accuracy(analysis::read_predictions(predictions_json), manifest);
  });
}

repalign_status repalign_report(const repalign_scores* scores, size_t bins, const char* out_dir) {
  return guarded([&] {
    require(scores, "scores");
    require(out_dir, "out_dir");
    report::write_report(scores->t, bins, out_dir);
  });
}

// ---- run -----------------------------------------------------------------------------

repalign_status repalign_run(const char* config_path, int workers, repalign_log_fn log, void* user, size_t* n_rows,
                             size_t* n_skipped) {
  std::size_t skipped = 0;
  repalign_status st = guarded([&] {
    require(config_path, "config_path");
    auto config = pipeline::load_run_config(config_path);
    std::function<void(const std::string&)> sink;
    if (log) sink = [&](const std::string& line) { log(line.c_str(), user); };
    auto result = pipeline::run(config, workers_or_default(workers), sink);
    skipped = result.skipped.size();
    if (n_rows) *n_rows = result.scores.size();
    if (n_skipped) *n_skipped = skipped;
  });
  if (st == REPALIGN_OK && skipped > 0) {
    g_last_error = std::to_string(skipped) + " layer or condition inputs were skipped";
    return REPALIGN_ERR_PARTIAL;
  }
  return st;
}

}  // extern "C"
