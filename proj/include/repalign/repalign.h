#ifndef REPALIGN_REPALIGN_H
#define REPALIGN_REPALIGN_H

#include <stddef.h>
#include <stdint.h>

#if defined(REPALIGN_BUILDING_LIBRARY)
#define REPALIGN_API __attribute__((visibility("default")))
#else
#define REPALIGN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum repalign_status {
  REPALIGN_OK = 0,
  REPALIGN_ERR_INVALID_ARGUMENT = 1,
  REPALIGN_ERR_IO = 2,
  REPALIGN_ERR_FORMAT = 3,
  REPALIGN_ERR_NON_FINITE = 4,
  REPALIGN_ERR_ID_MISMATCH = 5,
  REPALIGN_ERR_ZERO_NORM = 6,
  REPALIGN_ERR_DEGENERATE = 7,
  REPALIGN_ERR_DUPLICATE_KEY = 8,
  REPALIGN_ERR_EXHAUSTED = 9,
  REPALIGN_ERR_MISSING_INPUT = 10,
  REPALIGN_ERR_CONFIG = 11,
  REPALIGN_ERR_PARTIAL = 12,
  REPALIGN_ERR_INTERNAL = 13
} repalign_status;

/* Opaque handles. Every *_create / *_load / *_build output must be released
 * with the matching *_destroy. Destroy functions accept NULL. */
typedef struct repalign_matrix repalign_matrix;
typedef struct repalign_rdm repalign_rdm;
typedef struct repalign_scores repalign_scores;

REPALIGN_API const char* repalign_version(void);
REPALIGN_API const char* repalign_status_name(repalign_status status);

/* Message of the last failed call on this thread; empty after a success. */
REPALIGN_API const char* repalign_last_error(void);

/* Worker count from REPALIGN_WORKERS or the hardware concurrency. Passing
 * workers = 0 to any function below means the same. */
REPALIGN_API repalign_status repalign_default_workers(int* out);

/* ---- feature matrices (NPY + .ids.txt sidecar) ---------------------------- */

REPALIGN_API repalign_status repalign_matrix_create(const char* const* ids, size_t rows, size_t cols,
                                                   const double* data, repalign_matrix** out);
REPALIGN_API repalign_status repalign_matrix_load(const char* npy_path, repalign_matrix** out);
/* Loads and re-orders rows to the item order of `like`; the id sets must match. */
REPALIGN_API repalign_status repalign_matrix_load_like(const char* npy_path, const repalign_matrix* like,
                                                      repalign_matrix** out);
REPALIGN_API repalign_status repalign_matrix_save(const repalign_matrix* m, const char* npy_path);
REPALIGN_API size_t repalign_matrix_rows(const repalign_matrix* m);
REPALIGN_API size_t repalign_matrix_cols(const repalign_matrix* m);
REPALIGN_API const double* repalign_matrix_data(const repalign_matrix* m);
REPALIGN_API const char* repalign_matrix_id(const repalign_matrix* m, size_t row);
REPALIGN_API void repalign_matrix_destroy(repalign_matrix* m);

/* ---- dissimilarity matrices ----------------------------------------------- */

REPALIGN_API repalign_status repalign_rdm_build(const repalign_matrix* features, int workers, repalign_rdm** out);
REPALIGN_API repalign_status repalign_rdm_load(const char* npy_path, repalign_rdm** out);
REPALIGN_API repalign_status repalign_rdm_save(const repalign_rdm* rdm, const char* npy_path);
REPALIGN_API size_t repalign_rdm_size(const repalign_rdm* rdm);
REPALIGN_API const double* repalign_rdm_cells(const repalign_rdm* rdm);
REPALIGN_API const char* repalign_rdm_id(const repalign_rdm* rdm, size_t i);
REPALIGN_API void repalign_rdm_destroy(repalign_rdm* rdm);

/* ---- statistics ----------------------------------------------------------- */

REPALIGN_API repalign_status repalign_cosine_distance(const double* u, const double* v, size_t n, double* out);
REPALIGN_API repalign_status repalign_spearman(const double* x, const double* y, size_t n, double* out);
REPALIGN_API repalign_status repalign_pearson(const double* x, const double* y, size_t n, double* out);
REPALIGN_API repalign_status repalign_permutation_p(const double* x, const double* y, size_t n, size_t n_perm,
                                                   uint64_t seed, int workers, double* out);

/* Spearman correlation of the upper triangles; n_pairs may be NULL. */
REPALIGN_API repalign_status repalign_rsa(const repalign_rdm* a, const repalign_rdm* b, double* rho, size_t* n_pairs);

/* Base RSA (layer_base vs target), Dist RSA (layer_dist vs target) and their
 * absolute difference. Any output pointer may be NULL. */
REPALIGN_API repalign_status repalign_delta_rsa(const repalign_rdm* layer_base, const repalign_rdm* layer_dist,
                                               const repalign_rdm* target, double* base, double* dist,
                                               double* delta);

/* ---- saliency -------------------------------------------------------------- */

#define REPALIGN_SALIENCY_SIDE 256
#define REPALIGN_SALIENCY_CELLS (REPALIGN_SALIENCY_SIDE * REPALIGN_SALIENCY_SIDE)

/* Writes REPALIGN_SALIENCY_CELLS row-major values into out_map. */
REPALIGN_API repalign_status repalign_saliency_file(const char* image_path, double* out_map);

/* Saliency maps for every manifest image, saved as an n x 65536 feature
 * matrix. When maps_dir is non-NULL a grayscale PNG per image is written. */
REPALIGN_API repalign_status repalign_saliency_manifest(const char* manifest_csv, const char* out_npy,
                                                       const char* maps_dir, int workers);

/* ---- distractor dataset --------------------------------------------------- */

typedef struct repalign_forge_options {
  size_t n_targets;
  size_t retry_budget;
  size_t n_saliency_pairs;
  size_t n_caption_items;
  uint64_t seed;
  int workers;
  const char* thresholds_path; /* NULL: calibrate and write thresholds.json */
} repalign_forge_options;

REPALIGN_API void repalign_forge_options_init(repalign_forge_options* options);

/* Builds the dataset under out_dir: images/, dataset_manifest.csv and
 * thresholds.json. Exhausted targets are reported through the counters. */
REPALIGN_API repalign_status repalign_forge(const char* manifest_csv, const char* embeddings_npy, const char* out_dir,
                                           const repalign_forge_options* options, size_t* n_records,
                                           size_t* n_exhausted);

/* ---- brain ---------------------------------------------------------------- */

REPALIGN_API repalign_status repalign_brain_rsa(const repalign_matrix* responses, const repalign_rdm* target,
                                               int workers, double* rho, size_t* n_items);

/* ---- score tables --------------------------------------------------------- */

typedef struct repalign_score_row {
  const char* system;
  const char* unit;
  int64_t unit_index;
  const char* condition;
  const char* metric;
  double value;
  int64_t n_items;
  int64_t seed;
} repalign_score_row;

REPALIGN_API repalign_status repalign_scores_create(repalign_scores** out);
REPALIGN_API repalign_status repalign_scores_load(const char* csv_path, repalign_scores** out);
REPALIGN_API repalign_status repalign_scores_save(const repalign_scores* scores, const char* csv_path);
REPALIGN_API repalign_status repalign_scores_add(repalign_scores* scores, const repalign_score_row* row);
REPALIGN_API size_t repalign_scores_size(const repalign_scores* scores);
/* String fields stay valid until the table is modified or destroyed. */
REPALIGN_API repalign_status repalign_scores_row(const repalign_scores* scores, size_t i, repalign_score_row* out);
/* REPALIGN_ERR_MISSING_INPUT when no row has the key. */
REPALIGN_API repalign_status repalign_scores_find(const repalign_scores* scores, const char* system, const char* unit,
                                                 const char* condition, const char* metric, double* out);
REPALIGN_API void repalign_scores_destroy(repalign_scores* scores);

/* ---- meta-analysis, accuracy, report -------------------------------------- */

typedef struct repalign_meta_row {
  const char* predictor; /* "semantics" or "saliency" */
  const char* subset;    /* "all", "negative-saliency", "positive-saliency" */
  double r;              /* NaN when the subset is too small or constant */
  double p_value;
  size_t n;
} repalign_meta_row;

#define REPALIGN_META_ROWS 4

/* Fills out[REPALIGN_META_ROWS]; also writes a CSV when out_csv is non-NULL. */
REPALIGN_API repalign_status repalign_meta(const repalign_scores* scores, size_t n_perm, uint64_t seed, int workers,
                                          repalign_meta_row* out, const char* out_csv);

REPALIGN_API repalign_status repalign_top5(const char* predictions_json, const char* manifest_csv,
                                          double* out_percent);

REPALIGN_API repalign_status repalign_report(const repalign_scores* scores, size_t bins, const char* out_dir);

/* ---- end-to-end ----------------------------------------------------------- */

typedef void (*repalign_log_fn)(const char* line, void* user);

/* Runs a TOML configuration. Returns REPALIGN_ERR_PARTIAL when some layers or
 * conditions were skipped; outputs are still written in that case. */
REPALIGN_API repalign_status repalign_run(const char* config_path, int workers, repalign_log_fn log, void* user,
                                         size_t* n_rows, size_t* n_skipped);

#ifdef __cplusplus
}
#endif

#endif
