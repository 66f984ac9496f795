#ifndef MDIAG_MDIAG_H
#define MDIAG_MDIAG_H

/* C interface to the model-diagnosis toolkit.
 *
 * Every call returns an mdiag_status. On failure the message is available
 * from mdiag_last_error() on the same thread until the next failing call.
 * Strings returned through char** are owned by the caller and released with
 * mdiag_string_free(). Handles are immutable after creation and may be shared
 * between threads. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MDIAG_BUILDING)
#    define MDIAG_API __declspec(dllexport)
#  else
#    define MDIAG_API __declspec(dllimport)
#  endif
#else
#  define MDIAG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mdiag_status {
  MDIAG_OK = 0,
  MDIAG_E_INVALID_ARGUMENT = 2,
  MDIAG_E_IO = 3,
  MDIAG_E_SCHEMA = 4,
  MDIAG_E_SPEC_HASH = 5,
  MDIAG_E_NO_DATA = 6,
  MDIAG_E_DIVERGED = 7,
  MDIAG_E_UNAVAILABLE = 8,
  MDIAG_E_INTERNAL = 9
} mdiag_status;

typedef struct mdiag_zoo mdiag_zoo;         /* swept configuration records */
typedef struct mdiag_samples mdiag_samples; /* labeled diagnosis samples */
typedef struct mdiag_model mdiag_model;     /* fitted MD tree or CART */

typedef void (*mdiag_progress_fn)(size_t done, size_t total, void* user);

MDIAG_API const char* mdiag_version(void);
MDIAG_API const char* mdiag_last_error(void);
/* Short identifier of a status ("schema", "spec_hash", ...). */
MDIAG_API const char* mdiag_status_name(mdiag_status status);
MDIAG_API void mdiag_string_free(char* s);

/* Default spec for a dataset variant ("clean", "label_noise_10pct",
 * "ood_shift") as JSON text. */
MDIAG_API mdiag_status mdiag_spec_default(const char* variant, char** json_out);

/* Runs the full sweep described by spec_json. jobs <= 0 uses every core. */
MDIAG_API mdiag_status mdiag_zoo_generate(const char* spec_json, int jobs,
                                          mdiag_progress_fn progress, void* user,
                                          mdiag_zoo** out);
/* spec_json may be NULL: the grid is then inferred from the records. */
MDIAG_API mdiag_status mdiag_zoo_load(const char* path, const char* spec_json, mdiag_zoo** out);
MDIAG_API mdiag_status mdiag_zoo_save(const mdiag_zoo* zoo, const char* path);
MDIAG_API size_t mdiag_zoo_size(const mdiag_zoo* zoo);
MDIAG_API size_t mdiag_zoo_failed(const mdiag_zoo* zoo);
MDIAG_API void mdiag_zoo_free(mdiag_zoo* zoo);

/* question: "q1", "q2" or "q2n". Exclusion counts may be NULL. */
MDIAG_API mdiag_status mdiag_label(const mdiag_zoo* zoo, const char* question,
                                   mdiag_samples** out, size_t* excluded_zero_gap,
                                   size_t* excluded_unavailable);
MDIAG_API mdiag_status mdiag_samples_load(const char* path, mdiag_samples** out);
MDIAG_API mdiag_status mdiag_samples_save(const mdiag_samples* samples, const char* path);
MDIAG_API size_t mdiag_samples_size(const mdiag_samples* samples);
MDIAG_API void mdiag_samples_free(mdiag_samples* samples);

/* method: "mdtree", "mdtree-sim" or "cart". features applies to cart
 * ("landscape", "validation", "hyper", "combined"); fit_mode to the MD tree
 * ("brent", "exact"). options_json may be NULL or an object such as
 *   {"search": {"sharpness_log10": [initial, lower, upper]},
 *    "max_depth": 4, "min_samples_split": 2}. */
MDIAG_API mdiag_status mdiag_fit(const mdiag_samples* samples, const char* method,
                                 const char* features, const char* fit_mode,
                                 const char* options_json, uint64_t seed, mdiag_model** out);
MDIAG_API mdiag_status mdiag_model_load(const char* path, mdiag_model** out);
MDIAG_API mdiag_status mdiag_model_save(const mdiag_model* model, const char* path);
MDIAG_API mdiag_status mdiag_model_json(const mdiag_model* model, char** json_out);
MDIAG_API double mdiag_model_train_accuracy(const mdiag_model* model);
MDIAG_API size_t mdiag_model_train_samples(const mdiag_model* model);
MDIAG_API void mdiag_model_free(mdiag_model* model);

/* Reads JSONL lines carrying "config" and "metrics" (zoo records or labeled
 * samples) and writes one {"config", "label", "label_name", "regime"} line
 * per input. Failed zoo records are skipped. */
MDIAG_API mdiag_status mdiag_predict_file(const mdiag_model* model, const char* in_path,
                                          const char* out_path);

/* request_json:
 *   {"mode": "dataset"|"data-cap"|"param-cap", "question": "q1",
 *    "methods": ["mdtree", "cart-validation", ...], "shots": [...],
 *    "caps": [...], "seeds": [...], "search": {...}, "jobs": 1}
 * Output: CSV question,method,mode,shot_or_cap,seed,accuracy,status. */
MDIAG_API mdiag_status mdiag_eval_transfer(const mdiag_zoo* train, const mdiag_zoo* test,
                                           const char* request_json, char** csv_out);

/* request_json: {"question": "q1", "method": "model"|"random"|"optimal",
 *                "steps": ["fixed", "random", "optimal"], "seeds": [...]}
 * model is required for method "model"; direction_model (a Q1 model) also
 * when the question is q2/q2n. Output: CSV
 * question,method,step_policy,mean_improvement,std. */
MDIAG_API mdiag_status mdiag_eval_one_step(const mdiag_zoo* test, const char* request_json,
                                           const mdiag_model* model,
                                           const mdiag_model* direction_model, char** csv_out);

/* Aggregates a transfer CSV per (question, method, mode, shot_or_cap).
 * format: "csv" or "plotdata". */
MDIAG_API mdiag_status mdiag_report(const char* transfer_csv, const char* format, char** out);

#ifdef __cplusplus
}
#endif

#endif
