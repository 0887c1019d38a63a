/*
 * Public C interface of the LVO prediction pipeline library.
 *
 * The library exposes the batch pipeline stages (file to file, matching
 * the CLI subcommands) plus handle-based access to cohorts, volumes and
 * trained models. Every function returns a status code; on failure
 * lvo_last_error() describes what went wrong for the calling thread.
 */
#ifndef LVO_H
#define LVO_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32) || defined(_WIN64)
#define LVO_API __declspec(dllexport)
#else
#define LVO_API __attribute__((visibility("default")))
#endif

/* Status codes; identical to the CLI exit codes. */
typedef enum lvo_status {
    LVO_OK = 0,
    LVO_E_USAGE = 1,      /* bad arguments, unreadable/unwritable paths */
    LVO_E_FORMAT = 2,     /* magic/version/schema mismatch in an input file */
    LVO_E_VALIDATION = 3, /* data violates a documented invariant */
    LVO_E_INTERNAL = 4
} lvo_status;

LVO_API const char* lvo_version(void);

/* Message for the last failing call on this thread; empty string if none. */
LVO_API const char* lvo_last_error(void);

/* ---- batch pipeline stages ---------------------------------------------
 * options_json may be NULL or "{}". Stage options follow the "exp-v1"
 * schema (seed, train_fraction, cv_folds, levels, gbt{...}, fcn{...},
 * top_k, window_lo/hi); synthesis options are documented with each call.
 */

/* Writes a synthetic cohort CSV. options: cohort spec overrides
 * {"size":300,"prevalence":0.4333,...}. */
LVO_API lvo_status lvo_stage_synth_cohort(const char* out_csv, uint32_t size, double prevalence,
                                          uint64_t seed, const char* options_json);

/* One phantom per cohort record: SVOL volume + mask + scans manifest.
 * options: {"nx":512,"ny":512,"nz":28,"spacing":[...],"dot_radius":4.0,
 * "noise_sd":2.0,"max_rotation_deg":8.0,"max_shift_mm":6.0}. */
LVO_API lvo_status lvo_stage_synth_scans(const char* cohort_csv, const char* out_dir,
                                         uint64_t seed, const char* options_json);

LVO_API lvo_status lvo_stage_preprocess(const char* cohort_csv, const char* scans_manifest,
                                        const char* out_dir, const char* options_json);

LVO_API lvo_status lvo_stage_train_fcn(const char* cohort_csv, const char* prep_manifest,
                                       const char* out_model, const char* options_json);

LVO_API lvo_status lvo_stage_extract(const char* cohort_csv, const char* prep_manifest,
                                     const char* fcn_model, const char* out_features);

LVO_API lvo_status lvo_stage_train(const char* cohort_csv, const char* features_file,
                                   const char* out_dir, const char* options_json);

LVO_API lvo_status lvo_stage_evaluate(const char* cohort_csv, const char* features_file,
                                      const char* models_manifest, const char* out_report,
                                      const char* options_json);

LVO_API lvo_status lvo_stage_report(const char* report_json, const char* out_csv,
                                    const char* out_svg);

LVO_API lvo_status lvo_stage_run(const char* cohort_csv, const char* scans_manifest,
                                 const char* out_dir, const char* options_json);

/* ---- cohort handles ----------------------------------------------------- */

typedef struct lvo_cohort lvo_cohort;

LVO_API lvo_cohort* lvo_cohort_load(const char* csv_path);
LVO_API lvo_cohort* lvo_cohort_synth(uint32_t size, double prevalence, uint64_t seed,
                                     const char* options_json);
LVO_API lvo_status lvo_cohort_save(const lvo_cohort* cohort, const char* csv_path);
LVO_API int32_t lvo_cohort_size(const lvo_cohort* cohort);
LVO_API int32_t lvo_cohort_lvo_count(const lvo_cohort* cohort);
/* Class-conditional summaries and association tests as CSV text; caller
 * frees with lvo_string_free. */
LVO_API char* lvo_cohort_stats_csv(const lvo_cohort* cohort);
LVO_API void lvo_cohort_free(lvo_cohort* cohort);

/* ---- volume handles ------------------------------------------------------ */

typedef struct lvo_volume lvo_volume;

LVO_API lvo_volume* lvo_volume_read(const char* svol_path);
LVO_API lvo_status lvo_volume_dims(const lvo_volume* volume, uint32_t* nx, uint32_t* ny,
                                   uint32_t* nz);
LVO_API lvo_status lvo_volume_spacing(const lvo_volume* volume, double* sx, double* sy,
                                      double* sz);
LVO_API lvo_status lvo_volume_write(const lvo_volume* volume, const char* svol_path);
LVO_API void lvo_volume_free(lvo_volume* volume);

/* ---- trained model handles ----------------------------------------------- */

typedef struct lvo_gbt lvo_gbt;

LVO_API lvo_gbt* lvo_gbt_load(const char* path);
/* values/missing have length n; missing[i] nonzero masks values[i]. */
LVO_API lvo_status lvo_gbt_predict(const lvo_gbt* model, const double* values,
                                   const uint8_t* missing, int32_t n, double* out_probability);
LVO_API void lvo_gbt_free(lvo_gbt* model);

typedef struct lvo_fcn lvo_fcn;

LVO_API lvo_fcn* lvo_fcn_load(const char* path);
LVO_API int32_t lvo_fcn_feature_len(const lvo_fcn* model);
/* image: input_size^2 doubles in [0,1], row-major. out must hold
 * lvo_fcn_feature_len values. */
LVO_API lvo_status lvo_fcn_extract(const lvo_fcn* model, const double* image, int32_t n_pixels,
                                   double* out, int32_t out_len);
LVO_API void lvo_fcn_free(lvo_fcn* model);

LVO_API void lvo_string_free(char* text);

#ifdef __cplusplus
}
#endif

#endif /* LVO_H */
