#ifndef CARFLUENTS_H
#define CARFLUENTS_H

/* C API of the car-fluents library: spatial-temporal And-Or graph detection,
 * part tracking and fluent classification over video directories.
 *
 * Conventions:
 *   - Every function returns CF_OK (0) on success or an error code; the
 *     message behind the last failure on the calling thread is available
 *     via cf_last_error().
 *   - Opaque handles are created/destroyed by the matching pair below.
 *   - `options` arguments take "key=value" pairs separated by newlines or
 *     semicolons (keys documented in the README); NULL means all defaults.
 *   - Strings returned through char** are heap blocks owned by the caller;
 *     release them with cf_string_free().
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CF_OK 0
#define CF_EINVAL 1 /* bad argument or failed validation */
#define CF_EIO 2    /* file missing / unreadable / unwritable */
#define CF_EPARSE 3 /* malformed document or payload */
#define CF_EFAIL 4  /* internal runtime failure */

typedef struct cf_model cf_model;

const char* cf_version(void);
const char* cf_last_error(void);
void cf_string_free(char* s);

/* ---- model handles ---- */

int cf_model_load(const char* path, cf_model** out);
int cf_model_save(const cf_model* model, const char* path);
void cf_model_free(cf_model* model);

/* Structural invariant check; *violations_json receives a JSON array of
 * messages (empty array when well-formed). */
int cf_model_validate(const cf_model* model, char** violations_json);

/* ---- synthetic data ---- */

/* Renders one video from a scenario template name (e.g. "open_hood",
 * "turn_left", "parts_static") or a scenario JSON file path. */
int cf_synth_video(const char* template_or_spec, const char* out_dir, uint64_t seed,
                   const char* options);

/* Renders a labelled benchmark batch (comma-separated template list in
 * options key "templates", train/test counts) and writes
 * <out_dir>/manifest.json; *manifest_path_out receives its path. */
int cf_synth_batch(const char* out_dir, uint64_t seed, const char* options,
                   char** manifest_path_out);

/* ---- training ---- */

/* Latent-structural-SVM training over the manifest's train split. Writes the
 * model JSON to out_model and a per-iteration objective CSV to log_csv
 * (NULL skips the log). */
int cf_train_aog(const char* manifest_path, const char* options, const char* out_model,
                 const char* log_csv);

/* ---- inference ---- */

/* Detections for one video directory as JSON lines. When annotation_path is
 * non-NULL, also writes <out_jsonl>.pred.json with one prediction per
 * annotated car per processed pair (the car-box-given protocol). */
int cf_detect(const cf_model* model, const char* video_dir, const char* annotation_path,
              const char* options, const char* out_jsonl);

/* Part tracks (Viterbi linking of detection proposals) for one video. */
int cf_track(const cf_model* model, const char* video_dir, const char* options,
             const char* out_jsonl);

/* ---- fluent classification ---- */

/* detect -> track -> TPS -> VLAD -> one-vs-rest over the manifest's train
 * split; writes codebook + classifier JSON to out_model. */
int cf_train_fluent(const cf_model* model, const char* manifest_path, const char* options,
                    const char* out_model);

/* Evaluates the fluent classifier over the manifest's test split; writes the
 * row-normalized confusion matrix CSV and returns the mean precision. */
int cf_eval_fluent(const cf_model* model, const char* fluent_model_path,
                   const char* manifest_path, const char* options, const char* out_csv,
                   double* mp_out);

/* ---- part evaluation ---- */

/* Per-ground-truth-car part localization and status detection rates over the
 * manifest's test split; *report_json receives per-part and mean rates. */
int cf_eval_parts(const cf_model* model, const char* manifest_path, const char* options,
                  char** report_json);

/* ---- verification ---- */

/* Runs the brute-force equivalence checks and writes a pass/fail CSV;
 * *failures receives the number of failing checks. */
int cf_oracle_suite(uint64_t seed, const char* out_csv, int* failures);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CARFLUENTS_H */
