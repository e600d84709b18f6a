/* armor: adaptive round-based multi-task refinement for robotic failure
 * detection and reasoning. C API over the shared library; every function is
 * safe to call from multiple threads (the last-error message is per thread).
 *
 * conventions
 *   - functions return ARMOR_OK or an error status; on error a one-line
 *     message is available from armor_last_error() until the next call on
 *     the same thread.
 *   - returned strings are heap-allocated json or text; release them with
 *     armor_string_free(). output pointers may be NULL when the caller does
 *     not need the payload.
 *   - every command writes a fully resolved config echo (config.json) next
 *     to its outputs, sufficient to reproduce the run exactly.
 */
#ifndef ARMOR_H
#define ARMOR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__) && defined(ARMOR_BUILD_SHARED)
#define ARMOR_API __attribute__((visibility("default")))
#else
#define ARMOR_API
#endif

/* status values double as process exit codes for command line frontends */
typedef enum armor_status {
    ARMOR_OK             = 0,
    ARMOR_ERR_VALIDATION = 1, /* bad arguments, malformed config or input */
    ARMOR_ERR_RUNTIME    = 2, /* io failure, judge failure, internal error */
} armor_status;

/* opaque, fully resolved run configuration */
typedef struct armor_config armor_config;

ARMOR_API const char * armor_version(void);

/* message for the most recent failing call on this thread ("" if none) */
ARMOR_API const char * armor_last_error(void);

ARMOR_API void armor_string_free(char * s);

/* build a config from a json file (or from defaults when path is NULL).
 * overrides are "dotted.key=value" entries applied over the document, e.g.
 * "train.ablation=offline_only" or "grid.seeds=[1,2]"; values parse as json
 * when well-formed and as plain strings otherwise. precedence: file values,
 * then the ARMOR_SEED environment variable (top-level seed only), then
 * overrides. unknown keys are rejected with their full path. */
ARMOR_API armor_status armor_config_load(const char * path,
                                         const char * const * overrides, size_t n_overrides,
                                         armor_config ** out);

/* same, from json text instead of a file */
ARMOR_API armor_status armor_config_parse(const char * json_text,
                                          const char * const * overrides, size_t n_overrides,
                                          armor_config ** out);

ARMOR_API void armor_config_free(armor_config * cfg);

/* fully resolved config as json text (the same content every command echoes) */
ARMOR_API armor_status armor_config_json(const armor_config * cfg, char ** out_json);

/* generate the synthetic benchmark into paths.data_dir: sparse.jsonl,
 * dense.jsonl, test.jsonl, manifest.json, vocab.json. out_json reports the
 * directory and a checksum per written file. */
ARMOR_API armor_status armor_gen_data(const armor_config * cfg, char ** out_json);

/* train a model on the dataset in paths.data_dir; writes stage checkpoints
 * (warmup.ckpt / expert.ckpt when those stages run), final.ckpt and a
 * per-step train_log.jsonl into paths.checkpoint_dir. out_json reports the
 * optimizer step count and a checksum per written file. */
ARMOR_API armor_status armor_train(const armor_config * cfg, char ** out_json);

/* refine one episode with a trained model and write the refinement
 * diagnostics dump (per-round candidate costs, selections and the stop
 * decision) to paths.report_dir/infer_<episode_id>.json.
 *   checkpoint    NULL -> paths.checkpoint_dir/final.ckpt
 *   episode_file  a jsonl file of episodes; NULL -> paths.data_dir/test.jsonl
 *   episode_id    id within that file; NULL -> the first episode
 * candidate sampling streams depend on the episode's position in the file,
 * so refining test episode k reproduces what evaluation saw for episode k.
 * out_json receives the same diagnostics document. */
ARMOR_API armor_status armor_infer(const armor_config * cfg, const char * checkpoint,
                                   const char * episode_file, const char * episode_id,
                                   char ** out_json);

/* evaluate a trained model on the test split in paths.data_dir with the
 * configured judge; writes the metrics report (accuracy, judge score,
 * per-round curves, stop-round histogram) to report_path (NULL ->
 * paths.report_dir/eval.json). out_json receives the report document. */
ARMOR_API armor_status armor_eval(const armor_config * cfg, const char * checkpoint,
                                  const char * report_path, char ** out_json);

/* train and evaluate the ablation grid. grid selects the cells:
 *   "variants"  every configured variant at the base supervision ratio
 *   "ratio"     the full variant across the configured sparse:dense ratios
 *   "all"/NULL  both (as configured by grid.sweep_ratios)
 * progress lines go to stderr. writes the grid report to report_path
 * (NULL -> paths.report_dir/ablate.json); out_json receives the report and
 * out_table a human-readable set of tables. */
ARMOR_API armor_status armor_ablate(const armor_config * cfg, const char * grid,
                                    const char * report_path,
                                    char ** out_json, char ** out_table);

#ifdef __cplusplus
}
#endif

#endif /* ARMOR_H */
