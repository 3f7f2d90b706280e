#ifndef AFFECTLOOP_H
#define AFFECTLOOP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum AlStatus {
  AL_STATUS_OK = 0,
  AL_STATUS_NULL_POINTER = 1,
  AL_STATUS_INVALID_ARGUMENT = 2,
  AL_STATUS_INVALID_UTF8 = 3,
  AL_STATUS_PARSE = 4,
  AL_STATUS_SIGNAL = 5,
  AL_STATUS_DECODER = 6,
  AL_STATUS_PLANNER = 7,
  AL_STATUS_ENGINE = 8,
  AL_STATUS_METRICS = 9,
  AL_STATUS_SESSION = 10,
  AL_STATUS_IO = 11,
  AL_STATUS_PANIC = 12,
} AlStatus;

/**
 * Opaque rendered clip with the plan and score it came from.
 */
typedef struct AlClip AlClip;

/**
 * Opaque affect decoder.
 */
typedef struct AlDecoder AlDecoder;

/**
 * Opaque retrieval planner.
 */
typedef struct AlPlanner AlPlanner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call on this thread; do not free.
 */
const char *al_last_error(void);

/**
 * Library version; static, do not free.
 */
const char *al_version(void);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void al_string_free(char *s);

/**
 * Residual update: `next = clamp(post + alpha * (target - post))`.
 *
 * # Safety
 * `out_valence` and `out_arousal` are valid for writes.
 */
enum AlStatus al_update_target(double post_valence,
                               double post_arousal,
                               double target_valence,
                               double target_arousal,
                               double alpha,
                               double *out_valence,
                               double *out_arousal);

/**
 * Creates a decoder from a JSON configuration, or the default when
 * `config_json` is null.
 *
 * # Safety
 * `config_json` is null or a NUL-terminated string; `out_decoder` is valid for writes.
 */
enum AlStatus al_decoder_new(const char *config_json, struct AlDecoder **out_decoder);

/**
 * # Safety
 * `decoder` is null or was returned by [`al_decoder_new`] and not yet freed.
 */
void al_decoder_free(struct AlDecoder *decoder);

/**
 * Decodes the mean affect of a channel-major recording
 * (`samples[ch * n_samples + t]`, µV) over sliding windows.
 *
 * # Safety
 * `samples` holds `n_channels * n_samples` values; `labels` holds
 * `n_channels` NUL-terminated strings; the outputs are valid for writes.
 */
enum AlStatus al_decoder_decode(struct AlDecoder *decoder,
                                const double *samples,
                                size_t n_channels,
                                size_t n_samples,
                                const char *const *labels,
                                double sample_rate_hz,
                                double window_s,
                                double hop_s,
                                double *out_valence,
                                double *out_arousal);

/**
 * Creates a template planner over a JSON Lines knowledge base, or the
 * bundled one when `kb_jsonl` is null.
 *
 * # Safety
 * `kb_jsonl` is null or a NUL-terminated string; `out_planner` is valid for writes.
 */
enum AlStatus al_planner_new(const char *kb_jsonl, struct AlPlanner **out_planner);

/**
 * # Safety
 * `planner` is null or was returned by [`al_planner_new`] and not yet freed.
 */
void al_planner_free(struct AlPlanner *planner);

/**
 * Plans from `state` toward `target`; writes the plan as canonical JSON.
 *
 * # Safety
 * `planner` is a live handle; `out_plan_json` is valid for writes.
 */
enum AlStatus al_planner_plan(struct AlPlanner *planner,
                              double state_valence,
                              double state_arousal,
                              double target_valence,
                              double target_arousal,
                              size_t sections,
                              double duration_s,
                              double alpha_plan,
                              char **out_plan_json);

/**
 * Renders a plan given as JSON, starting from `state`.
 *
 * # Safety
 * `plan_json` is a NUL-terminated string; `out_clip` is valid for writes.
 */
enum AlStatus al_generate(const char *plan_json,
                          double state_valence,
                          double state_arousal,
                          uint64_t seed,
                          uint32_t sample_rate_hz,
                          struct AlClip **out_clip);

/**
 * # Safety
 * `clip` is null or was returned by [`al_generate`] and not yet freed.
 */
void al_clip_free(struct AlClip *clip);

/**
 * Borrowed view of the PCM samples, valid while the clip lives.
 *
 * # Safety
 * `clip` is a live handle; the outputs are valid for writes.
 */
enum AlStatus al_clip_samples(struct AlClip *clip,
                              const double **out_samples,
                              size_t *out_len,
                              uint32_t *out_sample_rate_hz);

/**
 * Writes the clip as 16-bit PCM WAV.
 *
 * # Safety
 * `clip` is a live handle; `path` is a NUL-terminated string.
 */
enum AlStatus al_clip_write_wav(struct AlClip *clip, const char *path);

/**
 * Metric report of the clip against `target`, as canonical JSON.
 *
 * # Safety
 * `clip` is a live handle; `out_report_json` is valid for writes.
 */
enum AlStatus al_clip_metrics(struct AlClip *clip,
                              double target_valence,
                              double target_arousal,
                              char **out_report_json);

/**
 * Runs a simulated session and writes its report as canonical JSON. With
 * `out_dir` set, the round log, clips and reports are written there too.
 * A null `config_json` uses the defaults.
 *
 * # Safety
 * String arguments are null or NUL-terminated; `out_report_json` is valid for writes.
 */
enum AlStatus al_session_run(const char *config_json,
                             uint64_t seed,
                             const char *out_dir,
                             char **out_report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFFECTLOOP_H */
