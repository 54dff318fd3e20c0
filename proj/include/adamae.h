/*
 * adamae — masked video autoencoder with adaptive token sampling.
 *
 * C API of the shared library. All functions return a status code; on
 * failure adamae_last_error() yields a thread-local message describing what
 * went wrong. Handles are opaque and owned by the caller via the matching
 * _destroy function.
 */
#ifndef ADAMAE_H
#define ADAMAE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ADAMAE_API __declspec(dllexport)
#else
#define ADAMAE_API __attribute__((visibility("default")))
#endif

typedef enum adamae_status {
  ADAMAE_OK = 0,
  ADAMAE_ERR_INVALID_ARGUMENT = 1,
  ADAMAE_ERR_CONFIG = 2,
  ADAMAE_ERR_SHAPE = 3,
  ADAMAE_ERR_NUMERIC = 4,
  ADAMAE_ERR_IO = 5,
  ADAMAE_ERR_UNKNOWN = 6
} adamae_status;

typedef struct adamae_config adamae_config;   /* run configuration */
typedef struct adamae_session adamae_session; /* model + optimizer + rng */

ADAMAE_API const char* adamae_version(void);
ADAMAE_API const char* adamae_status_name(adamae_status status);

/* Message for the most recent failure on this thread. */
ADAMAE_API const char* adamae_last_error(void);

/* ------------------------------------------------------------------ */
/* Configuration                                                       */
/* ------------------------------------------------------------------ */

/* Fresh config with the toy defaults. */
ADAMAE_API adamae_status adamae_config_create(adamae_config** out);

/* Replace the config with the contents of a JSON file. */
ADAMAE_API adamae_status adamae_config_load(adamae_config* cfg,
                                            const char* json_path);

/* Override one field by dotted key, e.g. ("optim.base_lr", "0.01"). */
ADAMAE_API adamae_status adamae_config_set(adamae_config* cfg,
                                           const char* key,
                                           const char* value);

/* Serialize as JSON into a caller buffer. `*needed` receives the full
 * length including the NUL terminator; the buffer is filled when large
 * enough. */
ADAMAE_API adamae_status adamae_config_dump(const adamae_config* cfg,
                                            char* buf, size_t cap,
                                            size_t* needed);

ADAMAE_API void adamae_config_destroy(adamae_config* cfg);

/* ------------------------------------------------------------------ */
/* Synthetic corpus                                                    */
/* ------------------------------------------------------------------ */

/* Write `count` class-balanced sprite videos (AVID + .mask sidecars +
 * labels.csv) into out_dir. */
ADAMAE_API adamae_status adamae_gen_corpus(const adamae_config* cfg,
                                           const char* out_dir, int32_t count,
                                           uint64_t seed);

/* ------------------------------------------------------------------ */
/* Sessions                                                            */
/* ------------------------------------------------------------------ */

/* Fresh model initialized from the config (seed included). */
ADAMAE_API adamae_status adamae_session_create(const adamae_config* cfg,
                                               adamae_session** out);

/* Restore a session from a checkpoint file (architecture, parameters,
 * optimizer state, rng stream and step counter). */
ADAMAE_API adamae_status adamae_session_open(const char* ckpt_path,
                                             adamae_session** out);

ADAMAE_API adamae_status adamae_session_save(adamae_session* session,
                                             const char* ckpt_path);

ADAMAE_API adamae_status adamae_session_step(const adamae_session* session,
                                             uint64_t* out_step);

ADAMAE_API void adamae_session_destroy(adamae_session* session);

/* Per-step metrics delivered to the training callback. */
typedef struct adamae_step_metrics {
  uint64_t step;
  double loss_recon;
  double loss_sampling;
  double lr;
  double fg_mass;
  double ms_per_step;
} adamae_step_metrics;

typedef void (*adamae_step_callback)(const adamae_step_metrics* metrics,
                                     void* user);

/* Run `steps` optimization steps over the corpus in data_dir. When
 * metrics_csv is non-NULL the per-step metrics table is written there
 * (header + one row per executed step). */
ADAMAE_API adamae_status adamae_session_train(adamae_session* session,
                                              const char* data_dir,
                                              int64_t steps,
                                              const char* metrics_csv,
                                              adamae_step_callback callback,
                                              void* user);

/* Linear probe on frozen encoder features over the labeled corpus in
 * data_dir; writes top-1 accuracy to *accuracy. */
ADAMAE_API adamae_status adamae_session_probe(adamae_session* session,
                                              const char* data_dir,
                                              double* accuracy);

/* Export visualization files for one video:
 *   <prefix>_probs.pgm(.txt)  token probability map (+ raw values)
 *   <prefix>_mask.pgm         sampled mask (white = visible)
 *   <prefix>_recon.avid       de-normalized reconstruction
 *   <prefix>_recon_f0.pgm     first-frame luminance of the reconstruction */
ADAMAE_API adamae_status adamae_session_visualize(adamae_session* session,
                                                  const char* video_path,
                                                  const char* out_prefix,
                                                  uint64_t seed);

/* ------------------------------------------------------------------ */
/* Stateless operations                                                */
/* ------------------------------------------------------------------ */

/* Evaluate masking strategies (comma-separated list out of
 * adaptive,patch,tube,frame) on the corpus in data_dir with a model loaded
 * from ckpt_path (NULL = freshly initialized weights). Writes a CSV
 * "strategy,mean_L_R,mean_fg_mass" to out_csv. */
ADAMAE_API adamae_status adamae_compare_masks(const adamae_config* cfg,
                                              const char* ckpt_path,
                                              const char* data_dir,
                                              const char* strategies,
                                              double rho, uint64_t seed,
                                              const char* out_csv);

/* Finite-difference check of the full loss graph on the tiny architecture
 * described by cfg. Writes the worst relative error to *max_rel_err. */
ADAMAE_API adamae_status adamae_gradcheck(const adamae_config* cfg,
                                          uint64_t seed, double step_size,
                                          double* max_rel_err);

#ifdef __cplusplus
}
#endif

#endif /* ADAMAE_H */
