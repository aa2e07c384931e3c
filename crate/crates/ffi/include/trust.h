#ifndef TRUST_H
#define TRUST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum TrustStatus {
  TRUST_STATUS_OK = 0,
  TRUST_STATUS_NULL_POINTER = 1,
  TRUST_STATUS_INVALID_ARGUMENT = 2,
  TRUST_STATUS_SHAPE = 3,
  TRUST_STATUS_FORMAT = 4,
  TRUST_STATUS_IO = 5,
  TRUST_STATUS_MISSING_LABELS = 6,
  TRUST_STATUS_DEGENERATE = 7,
  TRUST_STATUS_DIVERGED = 8,
  TRUST_STATUS_CONFIG = 9,
  TRUST_STATUS_NON_FINITE = 10,
  TRUST_STATUS_PANIC = 11,
} TrustStatus;

/**
 * Opaque dataset handle.
 */
typedef struct TrustDataset TrustDataset;

/**
 * Opaque trained-model handle.
 */
typedef struct TrustModel TrustModel;

/**
 * Training settings. Obtain defaults from [`trust_train_config_default`].
 */
typedef struct TrustTrainConfig {
  size_t batch_size;
  size_t epochs;
  double lr;
  double tau;
  double gamma;
  size_t scoring_batch_size;
  uint64_t seed;
  bool use_soft_ctr;
  bool use_hard_ctr;
  bool use_uncertainty;
} TrustTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *trust_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *trust_version(void);

/**
 * Checks a dataset directory without keeping it.
 */
enum TrustStatus trust_dataset_validate(const char *dir);

enum TrustStatus trust_dataset_load(const char *dir, struct TrustDataset **out);

enum TrustStatus trust_dataset_save(const struct TrustDataset *ds, const char *dir);

/**
 * Synthetic source/target pair; unspecified generator settings use their defaults.
 */
enum TrustStatus trust_gen_synthetic(size_t classes,
                                     size_t n_per_class,
                                     double rho,
                                     uint64_t seed,
                                     struct TrustDataset **out_source,
                                     struct TrustDataset **out_target);

enum TrustStatus trust_dataset_len(const struct TrustDataset *ds, size_t *out);

enum TrustStatus trust_dataset_num_classes(const struct TrustDataset *ds, size_t *out);

void trust_dataset_free(struct TrustDataset *ds);

/**
 * Row-softmax diagonal of a `b × b` similarity matrix into `out_w[0..b]`.
 */
enum TrustStatus trust_reliability_weights(const double *sim, size_t b, double *out_w);

/**
 * Reliability weight of every sample of `target`; `out_w` must hold `len` values
 * where `len` equals the dataset size.
 */
enum TrustStatus trust_score_dataset(const struct TrustDataset *target,
                                     size_t scoring_batch_size,
                                     double gamma,
                                     uint64_t seed,
                                     double *out_w,
                                     size_t len);

/**
 * Contrastive loss of `b × p` weak/strong feature buffers. With `sim` NULL the
 * hard loss is computed; otherwise `sim` is the `b × b` caption similarity.
 */
enum TrustStatus trust_contrastive_loss(const double *z,
                                        const double *z_bar,
                                        const double *sim,
                                        size_t b,
                                        size_t p,
                                        double tau,
                                        double *out_loss);

enum TrustStatus trust_train_config_default(struct TrustTrainConfig *out);

/**
 * Full pipeline: pseudo-labels, reliability weights, then training.
 */
enum TrustStatus trust_train(const struct TrustDataset *source,
                             const struct TrustDataset *target,
                             const struct TrustTrainConfig *config,
                             struct TrustModel **out_model);

/**
 * Accuracy of `model` on a labelled dataset, in [0, 1].
 */
enum TrustStatus trust_model_evaluate(const struct TrustModel *model,
                                      const struct TrustDataset *ds,
                                      double *out_accuracy);

enum TrustStatus trust_model_save(const struct TrustModel *model, const char *dir);

enum TrustStatus trust_model_load(const char *dir, struct TrustModel **out);

void trust_model_free(struct TrustModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRUST_H */
