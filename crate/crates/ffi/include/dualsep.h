#ifndef DUALSEP_H
#define DUALSEP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes. Zero is success, everything else is negative.
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = -1,
  DS_STATUS_INVALID_ARGUMENT = -2,
  DS_STATUS_SHAPE = -3,
  DS_STATUS_IO = -4,
  DS_STATUS_FORMAT = -5,
  DS_STATUS_DIVERGENCE = -6,
  DS_STATUS_NON_FINITE = -7,
  DS_STATUS_COMPUTE_BUDGET = -8,
  DS_STATUS_EMPTY = -9,
  DS_STATUS_BUFFER_TOO_SMALL = -10,
  DS_STATUS_PANIC = -11,
} DsStatus;

// Opaque gridded field.
typedef struct DsGrid DsGrid;

// Opaque trained model: kernel network, background network and signal model.
typedef struct DsModel DsModel;

// Parameters of the built-in analytic dispersion signal.
typedef struct DsAnalyticParams {
  double j;
  double jp;
  double amplitude;
  double width;
  double z;
} DsAnalyticParams;

// Training hyperparameters. `transform`: 0 identity, 1 log1p.
// `loss`: 0 mean squared error, 1 l2 norm. `force` is a boolean.
typedef struct DsTrainConfig {
  uint32_t r;
  double lambda;
  uint32_t epochs;
  uint32_t batch_size;
  double lr;
  uint64_t seed;
  uint8_t transform;
  uint8_t loss;
  uint32_t kernel_width;
  uint32_t kernel_layers;
  uint32_t bkgd_width;
  uint64_t compute_budget;
  uint8_t force;
} DsTrainConfig;

// Fit-quality metrics of a separation against the observed grid.
typedef struct DsMetrics {
  double rmse;
  double psnr;
  double ssim;
  double mae;
  double re;
  double chi2;
  double chi2_pval;
} DsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *ds_last_error(void);

// Library version as a static NUL-terminated string.
const char *ds_version(void);

struct DsAnalyticParams ds_analytic_params_default(void);

struct DsTrainConfig ds_train_config_default(void);

// Builds a grid from `ndim` axes and `n_values` row-major values (last axis
// fastest). Axis `k` has `extents[k]` points spanning `[mins[k], maxs[k]]`
// and is named `labels[k]`; the analytic signal needs the names H, K, L or
// omega. A null `labels` names the axes x0, x1, ...
enum DsStatus ds_grid_new(uintptr_t ndim,
                          const char *const *labels,
                          const uintptr_t *extents,
                          const double *mins,
                          const double *maxs,
                          const double *values,
                          uintptr_t n_values,
                          struct DsGrid **out);

enum DsStatus ds_grid_read(const char *path, struct DsGrid **out);

enum DsStatus ds_grid_write(const struct DsGrid *grid, const char *path);

// Number of cells, or 0 for a null handle.
uintptr_t ds_grid_len(const struct DsGrid *grid);

// Number of axes, or 0 for a null handle.
uintptr_t ds_grid_ndim(const struct DsGrid *grid);

// Copies the values into `buf`, which must hold `ds_grid_len` doubles.
enum DsStatus ds_grid_values(const struct DsGrid *grid, double *buf, uintptr_t capacity);

void ds_grid_free(struct DsGrid *grid);

// Jointly trains the kernel and background networks on `observed`.
// The signal model is `signal_grid` when non-null, otherwise `signal_params`.
enum DsStatus ds_train(const struct DsGrid *observed,
                       const struct DsAnalyticParams *signal_params,
                       const struct DsGrid *signal_grid,
                       const struct DsTrainConfig *config,
                       struct DsModel **out);

enum DsStatus ds_model_load(const char *path, struct DsModel **out);

enum DsStatus ds_model_save(const struct DsModel *model, const char *path);

void ds_model_free(struct DsModel *model);

// Evaluates the model on its training grid. Each output pointer receives a
// new grid handle; any of them may be null to skip that component.
enum DsStatus ds_model_predict(const struct DsModel *model,
                               struct DsGrid **out_total,
                               struct DsGrid **out_signal,
                               struct DsGrid **out_background);

// Estimates the background penalty weight. The support is thresholded at
// `tau` of the signal maximum and dilated by `r`; `lpf_sigma` is the
// Gaussian low-pass width in cells.
enum DsStatus ds_estimate_lambda(const struct DsGrid *observed,
                                 const struct DsAnalyticParams *signal_params,
                                 const struct DsGrid *signal_grid,
                                 double tau,
                                 uint32_t r,
                                 double lpf_sigma,
                                 double *out_lambda);

enum DsStatus ds_metrics(const struct DsGrid *observed,
                         const struct DsGrid *total,
                         const struct DsGrid *signal,
                         const struct DsGrid *background,
                         struct DsMetrics *out);

// Raw data size divided by model size.
enum DsStatus ds_compression_ratio(uint64_t raw_bytes, uint64_t model_bytes, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALSEP_H */
