#ifndef COLMP_H
#define COLMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum ColmpStatus {
  COLMP_STATUS_OK = 0,
  COLMP_STATUS_NULL_POINTER = 1,
  COLMP_STATUS_INVALID_FEATURES = 2,
  COLMP_STATUS_INVALID_ARGUMENT = 3,
  COLMP_STATUS_PARSE_ERROR = 4,
  COLMP_STATUS_IO_ERROR = 5,
  COLMP_STATUS_UNKNOWN_MODEL = 6,
  COLMP_STATUS_ARTIFACT_ERROR = 7,
  COLMP_STATUS_NUMERIC_ERROR = 8,
  COLMP_STATUS_WRONG_MODEL_KIND = 9,
  COLMP_STATUS_PANIC = 10,
} ColmpStatus;

typedef enum ColmpFamily {
  COLMP_FAMILY_GM = 0,
  COLMP_FAMILY_MLR = 1,
  COLMP_FAMILY_PRM = 2,
  COLMP_FAMILY_RLR = 3,
} ColmpFamily;

typedef enum ColmpShape {
  COLMP_SHAPE_RECTANGULAR = 0,
  COLMP_SHAPE_CIRCULAR = 1,
} ColmpShape;

// Failure mode in ductility order.
typedef enum ColmpMode {
  COLMP_MODE_FC = 0,
  COLMP_MODE_FSC = 1,
  COLMP_MODE_SC = 2,
} ColmpMode;

// Opaque parsed dataset.
typedef struct ColmpDataset ColmpDataset;

// Opaque loaded model artifact.
typedef struct ColmpModel ColmpModel;

typedef struct ColmpFeatures {
  double span_depth;
  double axial_ratio;
  double rho_l;
  double rho_t;
  double spacing_depth;
  double shear_ratio;
} ColmpFeatures;

// Clamped rotations `a`, `b` (radians) and the unclamped equation values.
typedef struct ColmpParams {
  double a;
  double b;
  double raw_a;
  double raw_b;
} ColmpParams;

// Scores and sigmoid probabilities in FC, FSC, SC order.
typedef struct ColmpClassScores {
  double scores[3];
  double probabilities[3];
  enum ColmpMode mode;
} ColmpClassScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *colmp_version(void);

// Message for the last failed call on this thread, or null if none.
//
// The pointer stays valid until the next failing call on the same thread.
const char *colmp_last_error_message(void);

// Closed-form estimate of `a` and `b`.
//
// # Safety
//
// `features` must point to a valid `ColmpFeatures` and `out` to writable
// memory for one `ColmpParams`.
enum ColmpStatus colmp_estimate(enum ColmpFamily family,
                                enum ColmpShape shape,
                                const struct ColmpFeatures *features,
                                struct ColmpParams *out);

// Failure mode from the fixed three-variable classifier.
//
// # Safety
//
// `features` must point to a valid `ColmpFeatures` and `out` to writable
// memory for one `ColmpClassScores`.
enum ColmpStatus colmp_classify_fixed(enum ColmpShape shape,
                                      const struct ColmpFeatures *features,
                                      struct ColmpClassScores *out);

// Loads a model artifact from a JSON file.
//
// # Safety
//
// `path` must be a NUL-terminated string and `out` a valid pointer. On
// success `*out` owns a handle to release with [`colmp_model_free`].
enum ColmpStatus colmp_model_load(const char *path, struct ColmpModel **out);

// Loads a model artifact from `len` bytes of JSON.
//
// # Safety
//
// `json` must be readable for `len` bytes and `out` a valid pointer.
enum ColmpStatus colmp_model_load_json(const uint8_t *json, size_t len, struct ColmpModel **out);

// Section shape the model was trained for.
//
// # Safety
//
// `model` must be a live handle from `colmp_model_load*` and `out` valid.
enum ColmpStatus colmp_model_shape(const struct ColmpModel *model, enum ColmpShape *out);

// Raw prediction of the model's target (`a` or `b`, radians). Closed-form
// artifacts report their equation value for that target.
//
// # Safety
//
// `model` must be a live handle, `features` valid, `out` writable.
enum ColmpStatus colmp_model_predict(const struct ColmpModel *model,
                                     const struct ColmpFeatures *features,
                                     double *out);

// Failure-mode prediction from a classifier artifact.
//
// # Safety
//
// `model` must be a live handle, `features` valid, `out` writable.
enum ColmpStatus colmp_model_classify(const struct ColmpModel *model,
                                      const struct ColmpFeatures *features,
                                      struct ColmpClassScores *out);

// Releases a model handle. Null is ignored.
//
// # Safety
//
// `model` must be null or a handle not yet freed.
void colmp_model_free(struct ColmpModel *model);

// Parses a dataset from NUL-terminated CSV text.
//
// # Safety
//
// `csv` must be a NUL-terminated string and `out` a valid pointer. On
// success `*out` owns a handle to release with [`colmp_dataset_free`].
enum ColmpStatus colmp_dataset_parse(const char *csv, struct ColmpDataset **out);

// Number of records, or 0 for a null handle.
//
// # Safety
//
// `ds` must be null or a live dataset handle.
size_t colmp_dataset_len(const struct ColmpDataset *ds);

// Separation parameter of `features` relative to the dataset rows of
// `shape`: 0 at the feature means.
//
// # Safety
//
// `ds` must be a live handle, `features` valid, `out` writable.
enum ColmpStatus colmp_dataset_separation(const struct ColmpDataset *ds,
                                          enum ColmpShape shape,
                                          const struct ColmpFeatures *features,
                                          double *out);

// Releases a dataset handle. Null is ignored.
//
// # Safety
//
// `ds` must be null or a handle not yet freed.
void colmp_dataset_free(struct ColmpDataset *ds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLMP_H */
