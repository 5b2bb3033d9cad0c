#ifndef DARA_H
#define DARA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  DARA_STATUS_OK = 0,
  DARA_STATUS_NULL_POINTER = 1,
  DARA_STATUS_INVALID_UTF8 = 2,
  DARA_STATUS_CONFIG = 3,
  DARA_STATUS_IO = 4,
  DARA_STATUS_FORMAT = 5,
  DARA_STATUS_SHAPE = 6,
  DARA_STATUS_NUMERIC = 7,
  DARA_STATUS_DATA = 8,
  DARA_STATUS_TRAINING = 9,
  DARA_STATUS_PANIC = 10,
} DaraStatus;

/**
 * Loaded or generated feature bank.
 */
typedef struct DaraBank DaraBank;

/**
 * Pretrained or finetuned engine state.
 */
typedef struct DaraModel DaraModel;

/**
 * Header fields of a feature bank.
 */
typedef struct {
  uint32_t num_items;
  uint32_t width;
  uint32_t height;
  uint32_t channels;
  uint32_t class_count;
} DaraBankHeader;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; valid until the next failing call on this thread.
 */
const char *dara_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dara_version(void);

/**
 * Loads a `DARAFB01` bank file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
DaraStatus dara_bank_load(const char *path, DaraBank **out);

/**
 * Writes a bank to `path`.
 *
 * # Safety
 * `bank` must come from this library; `path` must be NUL-terminated.
 */
DaraStatus dara_bank_save(const DaraBank *bank, const char *path);

/**
 * Copies the bank header into `out`.
 *
 * # Safety
 * `bank` must come from this library; `out` must be writable.
 */
DaraStatus dara_bank_header(const DaraBank *bank, DaraBankHeader *out);

/**
 * Releases a bank; null is ignored.
 *
 * # Safety
 * `bank` must come from this library and not be used afterwards.
 */
void dara_bank_free(DaraBank *bank);

/**
 * Generates synthetic source and target banks from config text.
 * `query_offset` (may be null) receives the covariate offset to apply to
 * target queries.
 *
 * # Safety
 * `config_text` must be NUL-terminated; `source` and `target` writable.
 */
DaraStatus dara_synth(const char *config_text,
                      DaraBank **source,
                      DaraBank **target,
                      double *query_offset);

/**
 * Loads a `DARACK01` checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
DaraStatus dara_model_load(const char *path, DaraModel **out);

/**
 * Pretrains a model on `source` with the given config text.
 *
 * # Safety
 * `source` must come from this library; `config_text` NUL-terminated;
 * `out` writable.
 */
DaraStatus dara_model_pretrain(const DaraBank *source, const char *config_text, DaraModel **out);

/**
 * Writes a model checkpoint to `path`.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
DaraStatus dara_model_save(const DaraModel *model, const char *path);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void dara_model_free(DaraModel *model);

/**
 * Runs the episodic evaluation and returns the report JSON in
 * `report_json` (release with [`dara_string_free`]).
 *
 * # Safety
 * Handles must come from this library; `config_text` NUL-terminated;
 * `report_json` writable.
 */
DaraStatus dara_evaluate(const DaraModel *model,
                         const DaraBank *target,
                         const char *config_text,
                         uint32_t workers,
                         char **report_json);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void dara_string_free(char *s);

/**
 * Ridge reconstruction of a `query_rows x cols` query from a
 * `pool_rows x cols` pool, both row-major. Writes `query_rows x cols`
 * values to `out`.
 *
 * # Safety
 * Buffers must hold the stated number of `double`s.
 */
DaraStatus dara_ridge_reconstruct(const double *pool,
                                  uint32_t pool_rows,
                                  const double *query,
                                  uint32_t query_rows,
                                  uint32_t cols,
                                  double lambda,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DARA_H */
