#ifndef UNETGAN_H
#define UNETGAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UgStatus {
  UG_STATUS_OK = 0,
  UG_STATUS_NULL_POINTER = 1,
  UG_STATUS_INVALID_ARGUMENT = 2,
  UG_STATUS_IO = 3,
  UG_STATUS_DATA_FORMAT = 4,
  UG_STATUS_PANIC = 5,
} UgStatus;

/*
 Opaque generator loaded from a checkpoint.
 */
typedef struct UgGenerator UgGenerator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message, NUL-terminated and
 truncated to `cap` bytes, into `buf`. Returns the full message length
 plus one, so a return value above `cap` means truncation. `buf` may be
 null to query the size.

 # Safety
 `buf` must be null or point to `cap` writable bytes.
 */
size_t ug_last_error(char *buf, size_t cap);

/*
 Static name of a status code.
 */
const char *ug_status_name(enum UgStatus status);

/*
 Loads the generator stored in a checkpoint (a generator-only file or a
 full training state). On success `*out` owns a handle that must be
 released with `ug_generator_free`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UgStatus ug_generator_load(const char *path, struct UgGenerator **out);

/*
 # Safety
 `g` must be null or a handle from `ug_generator_load` not yet freed.
 */
void ug_generator_free(struct UgGenerator *g);

/*
 Number of down-sampling levels; inputs are padded internally to a
 multiple of `2^levels`.

 # Safety
 `g` must be a live handle.
 */
size_t ug_generator_levels(const struct UgGenerator *g);

/*
 Enhances `len` samples of 16 kHz audio into `output` (also `len`
 samples). Input and output may not overlap.

 # Safety
 `g` must be a live handle; `input` and `output` must each point to `len`
 floats.
 */
enum UgStatus ug_generator_enhance(const struct UgGenerator *g,
                                   const float *input,
                                   size_t len,
                                   float *output);

/*
 STOI of `processed` against `clean`, both `len` samples at 16 kHz.

 # Safety
 `clean` and `processed` must point to `len` floats; `out` must be valid.
 */
enum UgStatus ug_stoi(const float *clean, const float *processed, size_t len, double *out);

/*
 Scale-invariant SNR in dB, capped at ±100.

 # Safety
 As for `ug_stoi`.
 */
enum UgStatus ug_si_snr(const float *clean, const float *processed, size_t len, double *out);

/*
 Mixes `clean` with `noise[offset .. offset + clean_len]` at `snr_db`.
 Writes `clean_len` samples to `mixture_out` and to `clean_out` (the
 reference after joint peak normalization) and the applied normalization
 factor to `norm_scale_out`. `clean_out` and `norm_scale_out` may be null.

 # Safety
 Pointers must be valid for the stated lengths.
 */
enum UgStatus ug_mix_at_snr(const float *clean,
                            size_t clean_len,
                            const float *noise,
                            size_t noise_len,
                            double snr_db,
                            size_t offset,
                            float *mixture_out,
                            float *clean_out,
                            double *norm_scale_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNETGAN_H */
