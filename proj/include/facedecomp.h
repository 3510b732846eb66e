/* C API for the facial intrinsic-decomposition pipeline.
 *
 * All functions return fd_status; on failure fd_last_error() describes the
 * problem for the calling thread. Strings returned through char** are
 * heap-allocated and must be released with fd_string_free().
 */
#ifndef FACEDECOMP_H
#define FACEDECOMP_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef FD_API
#if defined(_WIN32)
#define FD_API
#else
#define FD_API __attribute__((visibility("default")))
#endif
#endif

typedef enum fd_status {
    FD_OK = 0,
    FD_ERR_USAGE = 2,  /* invalid arguments */
    FD_ERR_IO = 3,     /* file system / decode failures */
    FD_ERR_CONFIG = 4, /* config or checkpoint/architecture mismatch */
    FD_ERR_NUMERIC = 5 /* numerical failure (NaN, divergence, failed check) */
} fd_status;

FD_API const char* fd_version(void);
/* Message of the most recent failure on this thread; empty if none. */
FD_API const char* fd_last_error(void);
FD_API void fd_string_free(char* s);

/* ---- dataset generation ------------------------------------------------ */

/* Writes n procedural samples plus a train/val/test split and a manifest. */
FD_API fd_status fd_gen_data(const char* out_dir, int n, int resolution,
                      unsigned long long seed);

/* ---- training ---------------------------------------------------------- */

/* stage is 12 or 3; init_ckpt is required for stage 3 and ignored for
 * stage 12. log_path receives the structured per-step records (pass NULL
 * to discard). Writes the best checkpoint to out_ckpt, a resumable state
 * file to out_ckpt+".state", and a manifest. */
FD_API fd_status fd_train(int stage, const char* data_dir, const char* config_path,
                   const char* init_ckpt, const char* out_ckpt,
                   const char* log_path);

/* ---- inference sessions ------------------------------------------------ */

typedef struct fd_session fd_session;

FD_API fd_status fd_session_open(const char* checkpoint_path, fd_session** out);
FD_API void fd_session_close(fd_session* s);
/* Side length of the square RGB input the session consumes. */
FD_API int fd_session_resolution(const fd_session* s);
/* 1 when the checkpoint includes the stage-3 pass translator. */
FD_API int fd_session_has_translator(const fd_session* s);

/* Decomposes input_path (8-bit PNG or NTF1 tensor, [0,1] RGB) and writes
 * the six passes as NTF1 + PNG, a contact sheet, and a manifest. */
FD_API fd_status fd_decompose(fd_session* s, const char* input_path, const char* out_dir);

/* Per-pass metric table over the dataset's test split, written to
 * *report_out as aligned text followed by machine-readable records. */
FD_API fd_status fd_eval(fd_session* s, const char* data_dir, char** report_out);

/* Perturb-and-render stability over the test split. results[0..2] receive
 * rmse, ssim, feature distance. */
FD_API fd_status fd_selfcheck(fd_session* s, const char* data_dir, int max_shift_px,
                       double photometric_frac, unsigned long long seed,
                       double results[3]);

/* ---- architecture inspection / verification ---------------------------- */

/* Layer/shape trace of the configured model (the --dry-run output). */
FD_API fd_status fd_trace(const char* config_path, char** trace_out);

/* Receptive-field side length of the configured stage-1 encoder. */
FD_API fd_status fd_receptive_field(const char* config_path, int* rf_out);

/* Finite-difference gradient verification of the configured toy composite.
 * Writes the per-parameter report to *report_out and fails with
 * FD_ERR_NUMERIC if any relative error exceeds 1e-2. */
FD_API fd_status fd_gradcheck(const char* config_path, char** report_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FACEDECOMP_H */
