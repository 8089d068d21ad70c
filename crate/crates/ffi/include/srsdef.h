#ifndef SRSDEF_H
#define SRSDEF_H

#include <stddef.h>
#include <stdint.h>

#define SRSDEF_OK 0

#define SRSDEF_FAIL 1

#define SRSDEF_ERR_NULL -1

#define SRSDEF_ERR_UTF8 -2

#define SRSDEF_ERR_SCHEMA -3

#define SRSDEF_ERR_IO -4

#define SRSDEF_ERR_PRECONDITION -5

#define SRSDEF_ERR_BACKEND -6

#define SRSDEF_ERR_INVALID -7

#define SRSDEF_ERR_PANIC -8

#define SRSDEF_TO_ANALYTIC 0

#define SRSDEF_TO_ALGEBRAIC 1

// Opaque handle to a parsed deformation spec.
typedef struct SrsdefSpec SrsdefSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *srsdef_version(void);

// Copy of this thread's last error message, or NULL. Free with
// `srsdef_string_free`.
char *srsdef_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void srsdef_string_free(char *s);

// Parses a spec from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid pointer.
int srsdef_spec_from_json(const char *json, struct SrsdefSpec **out);

// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
int srsdef_spec_load(const char *path, struct SrsdefSpec **out);

// # Safety
// `spec` must be NULL or a handle from this library that has not been freed.
void srsdef_spec_free(struct SrsdefSpec *spec);

// Serializes a spec back to JSON.
//
// # Safety
// `spec` must be a live handle; `out` a valid pointer.
int srsdef_spec_to_json(const struct SrsdefSpec *spec, char **out);

// Number of odd parameters.
//
// # Safety
// `spec` must be a live handle; `out` a valid pointer.
int srsdef_spec_n(const struct SrsdefSpec *spec, size_t *out);

// Runs the atlas or analytic checks. Returns `SRSDEF_OK` on pass and
// `SRSDEF_FAIL` otherwise; `report` (nullable) receives the JSON report.
// `tol <= 0` selects the default tolerance.
//
// # Safety
// `spec` must be a live handle; `report` NULL or a valid pointer.
int srsdef_verify(const struct SrsdefSpec *spec, double tol, char **report);

// Converts a torus spec to the other description. `grid`/`cutoff` of 0
// select the defaults (256, 64).
//
// # Safety
// `spec` must be a live handle; `out` a valid pointer.
int srsdef_convert(const struct SrsdefSpec *spec,
                   int direction,
                   size_t grid,
                   size_t cutoff,
                   struct SrsdefSpec **out);

// Searches an equivalence (algebraic) or gauge (analytic). `found` is set to
// 1 or 0.
//
// # Safety
// Both handles must be live; `found` a valid pointer.
int srsdef_equivalent(const struct SrsdefSpec *a,
                      const struct SrsdefSpec *b,
                      double tol,
                      int *found);

// First-order class of parameter `index` (1-based): the extension-class
// coordinate of an algebraic torus atlas, or the harmonic part of χ for an
// analytic spec.
//
// # Safety
// `spec` must be a live handle; `re`, `im` valid pointers.
int srsdef_class(const struct SrsdefSpec *spec, size_t index, double *re, double *im);

// Pairing against the default spectral kernel (R = 1, zero mode 0) on an
// `grid`×`grid` product grid. Algebraic torus specs are converted first.
//
// # Safety
// `spec` must be a live handle; output pointers valid (`compat` may be NULL).
int srsdef_pairing(const struct SrsdefSpec *spec,
                   size_t grid,
                   double *re,
                   double *im,
                   double *compat);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRSDEF_H */
