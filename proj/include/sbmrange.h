/* sbmrange: range-deviation toolkit for supercritical super-Brownian motion.
 *
 * C interface of the shared library. Handles are opaque; every function
 * returns a status code and writes results through out-parameters. On any
 * failure sbmr_last_error() returns a thread-local description of what went
 * wrong.
 */

#ifndef SBMRANGE_H
#define SBMRANGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SBMR_API __declspec(dllexport)
#else
#define SBMR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sbmr_status {
    SBMR_OK = 0,
    SBMR_EINVAL = 1,     /* bad scalar input */
    SBMR_ECONFIG = 2,    /* invalid configuration */
    SBMR_EBLOWUP = 3,    /* PDE blow-up guard tripped */
    SBMR_ERESOLUTION = 4,/* sweep failed to converge */
    SBMR_EEXPLOSION = 5, /* particle population cap exceeded */
    SBMR_EIO = 6,        /* file read/write failure */
    SBMR_EINTERNAL = 7
} sbmr_status;

typedef struct sbmr_mechanism sbmr_mechanism;
typedef struct sbmr_config sbmr_config;

SBMR_API const char* sbmr_version(void);

/* Thread-local message for the most recent failure on this thread. */
SBMR_API const char* sbmr_last_error(void);

/* --- branching mechanism ------------------------------------------------ */

SBMR_API sbmr_status sbmr_mechanism_create(double beta, double alpha,
                                           double eta, double theta,
                                           sbmr_mechanism** out);
SBMR_API void sbmr_mechanism_destroy(sbmr_mechanism* mech);

SBMR_API sbmr_status sbmr_psi(const sbmr_mechanism* mech, double u,
                              double* out);
SBMR_API sbmr_status sbmr_k(const sbmr_mechanism* mech, double v, double* out);
SBMR_API sbmr_status sbmr_lambda_star(const sbmr_mechanism* mech, double* out);
SBMR_API sbmr_status sbmr_survival_probability(const sbmr_mechanism* mech,
                                               double* out);

/* --- rate functions and tails ------------------------------------------- */

SBMR_API sbmr_status sbmr_rate_upper(double beta, double rho, double* out);
SBMR_API sbmr_status sbmr_rate_lower(double beta, double rho, double* out);
SBMR_API sbmr_status sbmr_gaussian_tail(int d, double z, double* out);

/* --- PDE range probabilities -------------------------------------------- */

/* -log P(R_t <= M) via the blow-up boundary sweep at relative tolerance tol. */
SBMR_API sbmr_status sbmr_range_log_prob(const sbmr_mechanism* mech, int d,
                                         double t, double M, double tol,
                                         double* out);
SBMR_API sbmr_status sbmr_upper_deviation_prob(const sbmr_mechanism* mech,
                                               int d, double t, double rho,
                                               double tol, double* out);
SBMR_API sbmr_status sbmr_conditional_lower_deviation_prob(
    const sbmr_mechanism* mech, int d, double t, double rho, double tol,
    double* out);

/* --- experiment runner --------------------------------------------------- */

SBMR_API sbmr_status sbmr_config_load(const char* path, sbmr_config** out);
SBMR_API sbmr_status sbmr_config_create(sbmr_config** out);
SBMR_API sbmr_status sbmr_config_set(sbmr_config* config, const char* key,
                                     const char* value);
SBMR_API void sbmr_config_destroy(sbmr_config* config);

/* Validates the config, runs the study, writes artifacts to the output
 * directory (manifest first, summary last). */
SBMR_API sbmr_status sbmr_run_study(const sbmr_config* config);

/* Static catalog of study kinds and their parameters. */
SBMR_API const char* sbmr_study_catalog(void);

/* Reproducibility digest: per-replicate stream keys. Caller frees with
 * sbmr_string_free. */
SBMR_API sbmr_status sbmr_seed_report(const sbmr_config* config, char** out);
SBMR_API void sbmr_string_free(char* text);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SBMRANGE_H */
