// extern "C" layer: maps the C++ core onto opaque handles and status codes.

#include "sbmrange.h"

#include <cstring>
#include <new>
#include <string>

#include "sbmr/config.hpp"
#include "sbmr/deviations.hpp"
#include "sbmr/mechanism.hpp"
#include "sbmr/pde.hpp"
#include "sbmr/study.hpp"

struct sbmr_mechanism {
    sbmr::Mechanism mech;
};

struct sbmr_config {
    sbmr::ExperimentConfig config;
};

namespace {

thread_local std::string g_last_error;

sbmr_status to_status(const sbmr::Error& error) {
    switch (error.code()) {
        case sbmr::ErrorCode::ok:
            return SBMR_OK;
        case sbmr::ErrorCode::invalid_argument:
            return SBMR_EINVAL;
        case sbmr::ErrorCode::config:
            return SBMR_ECONFIG;
        case sbmr::ErrorCode::blow_up:
            return SBMR_EBLOWUP;
        case sbmr::ErrorCode::resolution:
            return SBMR_ERESOLUTION;
        case sbmr::ErrorCode::explosion:
            return SBMR_EEXPLOSION;
        case sbmr::ErrorCode::io:
            return SBMR_EIO;
        case sbmr::ErrorCode::internal:
            return SBMR_EINTERNAL;
    }
    return SBMR_EINTERNAL;
}

template <typename Fn>
sbmr_status guarded(Fn&& fn) {
    try {
        fn();
        return SBMR_OK;
    } catch (const sbmr::Error& error) {
        g_last_error = error.what();
        return to_status(error);
    } catch (const std::exception& error) {
        g_last_error = error.what();
        return SBMR_EINTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return SBMR_EINTERNAL;
    }
}

sbmr_status invalid(const char* what) {
    g_last_error = what;
    return SBMR_EINVAL;
}

}  // namespace

extern "C" {

const char* sbmr_version(void) { return sbmr::kVersion; }

const char* sbmr_last_error(void) { return g_last_error.c_str(); }

sbmr_status sbmr_mechanism_create(double beta, double alpha, double eta,
                                  double theta, sbmr_mechanism** out) {
    if (!out) return invalid("out must not be null");
    *out = nullptr;
    return guarded([&] {
        sbmr::Mechanism mech{beta, alpha, eta, theta};
        mech.validate();
        *out = new sbmr_mechanism{mech};
    });
}

void sbmr_mechanism_destroy(sbmr_mechanism* mech) { delete mech; }

sbmr_status sbmr_psi(const sbmr_mechanism* mech, double u, double* out) {
    if (!mech || !out) return invalid("null argument");
    return guarded([&] { *out = sbmr::psi(mech->mech, u); });
}

sbmr_status sbmr_k(const sbmr_mechanism* mech, double v, double* out) {
    if (!mech || !out) return invalid("null argument");
    return guarded([&] { *out = sbmr::k_rate(mech->mech, v); });
}

sbmr_status sbmr_lambda_star(const sbmr_mechanism* mech, double* out) {
    if (!mech || !out) return invalid("null argument");
    return guarded([&] { *out = sbmr::lambda_star(mech->mech); });
}

sbmr_status sbmr_survival_probability(const sbmr_mechanism* mech,
                                      double* out) {
    if (!mech || !out) return invalid("null argument");
    return guarded([&] { *out = sbmr::survival_probability(mech->mech); });
}

sbmr_status sbmr_rate_upper(double beta, double rho, double* out) {
    if (!out) return invalid("out must not be null");
    return guarded([&] { *out = sbmr::rate_upper(beta, rho); });
}

sbmr_status sbmr_rate_lower(double beta, double rho, double* out) {
    if (!out) return invalid("out must not be null");
    return guarded([&] { *out = sbmr::rate_lower(beta, rho); });
}

sbmr_status sbmr_gaussian_tail(int d, double z, double* out) {
    if (!out) return invalid("out must not be null");
    return guarded([&] { *out = sbmr::gaussian_tail(d, z); });
}

sbmr_status sbmr_range_log_prob(const sbmr_mechanism* mech, int d, double t,
                                double M, double tol, double* out) {
    if (!mech || !out) return invalid("null argument");
    return guarded([&] { *out = sbmr::range_log_prob(mech->mech, d, t, M, tol); });
}

sbmr_status sbmr_upper_deviation_prob(const sbmr_mechanism* mech, int d,
                                      double t, double rho, double tol,
                                      double* out) {
    if (!mech || !out) return invalid("null argument");
    return guarded(
        [&] { *out = sbmr::upper_deviation_prob(mech->mech, d, t, rho, tol); });
}

sbmr_status sbmr_conditional_lower_deviation_prob(const sbmr_mechanism* mech,
                                                  int d, double t, double rho,
                                                  double tol, double* out) {
    if (!mech || !out) return invalid("null argument");
    return guarded([&] {
        *out = sbmr::conditional_lower_deviation_prob(mech->mech, d, t, rho, tol);
    });
}

sbmr_status sbmr_config_load(const char* path, sbmr_config** out) {
    if (!path || !out) return invalid("null argument");
    *out = nullptr;
    return guarded([&] {
        *out = new sbmr_config{sbmr::ExperimentConfig::load(path)};
    });
}

sbmr_status sbmr_config_create(sbmr_config** out) {
    if (!out) return invalid("out must not be null");
    *out = new (std::nothrow) sbmr_config{};
    return *out ? SBMR_OK : SBMR_EINTERNAL;
}

sbmr_status sbmr_config_set(sbmr_config* config, const char* key,
                            const char* value) {
    if (!config || !key || !value) return invalid("null argument");
    return guarded([&] { config->config.set(key, value); });
}

void sbmr_config_destroy(sbmr_config* config) { delete config; }

sbmr_status sbmr_run_study(const sbmr_config* config) {
    if (!config) return invalid("config must not be null");
    return guarded([&] { sbmr::run_study(config->config); });
}

const char* sbmr_study_catalog(void) {
    static const std::string catalog = sbmr::study_catalog();
    return catalog.c_str();
}

sbmr_status sbmr_seed_report(const sbmr_config* config, char** out) {
    if (!config || !out) return invalid("null argument");
    *out = nullptr;
    return guarded([&] {
        const std::string text = sbmr::seed_report(config->config);
        char* buffer = new char[text.size() + 1];
        std::memcpy(buffer, text.c_str(), text.size() + 1);
        *out = buffer;
    });
}

void sbmr_string_free(char* text) { delete[] text; }

}  // extern "C"
