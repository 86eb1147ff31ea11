#include "sbmr/study.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sbmr/csv.hpp"
#include "sbmr/deviations.hpp"
#include "sbmr/feynman_kac.hpp"
#include "sbmr/parallel.hpp"
#include "sbmr/particles.hpp"
#include "sbmr/pde.hpp"
#include "sbmr/rng.hpp"

namespace sbmr {

namespace {

std::string fd(double x) { return format_double(x); }
std::string fi(long long x) { return format_int(x); }

class Artifacts {
public:
    explicit Artifacts(const ExperimentConfig& config)
        : config_(config), dir_(config.resolved_out_dir()) {
        std::filesystem::create_directories(dir_);
        write_manifest("started");
    }

    void stage(const std::string& name) { stage_ = name; }
    const std::string& dir() const { return dir_; }

    void write_csv(const std::string& name, const CsvWriter& csv) const {
        csv.write_file(dir_ + "/" + name);
    }

    void fail() const { write_manifest("failed"); }

    void finish(const CsvWriter& summary) const {
        write_manifest("ok");
        summary.write_file(dir_ + "/summary.csv");  // summary is always last
    }

private:
    void write_manifest(const std::string& status) const {
        std::ofstream out(dir_ + "/manifest.txt",
                          std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorCode::io,
                "cannot write manifest in " + dir_);
        out << "sbmrange " << kVersion << "\n";
        out << "status = " << status << "\n";
        if (status == "failed") out << "failed_stage = " << stage_ << "\n";
        out << "\n" << config_.echo();
        out.flush();
        require(out.good(), ErrorCode::io, "manifest write failed");
    }

    const ExperimentConfig& config_;
    std::string dir_;
    std::string stage_ = "init";
};

RangeOptions solver_options(const ExperimentConfig& config,
                            std::vector<RangeSolveRow>* log = nullptr) {
    RangeOptions opt;
    opt.tol = config.tol;
    opt.h = config.h;
    opt.dt = config.dt;
    opt.log = log;
    return opt;
}

CsvWriter pde_rows_csv(const std::vector<std::vector<RangeSolveRow>>& rows) {
    CsvWriter csv({"t", "M", "lambda_or_V", "v_origin", "prob", "h", "dt",
                   "converged"});
    for (const auto& group : rows) {
        for (const auto& r : group) {
            csv.append_row({fd(r.t), fd(r.M), fd(r.lambda_or_v), fd(r.v_origin),
                            fd(r.prob), fd(r.h), fd(r.dt),
                            r.converged ? "1" : "0"});
        }
    }
    return csv;
}

CsvWriter deviations_csv() {
    return CsvWriter({"rho", "method", "t", "log_prob", "stderr", "fitted_rate",
                      "theory_rate", "relative_error"});
}

void append_deviation_rows(CsvWriter& csv, const DeviationEstimate& est,
                           double theory) {
    const double rel_error =
        theory != 0.0 ? std::fabs(est.fitted_rate - theory) / std::fabs(theory)
                      : std::fabs(est.fitted_rate);
    for (const auto& e : est.entries) {
        csv.append_row({fd(est.rho), est.method, fd(e.t), fd(e.log_prob),
                        fd(e.stderr_log), fd(est.fitted_rate), fd(theory),
                        fd(rel_error)});
    }
}

void run_rate_upper(const ExperimentConfig& config, Artifacts& artifacts,
                    CsvWriter& summary) {
    artifacts.stage("pde_sweep");
    const std::size_t nt = config.t_grid.size();
    std::vector<std::vector<RangeSolveRow>> rows(nt);
    std::vector<double> probs(nt);
    parallel_for(nt, config.threads, [&](std::size_t i) {
        auto opt = solver_options(config, &rows[i]);
        probs[i] = upper_deviation_prob(config.mech, config.d,
                                        config.t_grid[i], config.rho, opt);
    });
    artifacts.write_csv("pde_solves.csv", pde_rows_csv(rows));

    artifacts.stage("fit");
    DeviationEstimate estimate;
    estimate.rho = config.rho;
    estimate.method = "pde";
    for (std::size_t i = 0; i < nt; ++i) {
        require(probs[i] > 0.0, ErrorCode::resolution,
                "upper deviation probability underflowed at t = " +
                    fd(config.t_grid[i]));
        estimate.entries.push_back({config.t_grid[i], std::log(probs[i]), 0.0});
    }
    estimate = fit_rate(estimate);
    const double theory = rate_upper(config.mech.beta, config.rho);

    auto dev = deviations_csv();
    append_deviation_rows(dev, estimate, theory);
    artifacts.write_csv("deviations.csv", dev);

    const double rel = std::fabs(estimate.fitted_rate - theory) /
                       std::fabs(theory);
    summary.append_row({"fitted_rate", fd(estimate.fitted_rate),
                        fd(estimate.fitted_rate_stderr), fd(theory), fd(rel)});
}

void run_rate_lower(const ExperimentConfig& config, Artifacts& artifacts,
                    CsvWriter& summary) {
    artifacts.stage("pde_sweep");
    const std::size_t nt = config.t_grid.size();
    std::vector<std::vector<RangeSolveRow>> rows(nt);
    std::vector<LowerDeviationResult> results(nt);
    parallel_for(nt, config.threads, [&](std::size_t i) {
        auto opt = solver_options(config, &rows[i]);
        results[i] = lower_deviation(config.mech, config.d, config.t_grid[i],
                                     config.rho, opt);
    });
    artifacts.write_csv("pde_solves.csv", pde_rows_csv(rows));

    artifacts.stage("fit");
    DeviationEstimate conditional, unconditional;
    conditional.rho = unconditional.rho = config.rho;
    conditional.method = "pde";
    unconditional.method = "pde_unconditional";
    for (std::size_t i = 0; i < nt; ++i) {
        require(results[i].conditional > 0.0 && results[i].unconditional > 0.0,
                ErrorCode::resolution, "lower deviation probability underflowed");
        conditional.entries.push_back(
            {config.t_grid[i], std::log(results[i].conditional), 0.0});
        unconditional.entries.push_back(
            {config.t_grid[i], std::log(results[i].unconditional), 0.0});
    }
    conditional = fit_rate(conditional);
    unconditional = fit_rate(unconditional);
    const double theory = rate_lower(config.mech.beta, config.rho);

    auto dev = deviations_csv();
    append_deviation_rows(dev, conditional, theory);
    // The unconditional probability tends to the extinction mass, so its
    // asymptotic rate is 0; reported for the record.
    append_deviation_rows(dev, unconditional, 0.0);
    artifacts.write_csv("deviations.csv", dev);

    const double rel =
        std::fabs(conditional.fitted_rate - theory) / std::fabs(theory);
    summary.append_row({"fitted_rate_conditional", fd(conditional.fitted_rate),
                        fd(conditional.fitted_rate_stderr), fd(theory),
                        fd(rel)});
    summary.append_row({"fitted_rate_unconditional",
                        fd(unconditional.fitted_rate),
                        fd(unconditional.fitted_rate_stderr), fd(0.0),
                        fd(std::fabs(unconditional.fitted_rate))});
}

SimParams sim_params(const ExperimentConfig& config, double t) {
    SimParams params;
    params.mech = config.mech;
    params.d = config.d;
    params.scale = config.scale;
    params.t_end = t;
    params.bridge_dt = config.bridge_dt;
    params.population_cap = config.population_cap;
    return params;
}

std::vector<double> splitting_levels(const ExperimentConfig& config,
                                     double target) {
    if (!config.levels.empty()) {
        require(std::fabs(config.levels.back() - target) <= 1e-9 * target,
                ErrorCode::config, "levels must end at rho * t = " + fd(target));
        return config.levels;
    }
    std::vector<double> levels;
    for (int i = 1; i <= config.auto_levels; ++i) {
        levels.push_back(target * static_cast<double>(i) /
                         static_cast<double>(config.auto_levels));
    }
    return levels;
}

void run_mc_vs_pde(const ExperimentConfig& config, Artifacts& artifacts,
                   CsvWriter& summary) {
    const double t = config.t_grid.front();

    artifacts.stage("pde_reference");
    std::vector<std::vector<RangeSolveRow>> rows(2);
    auto opt = solver_options(config, &rows[0]);
    const double v_direct =
        range_log_prob(config.mech, config.d, t, config.rho * t, opt);
    const double p_pde = -std::expm1(-v_direct);

    artifacts.stage("mc_direct");
    const auto direct = estimate_range_prob_direct(
        sim_params(config, t), config.rho, config.replicates, config.seed,
        config.threads);
    const double z_direct =
        direct.stderr_value > 0.0
            ? (direct.value - p_pde) / direct.stderr_value
            : 0.0;

    artifacts.stage("records");
    const std::size_t n_rec = std::min(config.record_replicates,
                                       config.replicates);
    SimParams rec_params = sim_params(config, t);
    rec_params.checkpoints = {0.25 * t, 0.5 * t, 0.75 * t, t};
    std::vector<RangeSimulationRecord> records(n_rec);
    parallel_for(n_rec, config.threads, [&](std::size_t i) {
        records[i] = simulate_population(rec_params, config.seed, i);
    });
    CsvWriter replicate_csv({"replicate", "survived", "final_mass", "R_t1",
                             "R_t2", "R_t3", "R_t4", "H_t1", "H_t2", "H_t3",
                             "H_t4"});
    std::size_t r_ge_h = 0;
    for (std::size_t i = 0; i < n_rec; ++i) {
        const auto& r = records[i];
        bool ok = true;
        for (std::size_t c = 0; c < r.range_radius.size(); ++c) {
            ok = ok && r.range_radius[c] >= r.rightmost[c] - 1e-12;
        }
        r_ge_h += ok;
        replicate_csv.append_row(
            {fi(static_cast<long long>(i)), r.survived ? "1" : "0",
             fd(r.final_mass), fd(r.range_radius[0]), fd(r.range_radius[1]),
             fd(r.range_radius[2]), fd(r.range_radius[3]), fd(r.rightmost[0]),
             fd(r.rightmost[1]), fd(r.rightmost[2]), fd(r.rightmost[3])});
    }
    artifacts.write_csv("replicates.csv", replicate_csv);

    artifacts.stage("mc_splitting");
    const double split_t = config.split_t > 0.0 ? config.split_t
                                                : config.t_grid.back();
    const double split_rho = config.split_rho > 0.0 ? config.split_rho
                                                    : config.rho;
    const double target = split_rho * split_t;
    const auto levels = splitting_levels(config, target);
    const auto splitting = estimate_range_prob_splitting(
        sim_params(config, split_t), levels, config.per_level, config.seed,
        config.threads);

    auto opt2 = solver_options(config, &rows[1]);
    const double v_split =
        range_log_prob(config.mech, config.d, split_t, target, opt2);
    const double p_split_pde = -std::expm1(-v_split);
    const double log_gap = splitting.log_prob - std::log(p_split_pde);
    artifacts.write_csv("pde_solves.csv", pde_rows_csv(rows));

    CsvWriter aggregate({"estimator", "value", "stderr", "n"});
    aggregate.append_row({"pde_prob", fd(p_pde), fd(0.0), fi(1)});
    aggregate.append_row({"mc_direct", fd(direct.value),
                          fd(direct.stderr_value),
                          fi(static_cast<long long>(direct.replicates))});
    aggregate.append_row(
        {"mc_splitting_log", fd(splitting.log_prob), fd(splitting.rel_stderr),
         fi(static_cast<long long>(config.per_level))});
    aggregate.append_row({"pde_prob_split_case", fd(p_split_pde), fd(0.0),
                          fi(1)});
    artifacts.write_csv("aggregate.csv", aggregate);

    summary.append_row({"direct_z_score", fd(z_direct), fd(1.0), fd(0.0),
                        fd(std::fabs(z_direct))});
    summary.append_row({"direct_prob", fd(direct.value),
                        fd(direct.stderr_value), fd(p_pde),
                        fd(p_pde > 0.0
                               ? std::fabs(direct.value - p_pde) / p_pde
                               : 0.0)});
    summary.append_row({"splitting_log_gap", fd(log_gap),
                        fd(splitting.rel_stderr), fd(0.0), fd(std::fabs(log_gap))});
    summary.append_row(
        {"records_r_ge_h_fraction",
         fd(static_cast<double>(r_ge_h) / static_cast<double>(n_rec)), fd(0.0),
         fd(1.0),
         fd(1.0 - static_cast<double>(r_ge_h) / static_cast<double>(n_rec))});
}

void run_fk_certify(const ExperimentConfig& config, Artifacts& artifacts,
                    CsvWriter& summary) {
    const double t = config.t_grid.front();
    const Mechanism& mech = config.mech;

    CsvWriter report(
        {"check_name", "configuration", "value", "stderr", "pass"});
    std::size_t failures = 0;
    auto note = [&](const std::string& name, const std::string& configuration,
                    double value, double stderr_value, bool pass) {
        report.append_row({name, configuration, fd(value), fd(stderr_value),
                           pass ? "1" : "0"});
        failures += pass ? 0 : 1;
    };

    // Smoke configuration: Gaussian bump initial datum, smaller Gaussian
    // forcing, mechanism from the config.
    artifacts.stage("smoke_solve");
    PdeProblem smoke;
    smoke.mech = mech;
    smoke.d = config.d;
    smoke.r_max = 8.0;
    smoke.h = config.h > 0.0 ? config.h : 0.02;
    {
        const double cells = smoke.r_max / smoke.h;
        require(std::fabs(cells - std::llround(cells)) < 1e-9,
                ErrorCode::config, "fk_certify: h must divide 8");
    }
    const double dt_target = config.dt > 0.0 ? config.dt : smoke.h * smoke.h;
    smoke.dt = t / std::ceil(t / dt_target - 1e-12);
    smoke.t_end = t;
    auto gauss = [](double amp, double width) {
        return [amp, width](double r) {
            return amp * std::exp(-r * r / (2.0 * width * width));
        };
    };
    const RadialProfile g_prof = gauss(1.0, 1.0);
    const RadialProfile phi_prof = gauss(0.5, 1.5);
    smoke.g = PdeProblem::sample_profile(smoke.r_max, smoke.h, g_prof);
    smoke.phi = PdeProblem::sample_profile(smoke.r_max, smoke.h, phi_prof);
    SolveStats stats;
    FieldStack stack;
    const std::size_t steps =
        static_cast<std::size_t>(std::llround(smoke.t_end / smoke.dt));
    solve_radial(smoke, &stats, &stack, std::max<std::size_t>(1, steps / 400));
    const FieldInterpolant field(std::move(stack));

    artifacts.stage("smoke_checks");
    const struct {
        double time, radius;
    } lattice[5] = {{t, 0.0}, {t, 0.5}, {t, 1.0}, {0.5 * t, 0.5}, {0.5 * t, 1.5}};
    for (const auto& point : lattice) {
        const auto fk =
            fk_estimate(field, mech, g_prof, phi_prof, point.time, point.radius,
                        config.fk_paths, config.fk_steps, config.seed,
                        config.threads);
        const double solver_value = field.value(point.time, point.radius);
        const double allowance = 0.005 * std::max(1.0, std::fabs(solver_value));
        const bool pass = std::fabs(fk.mean - solver_value) <=
                          3.0 * fk.stderr_mean + allowance;
        note("fk_vs_solver",
             "smoke t=" + fd(point.time) + " r=" + fd(point.radius),
             fk.mean - solver_value, fk.stderr_mean, pass);
    }
    for (double radius : {0.0, 1.0}) {
        const auto mild = mild_form_residual(
            field, mech, g_prof, phi_prof, t, radius, config.fk_paths,
            config.fk_steps, config.seed + 1, config.threads);
        const double allowance = 0.005;
        const bool pass =
            std::fabs(mild.residual) <= 3.0 * mild.stderr_residual + allowance;
        note("mild_form_residual", "smoke t=" + fd(t) + " r=" + fd(radius),
             mild.residual, mild.stderr_residual, pass);
    }

    artifacts.stage("apriori");
    {
        FieldStack smoke_stack;
        solve_radial(smoke, nullptr, &smoke_stack,
                     std::max<std::size_t>(1, steps / 100));
        const auto apriori = apriori_bound_check(smoke_stack, 1.0, 0.5, mech);
        note("apriori_bound", "smoke", apriori.margin, 0.0, apriori.ok);
    }

    // Range problem: forced-domain surrogate of the blow-up boundary; the
    // Feynman-Kac route must reproduce the solver origin value at the same
    // surrogate magnitude.
    artifacts.stage("range_checks");
    {
        const double M = 1.5 * t;
        const double lambda = 1e3;
        PdeProblem ranged;
        ranged.mech = mech;
        ranged.d = config.d;
        ranged.h = M / 300.0;
        const double pad_nodes = std::ceil(2.0 / ranged.h);
        ranged.r_max = M + pad_nodes * ranged.h;
        ranged.dt = t / std::ceil(t / (ranged.h * ranged.h) - 1e-12);
        ranged.t_end = t;
        const RadialProfile forcing = [M, lambda](double r) {
            return r > M ? lambda * (r - M) * (r - M) : 0.0;
        };
        ranged.g.assign(
            static_cast<std::size_t>(std::llround(ranged.r_max / ranged.h)) + 1,
            0.0);
        ranged.phi =
            PdeProblem::sample_profile(ranged.r_max, ranged.h, forcing);
        ranged.boundary_value = ranged.phi.back() > 0.0
                                    ? std::sqrt(ranged.phi.back() / std::max(
                                                    mech.alpha, 1e-12))
                                    : 0.0;
        FieldStack range_stack;
        const std::size_t rsteps =
            static_cast<std::size_t>(std::llround(ranged.t_end / ranged.dt));
        solve_radial(ranged, nullptr, &range_stack,
                     std::max<std::size_t>(1, rsteps / 400));
        const FieldInterpolant range_field(std::move(range_stack));
        const auto fk = fk_estimate(range_field, mech, [](double) { return 0.0; },
                                    forcing, t, 0.0, config.fk_paths,
                                    config.fk_steps, config.seed + 2,
                                    config.threads);
        const double solver_value = range_field.value(t, 0.0);
        const double allowance = 0.02 * std::max(solver_value, 0.01);
        const bool pass = std::fabs(fk.mean - solver_value) <=
                          3.0 * fk.stderr_mean + allowance;
        note("fk_vs_solver_range", "lambda=" + fd(lambda) + " M=" + fd(M),
             fk.mean - solver_value, fk.stderr_mean, pass);

        FieldStack apriori_stack;
        solve_radial(ranged, nullptr, &apriori_stack,
                     std::max<std::size_t>(1, rsteps / 100));
        const auto apriori = apriori_bound_check(
            apriori_stack, ranged.boundary_value, ranged.phi.back(), mech);
        note("apriori_bound", "range surrogate", apriori.margin, 0.0,
             apriori.ok);
    }

    artifacts.write_csv("fk_report.csv", report);
    summary.append_row({"fk_checks_failed", fd(static_cast<double>(failures)),
                        fd(0.0), fd(0.0), fd(static_cast<double>(failures))});
}

void run_bounds_suite(const ExperimentConfig& config, Artifacts& artifacts,
                      CsvWriter& summary) {
    CsvWriter bounds({"check_name", "d", "param", "value", "stderr", "bound",
                      "pass"});
    std::size_t failures = 0;

    artifacts.stage("tail_envelope");
    const std::vector<double> z_grid = {2.0, 4.0, 8.0, 12.0};
    for (int d = 1; d <= 3; ++d) {
        const auto report = gaussian_tail_bound_check(d, z_grid);
        const bool pass = report.limit_ok && std::isfinite(report.c_d);
        failures += pass ? 0 : 1;
        bounds.append_row({"tail_envelope_c_d", fi(d), "zmax=12", fd(report.c_d),
                           fd(0.0),
                           fd(report.normalized_ratios.back()),
                           pass ? "1" : "0"});
    }

    artifacts.stage("max_radius");
    const struct {
        int d;
        double t, a;
    } cases[3] = {{1, 1.0, 2.0}, {2, 1.0, 3.0}, {3, 1.0, 3.5}};
    for (const auto& c : cases) {
        const auto report = max_radius_bound_check(
            c.d, c.t, c.a, config.fk_paths, config.fk_steps, config.seed,
            config.threads);
        const bool pass =
            report.bound_ok && (c.d != 1 || report.reflection_ok);
        failures += pass ? 0 : 1;
        bounds.append_row({"max_radius_bound", fi(c.d),
                           "t=" + fd(c.t) + " a=" + fd(c.a), fd(report.mc_prob),
                           fd(report.mc_stderr), fd(report.bound),
                           pass ? "1" : "0"});
    }

    artifacts.write_csv("bounds.csv", bounds);
    summary.append_row({"bounds_checks_failed",
                        fd(static_cast<double>(failures)), fd(0.0), fd(0.0),
                        fd(static_cast<double>(failures))});
}

}  // namespace

void run_study(const ExperimentConfig& config) {
    config.validate();
    Artifacts artifacts(config);
    CsvWriter summary({"quantity", "value", "stderr", "theory",
                       "relative_error"});
    try {
        if (config.study == "rate_upper") {
            run_rate_upper(config, artifacts, summary);
        } else if (config.study == "rate_lower") {
            run_rate_lower(config, artifacts, summary);
        } else if (config.study == "mc_vs_pde") {
            run_mc_vs_pde(config, artifacts, summary);
        } else if (config.study == "fk_certify") {
            run_fk_certify(config, artifacts, summary);
        } else if (config.study == "bounds_suite") {
            run_bounds_suite(config, artifacts, summary);
        } else {
            throw Error(ErrorCode::config, "unknown study: " + config.study);
        }
    } catch (...) {
        artifacts.fail();
        throw;
    }
    artifacts.finish(summary);
}

std::string study_catalog() {
    return
        "Available studies (config key: study = <name>)\n"
        "\n"
        "rate_upper    Fits the decay rate of log P(R_t >= rho t) over t_grid\n"
        "              via the PDE route and compares it to -(rho^2/2 - beta).\n"
        "              Requires rho > sqrt(2 beta). Keys: beta alpha eta theta\n"
        "              d rho t_grid h dt tol seed out_dir threads.\n"
        "\n"
        "rate_lower    Fits the decay rate of log P(R_t <= rho t | survival)\n"
        "              and compares it to -beta + sqrt(beta/2) rho; also\n"
        "              reports the unconditional probability. Requires\n"
        "              alpha > 0 and rho in (0, sqrt(2 beta)). Keys: as above.\n"
        "\n"
        "mc_vs_pde     Cross-validates the PDE range probability against the\n"
        "              branching-particle estimators: direct Monte Carlo at\n"
        "              (t_grid[0], rho) and multilevel splitting at\n"
        "              (split_t, split_rho). Keys: N replicates\n"
        "              record_replicates levels auto_levels per_level\n"
        "              bridge_dt population_cap split_t split_rho.\n"
        "\n"
        "fk_certify    Certifies solver output through the Feynman-Kac and\n"
        "              mild-form identities on a smoke configuration and a\n"
        "              forced range surrogate; checks the a-priori bound.\n"
        "              Keys: fk_paths fk_steps h dt t_grid (first entry).\n"
        "\n"
        "bounds_suite  Gaussian tail envelope constants C_d and the 2^d\n"
        "              maximum-radius bound, Monte Carlo vs closed forms.\n"
        "              Keys: fk_paths fk_steps seed.\n";
}

std::string seed_report(const ExperimentConfig& config) {
    config.validate();
    std::string out;
    out += "study = " + config.study + "\n";
    out += "seed = " + format_int(static_cast<long long>(config.seed)) + "\n";
    out += "replicates = " +
           format_int(static_cast<long long>(config.replicates)) + "\n";
    const std::size_t shown = std::min<std::size_t>(config.replicates, 16);
    char buf[64];
    std::uint64_t digest = 0xCBF29CE484222325ULL;
    for (std::size_t k = 0; k < config.replicates; ++k) {
        const std::uint64_t key = replicate_stream_key(config.seed, k);
        if (k < shown) {
            std::snprintf(buf, sizeof(buf),
                          "replicate %zu stream = 0x%016llx\n", k,
                          static_cast<unsigned long long>(key));
            out += buf;
        }
        digest ^= key;
        digest *= 0x100000001B3ULL;
    }
    std::snprintf(buf, sizeof(buf), "stream_digest = 0x%016llx\n",
                  static_cast<unsigned long long>(digest));
    out += buf;
    return out;
}

}  // namespace sbmr
