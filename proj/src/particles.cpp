#include "sbmr/particles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>

#include "sbmr/parallel.hpp"
#include "sbmr/rng.hpp"

namespace sbmr {

namespace {

// P(bridge exceeds its endpoint max by pad*sqrt(tau)) < 1e-12; segments that
// provably cannot touch the active threshold skip the bridge machinery.
constexpr double kBridgePad = 3.72;
constexpr double kInf = std::numeric_limits<double>::infinity();

const std::uint64_t kSimTag = fnv1a64("sbmr.sim");
const std::uint64_t kMassTag = fnv1a64("sbmr.mass");
const std::uint64_t kSplitTag = fnv1a64("sbmr.split");
const std::uint64_t kResampleTag = fnv1a64("sbmr.split.resample");
const std::uint64_t kTrajTag = fnv1a64("sbmr.split.traj");

struct StageState {
    double t = 0.0;
    std::vector<double> pos;
};

class Engine {
public:
    Engine(const SimParams& params, std::uint64_t stream_key)
        : p_(params), rng_(stream_key), d_(params.d) {
        const double n_scale = static_cast<double>(p_.scale);
        birth_rate_ = p_.mech.alpha * n_scale + p_.mech.beta;
        death_rate_ = p_.mech.alpha * n_scale;
        per_particle_rate_ = birth_rate_ + death_rate_;
        p_birth_ = per_particle_rate_ > 0.0 ? birth_rate_ / per_particle_rate_
                                            : 0.0;
        track_h_ = p_.track_rightmost;
    }

    void seed_at_origin() {
        n_ = static_cast<std::size_t>(p_.scale);
        pos_.assign(n_ * d_, 0.0);
        tlast_.assign(n_, 0.0);
        t_ = 0.0;
        reset_maxima();
    }

    void load(const StageState& state) {
        pos_ = state.pos;
        n_ = pos_.size() / d_;
        tlast_.assign(n_, state.t);
        t_ = state.t;
        reset_maxima();
    }

    StageState export_state() const {
        StageState state;
        state.t = t_;
        state.pos.assign(pos_.begin(), pos_.begin() + n_ * d_);
        return state;
    }

    enum class Outcome { horizon, crossed, extinct };

    // Advance to t_stop, stopping early when the running radial max reaches
    // cross_level (bridge-corrected, like the recorded range itself). All
    // particles are realized at the stop time.
    Outcome run_to(double t_stop, double cross_level) {
        cross_level_ = cross_level;
        crossed_ = range_ >= cross_level_;
        if (crossed_) return Outcome::crossed;

        for (;;) {
            if (n_ == 0) return Outcome::extinct;
            const double total_rate =
                static_cast<double>(n_) * per_particle_rate_;
            const double t_next = t_ + rng_.next_exponential() / total_rate;
            if (t_next >= t_stop) {
                advance_all(t_stop);
                t_ = t_stop;
                return crossed_ ? Outcome::crossed : Outcome::horizon;
            }
            t_ = t_next;
            const std::size_t j = rng_.next_index(n_);
            advance_particle(j, t_);
            if (rng_.next_double() < p_birth_) {
                if (n_ + 1 > p_.population_cap) {
                    throw Error(ErrorCode::explosion,
                                "population exceeded cap " +
                                    std::to_string(p_.population_cap) +
                                    " (expected mass grows like e^(beta t))");
                }
                for (int c = 0; c < d_; ++c) pos_.push_back(pos_[j * d_ + c]);
                tlast_.push_back(t_);
                ++n_;
            } else {
                const std::size_t last = n_ - 1;
                if (j != last) {
                    for (int c = 0; c < d_; ++c)
                        pos_[j * d_ + c] = pos_[last * d_ + c];
                    tlast_[j] = tlast_[last];
                }
                pos_.resize(last * d_);
                tlast_.resize(last);
                --n_;
            }
            if (crossed_) {
                advance_all(t_);
                return Outcome::crossed;
            }
        }
    }

    std::size_t count() const { return n_; }
    double mass() const {
        return static_cast<double>(n_) / static_cast<double>(p_.scale);
    }
    double range() const { return range_; }
    double rightmost() const { return rightmost_; }
    // Record mode resolves bridge maxima against the running range so the
    // recorded R is exact; estimator mode only resolves near the target.
    void set_record_resolve(bool on) { record_resolve_ = on; }

private:
    void reset_maxima() {
        range_ = 0.0;
        range_sq_ = 0.0;
        rightmost_ = 0.0;
        crossed_ = false;
    }

    void bump_range(double value) {
        if (value <= range_) return;
        range_ = value;
        range_sq_ = value * value;
        if (range_ >= cross_level_) crossed_ = true;
    }

    void bump_rightmost(double value) {
        if (value > rightmost_) rightmost_ = value;
    }

    void advance_all(double t_to) {
        for (std::size_t j = 0; j < n_; ++j) advance_particle(j, t_to);
    }

    void advance_particle(std::size_t j, double t_to) {
        const double tau = t_to - tlast_[j];
        tlast_[j] = t_to;
        if (tau <= 0.0) return;
        const double sq = std::sqrt(tau);
        double* x = &pos_[j * d_];

        if (d_ == 1) {
            const double a = x[0];
            const double b = a + sq * rng_.next_normal();
            x[0] = b;
            const double mab = std::max(std::fabs(a), std::fabs(b));
            const double pad = kBridgePad * sq;
            const bool near_r = mab + pad >= r_resolve();
            const bool near_h =
                track_h_ && std::max(a, b) + pad >= h_resolve();
            if (near_r || near_h) {
                resolve_bridge_1d(a, b, tau);
            } else {
                if (std::fabs(b) > range_) bump_range(std::fabs(b));
                if (track_h_ && b > rightmost_) bump_rightmost(b);
            }
        } else {
            double a[8], b[8];
            double rb2 = 0.0, trig2 = 0.0;
            const double pad = kBridgePad * sq;
            for (int c = 0; c < d_; ++c) {
                a[c] = x[c];
                b[c] = a[c] + sq * rng_.next_normal();
                x[c] = b[c];
                rb2 += b[c] * b[c];
                const double m =
                    std::max(std::fabs(a[c]), std::fabs(b[c])) + pad;
                trig2 += m * m;
            }
            const double rr = r_resolve();
            const bool near_r = trig2 >= rr * rr;
            const bool near_h =
                track_h_ && std::max(a[0], b[0]) + pad >= h_resolve();
            if (near_r || near_h) {
                resolve_bridge_nd(a, b, tau);
            } else {
                if (rb2 > range_sq_) bump_range(std::sqrt(rb2));
                if (track_h_ && b[0] > rightmost_) bump_rightmost(b[0]);
            }
        }
    }

    // In record mode any interior exceedance of the running maxima must be
    // resolved; in estimator mode only an excursion that could touch the
    // crossing level matters.
    double r_resolve() const { return record_resolve_ ? range_ : cross_level_; }
    double h_resolve() const { return record_resolve_ ? rightmost_ : kInf; }

    // Max of a Brownian bridge from a to b over duration delta; the min is
    // the reflected draw. Independent draws per piece slightly decouple the
    // joint (max, min) law; the pieces are at most bridge_dt long, where the
    // effect is far below the Monte Carlo resolution.
    double piece_max(double a, double b, double delta) {
        const double diff = b - a;
        return 0.5 * (a + b +
                      std::sqrt(diff * diff -
                                2.0 * delta * std::log(rng_.next_double())));
    }
    double piece_min(double a, double b, double delta) {
        const double diff = b - a;
        return 0.5 * (a + b -
                      std::sqrt(diff * diff -
                                2.0 * delta * std::log(rng_.next_double())));
    }

    void resolve_bridge_1d(double a, double b, double tau) {
        const double step = std::min(p_.bridge_dt, tau / 4.0);
        const int pieces = static_cast<int>(std::ceil(tau / step - 1e-12));
        const double delta = tau / pieces;
        double cur = a;
        double s_rem = tau;
        for (int piece = 0; piece < pieces; ++piece) {
            double nxt;
            if (piece == pieces - 1) {
                nxt = b;
            } else {
                const double mean = cur + (b - cur) * delta / s_rem;
                const double var = delta * (s_rem - delta) / s_rem;
                nxt = mean + std::sqrt(var) * rng_.next_normal();
            }
            const double mx = piece_max(cur, nxt, delta);
            const double mn = piece_min(cur, nxt, delta);
            const double rad = std::max(mx, -mn);
            if (rad > range_) bump_range(rad);
            if (track_h_ && mx > rightmost_) bump_rightmost(mx);
            cur = nxt;
            s_rem -= delta;
        }
    }

    // d >= 2: radial max from the sub-sampled points (no closed-form radial
    // bridge max exists); the first coordinate still gets the exact per-piece
    // bridge max so that H is unbiased in every dimension.
    void resolve_bridge_nd(const double* a, const double* b, double tau) {
        const double step = std::min(p_.bridge_dt, tau / 4.0);
        const int pieces = static_cast<int>(std::ceil(tau / step - 1e-12));
        const double delta = tau / pieces;
        double cur[8], nxt[8];
        std::memcpy(cur, a, sizeof(double) * d_);
        double s_rem = tau;
        for (int piece = 0; piece < pieces; ++piece) {
            if (piece == pieces - 1) {
                std::memcpy(nxt, b, sizeof(double) * d_);
            } else {
                const double w = delta / s_rem;
                const double sd = std::sqrt(delta * (s_rem - delta) / s_rem);
                for (int c = 0; c < d_; ++c) {
                    nxt[c] = cur[c] + (b[c] - cur[c]) * w +
                             sd * rng_.next_normal();
                }
            }
            double r2 = 0.0;
            for (int c = 0; c < d_; ++c) r2 += nxt[c] * nxt[c];
            if (r2 > range_sq_) bump_range(std::sqrt(r2));
            if (track_h_) {
                const double mx0 = piece_max(cur[0], nxt[0], delta);
                if (mx0 > rightmost_) bump_rightmost(mx0);
            }
            std::memcpy(cur, nxt, sizeof(double) * d_);
            s_rem -= delta;
        }
    }

    const SimParams& p_;
    Rng rng_;
    int d_;
    double birth_rate_ = 0.0, death_rate_ = 0.0, per_particle_rate_ = 0.0;
    double p_birth_ = 0.0;
    bool track_h_ = true;
    bool record_resolve_ = true;

    std::vector<double> pos_;
    std::vector<double> tlast_;
    std::size_t n_ = 0;
    double t_ = 0.0;

    double range_ = 0.0, range_sq_ = 0.0, rightmost_ = 0.0;
    double cross_level_ = kInf;
    bool crossed_ = false;
};

}  // namespace

void SimParams::validate() const {
    mech.validate();
    require(mech.eta == 0.0, ErrorCode::config,
            "the particle simulator covers the quadratic mechanism only "
            "(eta must be 0); use the PDE route for stable mechanisms");
    require(mech.beta >= 0.0, ErrorCode::config,
            "beta must be >= 0 for simulation");
    require(d >= 1 && d <= 8, ErrorCode::config, "d must lie in [1, 8]");
    require(scale >= 1, ErrorCode::config, "scale N must be >= 1");
    require(t_end > 0.0, ErrorCode::config, "t_end must be > 0");
    require(bridge_dt > 0.0, ErrorCode::config, "bridge_dt must be > 0");
    require(population_cap >= scale, ErrorCode::config,
            "population_cap must be >= initial count");
    double prev = 0.0;
    for (double cp : checkpoints) {
        require(cp > prev && cp <= t_end, ErrorCode::config,
                "checkpoints must be strictly increasing within (0, t_end]");
        prev = cp;
    }
}

RangeSimulationRecord simulate_population(const SimParams& params,
                                          std::uint64_t seed,
                                          std::uint64_t replicate) {
    params.validate();
    require(params.track_positions, ErrorCode::config,
            "simulate_population requires track_positions");

    Engine engine(params, derive_key(seed, kSimTag, replicate));
    engine.set_record_resolve(true);
    engine.seed_at_origin();

    RangeSimulationRecord record;
    record.checkpoints = params.checkpoints;

    bool done = false;
    auto note = [&](double) {
        record.range_radius.push_back(engine.range());
        record.rightmost.push_back(engine.rightmost());
    };

    for (double cp : params.checkpoints) {
        if (done) {
            note(cp);
            continue;
        }
        const auto outcome = engine.run_to(cp, params.stop_radius);
        note(cp);
        if (outcome == Engine::Outcome::crossed) {
            record.stopped_early = true;
            done = true;
        } else if (outcome == Engine::Outcome::extinct) {
            done = true;
        }
    }
    if (!done) {
        const auto outcome = engine.run_to(params.t_end, params.stop_radius);
        record.stopped_early = outcome == Engine::Outcome::crossed;
    }

    record.survived = engine.count() > 0;
    record.final_mass = engine.mass();
    record.range_at_horizon = engine.range();
    record.rightmost_at_horizon = engine.rightmost();
    return record;
}

double rightmost_max(const RangeSimulationRecord& record) {
    return record.rightmost_at_horizon;
}

MonteCarloPoint estimate_range_prob_direct(const SimParams& params, double rho,
                                           std::size_t replicates,
                                           std::uint64_t seed,
                                           unsigned threads) {
    params.validate();
    require(rho >= 0.0, ErrorCode::invalid_argument, "rho must be >= 0");
    require(replicates >= 1, ErrorCode::invalid_argument,
            "need at least one replicate");

    const double target = rho * params.t_end;
    SimParams run = params;
    run.stop_radius = target;
    run.track_rightmost = false;
    run.checkpoints.clear();

    std::vector<std::uint8_t> hit(replicates, 0);
    parallel_for(replicates, threads, [&](std::size_t i) {
        Engine engine(run, derive_key(seed, kSimTag, i));
        engine.set_record_resolve(false);
        engine.seed_at_origin();
        const auto outcome = engine.run_to(run.t_end, target);
        hit[i] = outcome == Engine::Outcome::crossed ||
                 engine.range() >= target;
    });

    MonteCarloPoint point;
    point.replicates = replicates;
    for (auto h : hit) point.hits += h;
    const double n = static_cast<double>(replicates);
    if (point.hits == 0) {
        point.value = 3.0 / n;  // rule-of-three upper confidence bound
        point.stderr_value = point.value;
        point.zero_hit_bound = true;
        point.low_hits = true;
        return point;
    }
    const double p = static_cast<double>(point.hits) / n;
    point.value = p;
    point.stderr_value = std::sqrt(p * (1.0 - p) / n);
    point.low_hits = point.hits < 10;
    return point;
}

MassMoments sample_total_mass(const SimParams& params, std::size_t replicates,
                              std::uint64_t seed, unsigned threads) {
    params.validate();
    require(replicates >= 2, ErrorCode::invalid_argument,
            "need at least two replicates");

    const double n_scale = static_cast<double>(params.scale);
    const double birth_rate = params.mech.alpha * n_scale + params.mech.beta;
    const double death_rate = params.mech.alpha * n_scale;
    const double per_particle = birth_rate + death_rate;
    const double p_birth = per_particle > 0.0 ? birth_rate / per_particle : 0.0;

    MassMoments out;
    out.replicates = replicates;
    out.masses.assign(replicates, 0.0);

    parallel_for(replicates, threads, [&](std::size_t i) {
        Rng rng(derive_key(seed, kMassTag, i));
        std::size_t n = params.scale;
        double t = 0.0;
        while (n > 0) {
            const double total_rate = static_cast<double>(n) * per_particle;
            t += rng.next_exponential() / total_rate;
            if (t >= params.t_end) break;
            if (rng.next_double() < p_birth) {
                if (n + 1 > params.population_cap) {
                    throw Error(ErrorCode::explosion,
                                "population exceeded cap " +
                                    std::to_string(params.population_cap));
                }
                ++n;
            } else {
                --n;
            }
        }
        out.masses[i] = static_cast<double>(n) / n_scale;
    });

    const double n = static_cast<double>(replicates);
    double sum = 0.0, survivors = 0.0;
    for (double m : out.masses) {
        sum += m;
        survivors += m > 0.0 ? 1.0 : 0.0;
    }
    out.mean_mass = sum / n;
    double ss = 0.0;
    for (double m : out.masses) {
        const double dm = m - out.mean_mass;
        ss += dm * dm;
    }
    out.stderr_mass = std::sqrt(ss / (n - 1.0) / n);
    out.survival_fraction = survivors / n;
    out.stderr_survival =
        std::sqrt(out.survival_fraction * (1.0 - out.survival_fraction) / n);
    return out;
}

std::uint64_t replicate_stream_key(std::uint64_t seed, std::uint64_t replicate) {
    return derive_key(seed, kSimTag, replicate);
}

double quadratic_mass_exponent(const Mechanism& mech, double v0, double t) {
    require(mech.eta == 0.0, ErrorCode::invalid_argument,
            "closed form covers the quadratic mechanism only");
    require(v0 >= 0.0 && t >= 0.0, ErrorCode::invalid_argument,
            "v0 and t must be >= 0");
    if (v0 == 0.0) return 0.0;
    const double beta = mech.beta, alpha = mech.alpha;
    if (beta == 0.0) return v0 / (1.0 + alpha * v0 * t);
    const double e = std::exp(beta * t);
    return beta * v0 * e / (beta + alpha * v0 * (e - 1.0));
}

LaplaceCheck total_mass_laplace_check(const SimParams& params, double theta,
                                      const MassMoments& sample) {
    require(theta >= 0.0, ErrorCode::invalid_argument, "theta must be >= 0");
    LaplaceCheck check;
    check.theta = theta;
    check.expected =
        std::exp(-quadratic_mass_exponent(params.mech, theta, params.t_end));

    const double n = static_cast<double>(sample.masses.size());
    double sum = 0.0;
    for (double m : sample.masses) sum += std::exp(-theta * m);
    check.empirical = sum / n;
    double ss = 0.0;
    for (double m : sample.masses) {
        const double dm = std::exp(-theta * m) - check.empirical;
        ss += dm * dm;
    }
    check.stderr_empirical = std::sqrt(ss / (n - 1.0) / n);
    check.z = check.stderr_empirical > 0.0
                  ? (check.empirical - check.expected) / check.stderr_empirical
                  : 0.0;
    return check;
}

LaplaceCheck total_mass_laplace_check(const SimParams& params, double theta,
                                      std::size_t replicates,
                                      std::uint64_t seed, unsigned threads) {
    const MassMoments sample =
        sample_total_mass(params, replicates, seed, threads);
    return total_mass_laplace_check(params, theta, sample);
}

SplittingEstimate estimate_range_prob_splitting(const SimParams& params,
                                                const std::vector<double>& levels,
                                                std::size_t per_level,
                                                std::uint64_t seed,
                                                unsigned threads) {
    params.validate();
    require(!levels.empty(), ErrorCode::invalid_argument,
            "need at least one level");
    require(per_level >= 2, ErrorCode::invalid_argument,
            "need at least two trajectories per level");
    double prev = 0.0;
    for (double level : levels) {
        require(level > prev, ErrorCode::invalid_argument,
                "levels must be strictly increasing and positive");
        prev = level;
    }

    SimParams run = params;
    run.track_rightmost = false;
    run.checkpoints.clear();
    run.stop_radius = kInf;

    SplittingEstimate estimate;
    std::vector<StageState> entries;
    double log_prob = 0.0;
    double rel_var = 0.0;

    for (std::size_t li = 0; li < levels.size(); ++li) {
        const double level = levels[li];
        const std::uint64_t stage_key = derive_key(seed, kSplitTag, li);

        std::vector<std::size_t> pick(per_level, 0);
        if (li > 0) {
            Rng resample(derive_key(stage_key, kResampleTag));
            for (auto& idx : pick) idx = resample.next_index(entries.size());
        }

        std::vector<std::optional<StageState>> crossed(per_level);
        parallel_for(per_level, threads, [&](std::size_t i) {
            Engine engine(run, derive_key(stage_key, kTrajTag, i));
            engine.set_record_resolve(false);
            if (li == 0) {
                engine.seed_at_origin();
            } else {
                engine.load(entries[pick[i]]);
            }
            const auto outcome = engine.run_to(run.t_end, level);
            if (outcome == Engine::Outcome::crossed) {
                crossed[i] = engine.export_state();
            }
        });

        std::vector<StageState> next;
        next.reserve(per_level);
        for (auto& state : crossed) {
            if (state) next.push_back(std::move(*state));
        }
        const double q =
            static_cast<double>(next.size()) / static_cast<double>(per_level);
        estimate.level_fractions.push_back(q);
        if (next.empty()) {
            estimate.partial = true;
            break;
        }
        log_prob += std::log(q);
        rel_var += (1.0 - q) / (q * static_cast<double>(per_level));
        entries = std::move(next);
    }

    estimate.log_prob = log_prob;
    estimate.prob = std::exp(log_prob);
    estimate.rel_stderr = std::sqrt(rel_var);
    return estimate;
}

}  // namespace sbmr
