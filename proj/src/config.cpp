#include "sbmr/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "sbmr/csv.hpp"

namespace sbmr {

const char* const kVersion = "0.1.0";

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(value, &pos);
        require(pos == value.size(), ErrorCode::config,
                "trailing characters in value for " + key + ": " + value);
        return x;
    } catch (const Error&) {
        throw;
    } catch (...) {
        throw Error(ErrorCode::config, "cannot parse number for " + key +
                                           ": '" + value + "'");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(value, &pos);
        require(pos == value.size(), ErrorCode::config,
                "trailing characters in value for " + key + ": " + value);
        return x;
    } catch (const Error&) {
        throw;
    } catch (...) {
        throw Error(ErrorCode::config, "cannot parse integer for " + key +
                                           ": '" + value + "'");
    }
}

std::vector<double> parse_list(const std::string& key,
                               const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_double(key, item));
    }
    require(!out.empty(), ErrorCode::config, "empty list for " + key);
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

const std::vector<std::string>& study_kinds() {
    static const std::vector<std::string> kinds = {
        "rate_upper", "rate_lower", "mc_vs_pde", "fk_certify", "bounds_suite"};
    return kinds;
}

std::string nearest_study(const std::string& name) {
    std::string best = study_kinds().front();
    std::size_t best_d = std::string::npos;
    for (const auto& kind : study_kinds()) {
        const std::size_t d = levenshtein(name, kind);
        if (d < best_d) {
            best_d = d;
            best = kind;
        }
    }
    return best;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "beta") {
        mech.beta = parse_double(key, value);
    } else if (key == "alpha") {
        mech.alpha = parse_double(key, value);
    } else if (key == "eta") {
        mech.eta = parse_double(key, value);
    } else if (key == "theta") {
        mech.theta = parse_double(key, value);
    } else if (key == "d") {
        d = static_cast<int>(parse_int(key, value));
    } else if (key == "study") {
        study = value;
    } else if (key == "rho") {
        rho = parse_double(key, value);
    } else if (key == "t_grid") {
        t_grid = parse_list(key, value);
    } else if (key == "h") {
        h = parse_double(key, value);
    } else if (key == "dt") {
        dt = parse_double(key, value);
    } else if (key == "tol") {
        tol = parse_double(key, value);
    } else if (key == "N") {
        scale = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "replicates") {
        replicates = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "record_replicates") {
        record_replicates = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "levels") {
        levels = parse_list(key, value);
    } else if (key == "auto_levels") {
        auto_levels = static_cast<int>(parse_int(key, value));
    } else if (key == "per_level") {
        per_level = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "split_t") {
        split_t = parse_double(key, value);
    } else if (key == "split_rho") {
        split_rho = parse_double(key, value);
    } else if (key == "bridge_dt") {
        bridge_dt = parse_double(key, value);
    } else if (key == "population_cap") {
        population_cap = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "fk_paths") {
        fk_paths = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "fk_steps") {
        fk_steps = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "out_dir") {
        out_dir = value;
    } else if (key == "threads") {
        threads = static_cast<unsigned>(parse_int(key, value));
    } else if (key == "verbose") {
        verbose = static_cast<int>(parse_int(key, value));
    } else {
        throw Error(ErrorCode::config, "unknown config key: '" + key + "'");
    }
}

ExperimentConfig ExperimentConfig::parse(const std::string& text,
                                         const std::string& source_name) {
    ExperimentConfig config;
    std::set<std::string> seen;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorCode::config,
                source_name + ":" + std::to_string(line_no) +
                    ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        require(!key.empty(), ErrorCode::config,
                source_name + ":" + std::to_string(line_no) + ": empty key");
        require(seen.insert(key).second, ErrorCode::config,
                source_name + ":" + std::to_string(line_no) +
                    ": duplicate key '" + key + "'");
        config.set(key, value);
    }
    return config;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path);
}

void ExperimentConfig::validate() const {
    mech.validate();
    require(d >= 1 && d <= 8, ErrorCode::config, "d must lie in [1, 8]");
    require(tol > 0.0, ErrorCode::config, "tol must be > 0");
    require(h >= 0.0 && dt >= 0.0, ErrorCode::config, "h and dt must be >= 0");
    require(seed != 0, ErrorCode::config, "seed must be nonzero");

    const bool known = std::find(study_kinds().begin(), study_kinds().end(),
                                 study) != study_kinds().end();
    if (!known) {
        throw Error(ErrorCode::config,
                    "unknown study '" + study + "'; did you mean '" +
                        nearest_study(study) + "'? (see list-studies)");
    }

    auto require_t_grid = [&](std::size_t min_points) {
        require(t_grid.size() >= min_points, ErrorCode::config,
                study + " needs a t_grid with at least " +
                    std::to_string(min_points) + " points");
        for (std::size_t i = 0; i < t_grid.size(); ++i) {
            require(t_grid[i] > 0.0, ErrorCode::config, "t_grid must be > 0");
            if (i > 0)
                require(t_grid[i] > t_grid[i - 1], ErrorCode::config,
                        "t_grid must be strictly increasing");
        }
    };

    if (study == "rate_upper") {
        require(mech.supercritical(), ErrorCode::config,
                "rate_upper needs a supercritical mechanism");
        require(rho > std::sqrt(2.0 * mech.beta), ErrorCode::config,
                "rate_upper requires rho > sqrt(2 beta) = " +
                    format_double(std::sqrt(2.0 * mech.beta)));
        require_t_grid(3);
    } else if (study == "rate_lower") {
        require(mech.supercritical(), ErrorCode::config,
                "rate_lower needs a supercritical mechanism");
        require(mech.alpha > 0.0, ErrorCode::config,
                "rate_lower requires alpha > 0");
        require(rho > 0.0 && rho < std::sqrt(2.0 * mech.beta),
                ErrorCode::config,
                "rate_lower requires rho in (0, sqrt(2 beta))");
        require_t_grid(3);
    } else if (study == "mc_vs_pde") {
        require(mech.supercritical() && mech.eta == 0.0, ErrorCode::config,
                "mc_vs_pde needs a supercritical quadratic mechanism");
        require(rho > 0.0, ErrorCode::config, "mc_vs_pde requires rho > 0");
        require_t_grid(1);
        require(scale >= 1 && replicates >= 10, ErrorCode::config,
                "mc_vs_pde needs N >= 1 and replicates >= 10");
        require(per_level >= 2 && auto_levels >= 1, ErrorCode::config,
                "mc_vs_pde needs per_level >= 2 and auto_levels >= 1");
    } else if (study == "fk_certify") {
        require(mech.supercritical(), ErrorCode::config,
                "fk_certify needs a supercritical mechanism");
        require_t_grid(1);
        require(fk_paths >= 100 && fk_steps >= 10, ErrorCode::config,
                "fk_certify needs fk_paths >= 100 and fk_steps >= 10");
    } else if (study == "bounds_suite") {
        require(fk_paths >= 100, ErrorCode::config,
                "bounds_suite reuses fk_paths for its Monte Carlo checks");
    }
}

std::string ExperimentConfig::echo() const {
    std::string out;
    auto kv = [&out](const std::string& key, const std::string& value) {
        out += key + " = " + value + "\n";
    };
    kv("alpha", format_double(mech.alpha));
    kv("auto_levels", format_int(auto_levels));
    kv("beta", format_double(mech.beta));
    kv("bridge_dt", format_double(bridge_dt));
    kv("d", format_int(d));
    kv("dt", format_double(dt));
    kv("eta", format_double(mech.eta));
    kv("fk_paths", format_int(static_cast<long long>(fk_paths)));
    kv("fk_steps", format_int(static_cast<long long>(fk_steps)));
    kv("h", format_double(h));
    if (!levels.empty()) kv("levels", join(levels));
    kv("N", format_int(static_cast<long long>(scale)));
    kv("out_dir", out_dir);
    kv("per_level", format_int(static_cast<long long>(per_level)));
    kv("population_cap", format_int(static_cast<long long>(population_cap)));
    kv("record_replicates",
       format_int(static_cast<long long>(record_replicates)));
    kv("replicates", format_int(static_cast<long long>(replicates)));
    kv("rho", format_double(rho));
    kv("seed", format_int(static_cast<long long>(seed)));
    kv("split_rho", format_double(split_rho));
    kv("split_t", format_double(split_t));
    kv("study", study);
    kv("t_grid", join(t_grid));
    kv("theta", format_double(mech.theta));
    kv("threads", format_int(threads));
    kv("tol", format_double(tol));
    kv("verbose", format_int(verbose));
    return out;
}

std::string ExperimentConfig::resolved_out_dir() const {
    if (!out_dir.empty()) return out_dir;
    const char* root = std::getenv("SBMR_OUT_ROOT");
    const std::string base = root && *root ? root : ".";
    return base + "/" + (study.empty() ? "study" : study);
}

}  // namespace sbmr
