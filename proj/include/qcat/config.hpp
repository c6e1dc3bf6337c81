#pragma once

#include "pipeline.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace qcat {

// Which state the experiment studies.
struct StateConfig {
    std::string kind = "log_mode";        // log_mode | eigenstate | scarred
    std::string coefficients = "uniform"; // log_mode: uniform | random
    std::array<double, 2> point{0.0, 0.0};  // scarred: periodic point
    int T_avg = -1;                       // scarred: -1 means floor(log N / lambda)
};

// Limit measure used for the classical side of the report.
struct MeasureConfig {
    std::string kind = "lebesgue";  // lebesgue | mixture
    double weight = 0.5;            // mixture: weight of the orbit of `point`
    std::array<double, 2> point{0.0, 0.0};
};

struct ExperimentConfig {
    std::array<std::int64_t, 4> cat{2, 1, 1, 1};
    std::vector<int> N;
    int K = 3;
    double partition_offset = 0.0;
    double eta = 0.05;
    double epsilon = 0.4;
    double theta0 = 1.0;     // target angle, snapped to the nearest eigenangle
    int n0 = 3;
    double delta_long = 0.15;
    double H0 = 0.0;         // 0: lambda / 2
    double eps_bar = 0.1;
    std::int64_t mc_samples = 1000000;
    std::uint64_t seed = 0;
    int n = 0;               // word length for measure/entropy/eup/dispersive; 0: floor(2 T_E)
    int q = 0;               // shift: averaging count; 0: from the time split
    int pairs = 20;          // dispersive: word pairs per length
    std::string output = "out";
    StateConfig state;
    MeasureConfig limit;

    CatMapSpec map() const { return {cat[0], cat[1], cat[2], cat[3]}; }
    int largest_N() const { return *std::max_element(N.begin(), N.end()); }
};

namespace detail {

template <class T>
T field(const nlohmann::json& j, const std::string& key, const std::string& path) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + key, std::string("wrong type: ") + e.what());
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ConfigError(path + k, "unknown key");
}

template <class T>
void optional_field(const nlohmann::json& j, const std::string& key, T& out, const std::string& path = "") {
    if (j.contains(key)) out = field<T>(j, key, path);
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using detail::field;
    using detail::optional_field;
    detail::reject_unknown(j,
                           {"cat", "N", "K", "partition_offset", "eta", "epsilon", "theta0", "n0", "delta_long", "H0",
                            "eps_bar", "mc_samples", "seed", "n", "q", "pairs", "output", "state", "limit_measure"},
                           "");
    for (const char* req : {"cat", "N", "K", "eta", "epsilon", "theta0", "n0", "seed"})
        if (!j.contains(req)) throw ConfigError(req, "missing required field");

    ExperimentConfig c;
    const auto m = field<std::vector<std::vector<std::int64_t>>>(j, "cat", "");
    if (m.size() != 2 || m[0].size() != 2 || m[1].size() != 2) throw ConfigError("cat", "expected a 2x2 integer matrix");
    c.cat = {m[0][0], m[0][1], m[1][0], m[1][1]};
    const CatMapSpec spec = c.map();
    if (spec.a * spec.d - spec.b * spec.c != 1) throw ConfigError("cat", "determinant must be 1");
    if (!spec.hyperbolic()) throw ConfigError("cat", "matrix is not hyperbolic");

    c.N = field<std::vector<int>>(j, "N", "");
    if (c.N.empty()) throw ConfigError("N", "ladder is empty");
    for (int n : c.N)
        if (n < 2) throw ConfigError("N", "dimensions must be >= 2");
    c.K = field<int>(j, "K", "");
    if (c.K < 1 || c.K > 36) throw ConfigError("K", "must lie in [1, 36]");
    c.eta = field<double>(j, "eta", "");
    c.epsilon = field<double>(j, "epsilon", "");
    if (!(c.epsilon >= 0)) throw ConfigError("epsilon", "must be >= 0");
    c.theta0 = field<double>(j, "theta0", "");
    c.n0 = field<int>(j, "n0", "");
    if (c.n0 < 1) throw ConfigError("n0", "must be >= 1");
    c.seed = field<std::uint64_t>(j, "seed", "");
    optional_field(j, "partition_offset", c.partition_offset);
    optional_field(j, "delta_long", c.delta_long);
    if (!(c.delta_long > 0 && c.delta_long < 0.5)) throw ConfigError("delta_long", "must lie in (0, 1/2)");
    optional_field(j, "H0", c.H0);
    optional_field(j, "eps_bar", c.eps_bar);
    optional_field(j, "mc_samples", c.mc_samples);
    optional_field(j, "n", c.n);
    optional_field(j, "q", c.q);
    optional_field(j, "pairs", c.pairs);
    optional_field(j, "output", c.output);

    if (j.contains("state")) {
        const auto& s = j.at("state");
        detail::reject_unknown(s, {"kind", "coefficients", "point", "T_avg"}, "state.");
        optional_field(s, "kind", c.state.kind, "state.");
        optional_field(s, "coefficients", c.state.coefficients, "state.");
        optional_field(s, "point", c.state.point, "state.");
        optional_field(s, "T_avg", c.state.T_avg, "state.");
        if (c.state.kind != "log_mode" && c.state.kind != "eigenstate" && c.state.kind != "scarred")
            throw ConfigError("state.kind", "expected log_mode, eigenstate or scarred");
        if (c.state.coefficients != "uniform" && c.state.coefficients != "random")
            throw ConfigError("state.coefficients", "expected uniform or random");
    }
    if (j.contains("limit_measure")) {
        const auto& s = j.at("limit_measure");
        detail::reject_unknown(s, {"kind", "weight", "point"}, "limit_measure.");
        optional_field(s, "kind", c.limit.kind, "limit_measure.");
        optional_field(s, "weight", c.limit.weight, "limit_measure.");
        optional_field(s, "point", c.limit.point, "limit_measure.");
        if (c.limit.kind != "lebesgue" && c.limit.kind != "mixture")
            throw ConfigError("limit_measure.kind", "expected lebesgue or mixture");
        if (!(c.limit.weight >= 0 && c.limit.weight <= 1)) throw ConfigError("limit_measure.weight", "must lie in [0, 1]");
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<document>", e.what());
    }
    return parse_config(j);
}

// Per-N objects shared by all subcommands.
struct Experiment {
    ExperimentConfig cfg;
    CatMapSpec cat;
    PlanckGrid grid;
    TorusOperator U;
    QuasiProjectorSet q;
    SpectralData sd;
    double theta0 = 0.0;  // snapped
    Vec psi;
    std::string state_note;

    Experiment(const ExperimentConfig& c, int N) : cfg(c), cat(c.map()), grid(N), U(build_propagator(cat, grid)) {
        q = quantize_partition(build_smooth_partition(PartitionSpec(c.K, c.partition_offset), c.eta), grid);
        q.lambda = lyapunov(cat);
        q.delta_long = c.delta_long;
        sd = spectral_decompose(U, cat);
        theta0 = nearest_angle(sd, c.theta0);
    }

    void build_state() {
        const auto& s = cfg.state;
        if (s.kind == "eigenstate") {
            const int j = nearest_index(sd, cfg.theta0);
            psi = sd.vectors.col(j);
            theta0 = sd.angles(j);
        } else if (s.kind == "scarred") {
            const int T = s.T_avg >= 0 ? s.T_avg : int(std::floor(std::log(double(grid.N)) / q.lambda));
            const auto m = construct_scarred_mode(U, grid, cat, s.point, T, theta0);
            psi = m.state;
        } else {
            if (s.coefficients == "random")
                psi = construct_log_mode(sd, theta0, cfg.epsilon, RandomCoefficients{cfg.seed}).state;
            else
                psi = construct_log_mode(sd, theta0, cfg.epsilon).state;
        }
    }

    InvariantMeasure limit_measure() const {
        if (cfg.limit.kind == "lebesgue") return InvariantMeasure::lebesgue();
        const auto orb = InvariantMeasure::orbit_of(cat, cfg.limit.point);
        if (cfg.limit.weight >= 1) return orb;
        if (cfg.limit.weight <= 0) return InvariantMeasure::lebesgue();
        return InvariantMeasure::mixture({cfg.limit.weight, 1 - cfg.limit.weight}, {orb, InvariantMeasure::lebesgue()});
    }

    MonteCarlo mc() const { return {cfg.mc_samples, cfg.seed}; }

    int word_length() const { return cfg.n > 0 ? cfg.n : two_ehrenfest_floor(q); }
};

}  // namespace qcat
