// Experiment driver: one subcommand per stage, each writing report.json,
// words.csv and scaling.csv into the output directory.

#include "qcat/config.hpp"
#include "qcat/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace qcat;
using nlohmann::json;

namespace {

json num(double v, double tol = 0.0) { return {{"value", v}, {"tolerance", tol}}; }

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct WordRow {
    std::string mu_fwd, mu_bwd, F1, Fbar, region;
};

struct Output {
    json report;
    std::vector<WordRow> words;
    int word_len = 0;
    int K = 0;
    std::string scaling_quantity;
    std::vector<std::pair<int, double>> scaling;
};

// Per-word table at length n0 for the configured state; regions when a split is given.
void fill_words(Output& out, Experiment& ex, const DefectReport& dr, const RegionDecomposition* reg) {
    const int n0 = ex.cfg.n0;
    const auto fwd = quantum_measure(ex.psi, ex.q, ex.U, n0, Direction::Forward);
    const auto bwd = quantum_measure(ex.psi, ex.q, ex.U, n0, Direction::Backward);
    out.word_len = n0;
    out.K = ex.q.K();
    out.words.resize(fwd.table.size());
    for (std::size_t i = 0; i < fwd.table.size(); ++i) {
        auto& r = out.words[i];
        r.mu_fwd = fmt(fwd.table[i]);
        r.mu_bwd = fmt(bwd.table[i]);
        r.F1 = fmt(dr.F1.F1[i]);
        r.Fbar = fmt(dr.Fbar.Fbar[i]);
        if (reg) r.region = region_name(reg->label[i]);
    }
}

void write_outputs(const Output& out, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir + "/report.json");
        f << out.report.dump(2) << "\n";
    }
    {
        std::ofstream f(dir + "/words.csv");
        f << "word,symbols,n,mu_fwd,mu_bwd,F1,Fbar,region\n";
        for (std::size_t i = 0; i < out.words.size(); ++i) {
            const auto& r = out.words[i];
            f << i << "," << word_to_string(word_from_index(std::int64_t(i), out.word_len, out.K)) << ","
              << out.word_len << "," << r.mu_fwd << "," << r.mu_bwd << "," << r.F1 << "," << r.Fbar << ","
              << r.region << "\n";
        }
    }
    {
        std::vector<double> lx, ly;
        for (const auto& [N, v] : out.scaling)
            if (v > 0) {
                lx.push_back(std::log(double(N)));
                ly.push_back(std::log(v));
            }
        const double slope = lx.size() >= 2 ? fit_slope(lx, ly) : std::nan("");
        std::ofstream f(dir + "/scaling.csv");
        f << "N,quantity,residual,fitted_slope\n";
        for (const auto& [N, v] : out.scaling)
            f << N << "," << out.scaling_quantity << "," << fmt(v) << "," << fmt(slope) << "\n";
    }
}

json header(const std::string& cmd, const Experiment& ex) {
    const auto& c = ex.cfg;
    return {{"subcommand", cmd},
            {"d_minus_1", 1},
            {"seed", c.seed},
            {"N_ladder", c.N},
            {"N", ex.grid.N},
            {"K", c.K},
            {"n0", c.n0},
            {"cat", {c.cat[0], c.cat[1], c.cat[2], c.cat[3]}},
            {"state", c.state.kind},
            {"lambda", num(ex.q.lambda, 1e-15)},
            {"eta", num(c.eta)},
            {"epsilon", num(c.epsilon)},
            {"theta0", num(ex.theta0, 1e-12)},
            {"delta_long", num(c.delta_long)},
            {"two_T_E", num(two_ehrenfest(ex.q), 1e-12)},
            {"unity_residual", num(ex.q.unity_residual, 1e-12)}};
}

json defect_json(const DefectReport& d, const QuasiProjectorSet& q) {
    const double mtol = d.n0 * q.unity_residual;
    json phi = json::array();
    for (double v : d.phi_norms) phi.push_back(num(v, 1e-12));
    double gmax = 0;
    for (double g : d.G) gmax = std::max(gmax, std::abs(g));
    return {{"q", d.split.q},
            {"r", d.split.r},
            {"n_F1", d.F1.n},
            {"F1_sum", num(d.F1.sum(), mtol)},
            {"F1_identity_residual", num(d.F1.identity_residual, 1e-10)},
            {"F1_imag_residue", num(d.F1.imag_residue, 1e-10)},
            {"F1_bwd_sum", num(d.F1_bwd.sum(), mtol)},
            {"G_max_abs", num(gmax, 0.0)},
            {"Phi_norms", phi},
            {"F2", num(d.F2, 2 * d.n0 * q.lambda * mtol)},
            {"D", num(d.D.D, 1e-10)},
            {"D_bwd", num(d.D_bwd.D, 1e-10)},
            {"Fbar_max_abs", num(d.Fbar.max_abs(), mtol)},
            {"Fbar_sum", num(d.Fbar.sum(), mtol)},
            {"Fbar_bwd_max_abs", num(d.Fbar_bwd.max_abs(), mtol)},
            {"Fbar_bwd_sum", num(d.Fbar_bwd.sum(), mtol)}};
}

json smb_json(const SMBSplit& s) {
    json ineq = json::array();
    for (const auto& m : s.inequalities)
        ineq.push_back({{"name", m.name}, {"lhs", num(m.lhs, 3 * m.stderr_)}, {"rhs", num(m.rhs, 3 * m.stderr_)},
                        {"holds", m.holds()}});
    return {{"H0", num(s.H0)},
            {"H_max", num(s.H_max)},
            {"eps_bar", num(s.eps_bar)},
            {"delta", num(s.delta)},
            {"a", num(s.a)},
            {"b", num(s.b)},
            {"c", num(s.c)},
            {"L_size", s.L_words.size()},
            {"B_size", s.B_words.size()},
            {"cardinality_bound", num(s.cardinality_bound)},
            {"cardinality_ok", s.cardinality_ok()},
            {"inequalities", ineq}};
}

json terms_json(const DefectTerms& t) {
    json j;
    for (int k = 0; k < 6; ++k) j["D" + std::to_string(k + 1)] = num(t.D[std::size_t(k)]);
    j["R"] = num(t.R);
    j["D1_bound"] = num(t.D1_bound);
    j["D1_bound_envelope"] = num(t.D1_bound_envelope);
    j["proxy_fallbacks"] = t.proxy_fallbacks;
    return j;
}

Output run(const std::string& cmd, const ExperimentConfig& cfg) {
    Output out;
    std::vector<std::unique_ptr<Experiment>> ladder;
    for (int N : cfg.N) ladder.push_back(std::make_unique<Experiment>(cfg, N));
    std::sort(ladder.begin(), ladder.end(), [](const auto& a, const auto& b) { return a->grid.N < b->grid.N; });
    Experiment& ex = *ladder.back();
    ex.build_state();
    out.report["header"] = header(cmd, ex);
    json& body = out.report["result"];
    const RegionDecomposition* regions = nullptr;
    RegionDecomposition reg_store;

    if (cmd == "spectrum") {
        out.scaling_quantity = "eigen_residual";
        for (auto& e : ladder) out.scaling.emplace_back(e->grid.N, e->sd.max_residual);
        body = {{"method", method_name(ex.sd.method)},
                {"period", ex.sd.period},
                {"max_residual", num(ex.sd.max_residual, 1e-8)},
                {"orthonormality", num(ex.sd.orthonormality, 1e-8)},
                {"dimension", ex.sd.dim()}};
    } else if (cmd == "quasimode") {
        out.scaling_quantity = "width_defect_times_logN";
        for (auto& e : ladder) {
            e->build_state();
            out.scaling.emplace_back(e->grid.N, width_defect(e->U, e->psi, e->theta0) * std::log(double(e->grid.N)));
        }
        const double w = width_defect(ex.U, ex.psi, ex.theta0);
        body = {{"width_defect", num(w, 1e-12)},
                {"width_defect_times_logN", num(w * std::log(double(ex.grid.N)), 1e-12)},
                {"window_halfwidth", num(window_halfwidth(ex.grid.N, cfg.epsilon))},
                {"state_file", "state"}};
        std::filesystem::create_directories(cfg.output);
        export_state(cfg.output + "/state", ex.psi, {{"theta0", ex.theta0}, {"kind", cfg.state.kind}});
    } else if (cmd == "measure" || cmd == "entropy") {
        const int nmax = ex.word_length();
        check_ehrenfest(ex.q, nmax, "n");
        out.scaling_quantity = "unity_residual";
        for (auto& e : ladder) out.scaling.emplace_back(e->grid.N, e->q.unity_residual);
        json rows = json::array();
        for (int n = 1; n <= nmax; ++n) {
            const auto f = quantum_measure(ex.psi, ex.q, ex.U, n, Direction::Forward);
            const auto b = quantum_measure(ex.psi, ex.q, ex.U, n, Direction::Backward);
            const double tol = n * ex.q.unity_residual;
            json row = {{"n", n}, {"mass_fwd", num(f.mass, tol)}, {"mass_bwd", num(b.mass, tol)}};
            if (cmd == "entropy") {
                const auto wf = jacobian_weights(f, ex.q.lambda);
                const auto pf = quantum_entropy_pressure(f, wf, wf[0]);
                const auto pb = quantum_entropy_pressure(b, wf, wf[0]);
                row["H_fwd"] = num(pf.H, 1e-12);
                row["H_bwd"] = num(pb.H, 1e-12);
                row["p_fwd"] = num(pf.p, 1e-12);
                row["p_bwd"] = num(pb.p, 1e-12);
                if (n + cfg.n0 <= two_ehrenfest(ex.q)) {
                    const auto s = subadditivity_residual(ex.psi, ex.q, ex.U, n, cfg.n0, ex.q.lambda);
                    row["subadditivity_entropy"] = num(s.entropy_residual, s.entropy_tolerance);
                    row["subadditivity_pressure"] = num(s.pressure_residual, s.pressure_tolerance);
                }
            }
            rows.push_back(row);
        }
        body["lengths"] = rows;
    } else if (cmd == "shift") {
        const auto dr = defect_report(ex.psi, ex.q, ex.U, ex.theta0, cfg.n0);
        body = defect_json(dr, ex.q);
        if (cfg.q > 0) {
            const auto fb = averaged_Fbar(ex.psi, ex.q, ex.U, ex.theta0, cfg.n0, cfg.q);
            body["Fbar_requested_q"] = {{"q", cfg.q}, {"max_abs", num(fb.max_abs(), cfg.n0 * ex.q.unity_residual)}};
        }
        out.scaling_quantity = "G_max_abs";
        for (auto& e : ladder) {
            e->build_state();
            const int n = std::max(0, two_ehrenfest_floor(e->q) - cfg.n0);
            double g = 0;
            for (double v : shift_residual_G(e->psi, e->q, e->U, n, cfg.n0)) g = std::max(g, std::abs(v));
            out.scaling.emplace_back(e->grid.N, g);
        }
    } else if (cmd == "eup") {
        out.scaling_quantity = "eup_remainder_R";
        for (auto& e : ladder) {
            e->build_state();
            const auto inst = eup_instantiation(e->psi, e->q, e->U, e->sd, e->theta0, e->word_length());
            out.scaling.emplace_back(e->grid.N, inst.result.R);
            if (e.get() == &ex) {
                const auto& r = inst.result;
                json defects;
                for (const auto& [name, v] : r.defects) defects[name] = num(v, 1e-10);
                body = {{"n", inst.n},
                        {"lhs", num(r.lhs, 1e-10)},
                        {"p_rho", num(r.p_rho, 1e-10)},
                        {"p_tau", num(r.p_tau, 1e-10)},
                        {"c_cone", num(r.c_cone, 1e-10)},
                        {"R", num(r.R, 1e-10)},
                        {"V", num(r.V, 1e-12)},
                        {"rhs", num(r.rhs, 1e-8)},
                        {"rhs_sharp", num(r.rhs_sharp, 1e-8)},
                        {"small_remainder_regime", r.small_remainder_regime},
                        {"satisfied", r.satisfied},
                        {"cutoff_ranks", {inst.rank0, inst.rankn}},
                        {"hypothesis_defects", defects}};
            }
        }
    } else if (cmd == "dispersive") {
        out.scaling_quantity = "C_sup";
        for (auto& e : ladder) {
            const int nmax = e->word_length();
            std::vector<double> xs, ys;
            double C = 0;
            json rows = json::array();
            for (int n = 2; n <= nmax; ++n) {
                const auto chi = spectral_cutoff_factor(e->sd, e->theta0, n, cfg.delta_long);
                double s = 0;
                const auto pairs = typical_word_pairs(e->cat, e->q.partition.base(), n, std::size_t(cfg.pairs), cfg.seed);
                for (const auto& [a, b] : pairs) {
                    const auto d = dispersive_ratio(e->q, e->U, a, b, n, chi, e->cat);
                    s += std::log(d.norm);
                    C = std::max(C, d.bound_ratio);
                }
                xs.push_back(n);
                ys.push_back(s / cfg.pairs);
                rows.push_back({{"n", n}, {"mean_log_norm", num(s / cfg.pairs, 1e-10)}});
            }
            out.scaling.emplace_back(e->grid.N, C);
            if (e.get() == &ex)
                body = {{"lengths", rows},
                        {"slope", num(xs.size() >= 2 ? fit_slope(xs, ys) : std::nan(""), 0.15)},
                        {"target_slope", num(-ex.q.lambda, 0.15)},
                        {"C_sup", num(C, 0.0)}};
        }
    } else if (cmd == "smb") {
        const auto smb = smb_split(ex.limit_measure(), ex.cat, ex.q.partition.base(),
                                   cfg.H0 > 0 ? cfg.H0 : ex.q.lambda / 2, cfg.eps_bar, cfg.n0, ex.mc());
        body = smb_json(smb);
        out.scaling_quantity = "unity_residual";
        for (auto& e : ladder) out.scaling.emplace_back(e->grid.N, e->q.unity_residual);
        const auto dr = defect_report(ex.psi, ex.q, ex.U, ex.theta0, cfg.n0);
        reg_store = region_decompose(dr.Fbar.Fbar, smb);
        regions = &reg_store;
        fill_words(out, ex, dr, regions);
        return out;
    } else if (cmd == "theorem-report") {
        TheoremParams p;
        p.theta0 = ex.theta0;
        p.epsilon = cfg.state.kind == "log_mode" ? cfg.epsilon : 0.0;
        p.n0 = cfg.n0;
        p.H0 = cfg.H0;
        p.eps_bar = cfg.eps_bar;
        p.mc = ex.mc();
        const auto tr = run_theorem(ex.psi, ex.q, ex.U, ex.cat, ex.limit_measure(), p);
        json items;
        for (const auto& it : tr.report.items) items[it.name] = num(it.value, it.tolerance);
        body = {{"lhs", num(tr.report.lhs, 3 * tr.report.lhs_stderr)},
                {"rhs", num(tr.report.rhs, tr.report.tolerance)},
                {"rhs_akn", num(tr.report.rhs_akn)},
                {"rhs_floor", num(tr.report.rhs_floor)},
                {"tolerance", num(tr.report.tolerance)},
                {"satisfied", tr.report.satisfied},
                {"items", items},
                {"smb", smb_json(tr.smb)},
                {"terms_forward", terms_json(tr.terms)},
                {"terms_backward", terms_json(tr.terms_bwd)},
                {"defects", defect_json(tr.defects, ex.q)}};
        out.report["satisfied"] = tr.report.satisfied;
        out.scaling_quantity = "Fbar_max_abs";
        for (auto& e : ladder) {
            e->build_state();
            out.scaling.emplace_back(e->grid.N, defect_report(e->psi, e->q, e->U, e->theta0, cfg.n0).Fbar.max_abs());
        }
        reg_store = tr.regions;
        regions = &reg_store;
        fill_words(out, ex, tr.defects, regions);
        return out;
    } else {
        throw ConfigError("subcommand", "unknown subcommand " + cmd);
    }
    fill_words(out, ex, defect_report(ex.psi, ex.q, ex.U, ex.theta0, cfg.n0), regions);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum cat map entropy experiments"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    std::string config_path, out_dir, ladder;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "experiment configuration (JSON)")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--n-ladder", ladder, "comma separated dimensions, e.g. 64,128,256");
    for (const char* c : {"spectrum", "quasimode", "measure", "entropy", "shift", "eup", "dispersive", "smb",
                          "theorem-report"})
        app.add_subcommand(c, "");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        auto cfg = load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.output = out_dir;
        if (!ladder.empty()) {
            cfg.N.clear();
            std::stringstream ss(ladder);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                try {
                    cfg.N.push_back(std::stoi(tok));
                } catch (const std::exception&) {
                    throw ConfigError("--n-ladder", "not an integer: " + tok);
                }
            }
            if (cfg.N.empty()) throw ConfigError("--n-ladder", "empty ladder");
        }
        const auto out = run(cmd, cfg);
        write_outputs(out, cfg.output);
        std::cout << cmd << ": wrote " << cfg.output << "/report.json\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "contract violation [" << e.name() << "]: " << e.what() << "\n";
        return 2;
    }
}
