#pragma once

#include "quasimodes.hpp"

#include <array>
#include <map>
#include <sstream>

namespace qcat {

// ---------------------------------------------------------------- regime caps

// 2 T_E = (1 - delta) log(2 pi N) / lambda, the horizon of all measure functionals
inline double two_ehrenfest(const QuasiProjectorSet& q) {
    if (q.lambda <= 0) return std::numeric_limits<double>::infinity();
    return (1.0 - q.delta_long) * q.grid.log_inv_hbar() / q.lambda;
}

inline void check_ehrenfest(const QuasiProjectorSet& q, double n, const std::string& what) {
    const double cap = two_ehrenfest(q);
    if (n > cap + 1e-12) {
        std::ostringstream os;
        os << what << " = " << n << " exceeds the Ehrenfest cap 2T_E = " << cap;
        throw Error("WordTooLong", os.str());
    }
}

// ---------------------------------------------------------------- word measures

struct QuantumWordMeasure {
    int n = 0;
    int K = 0;
    Direction direction = Direction::Forward;
    std::vector<double> table;
    double mass = 0.0;
};

inline QuantumWordMeasure quantum_measure(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, int n,
                                          Direction dir) {
    check_ehrenfest(q, n, "word length n");
    QuantumWordMeasure m;
    m.n = n;
    m.K = q.K();
    m.direction = dir;
    m.table.assign(static_cast<std::size_t>(ipow(q.K(), n)), 0.0);
    word_tree(q, U, psi, n, dir, [&](std::int64_t i, const Mat& v) { m.table[std::size_t(i)] = v.squaredNorm(); });
    for (double t : m.table) m.mass += t;
    return m;
}

struct PressureReport {
    double H = 0.0;
    double potential = 0.0;  // sum mu log w^2
    double p = 0.0;
    double V = 1.0;
};

inline PressureReport quantum_entropy_pressure(const QuantumWordMeasure& m, const std::vector<double>& weights,
                                               double V) {
    if (weights.size() != m.table.size()) throw Error("TableMismatch", "one weight per word required");
    PressureReport r;
    r.V = V;
    for (std::size_t i = 0; i < m.table.size(); ++i) {
        const double w = weights[i];
        if (!(w >= 1.0 / V * (1 - 1e-12) && w <= V * (1 + 1e-12)))
            throw Error("WeightOutOfRange", "weight " + std::to_string(w) + " outside [1/V, V], V = " + std::to_string(V));
        r.H += eta(m.table[i]);
        r.potential += m.table[i] * std::log(w * w);
    }
    r.p = r.H - r.potential;
    return r;
}

inline PressureReport quantum_entropy_pressure(const QuantumWordMeasure& m) {
    return quantum_entropy_pressure(m, std::vector<double>(m.table.size(), 1.0), 1.0);
}

// sqrt of the coarse unstable Jacobian, e^{n lambda / 2} for every word
inline std::vector<double> jacobian_weights(const QuantumWordMeasure& m, double lambda) {
    return std::vector<double>(m.table.size(), std::exp(0.5 * m.n * lambda));
}

// ---------------------------------------------------------------- shift defects
//
// Convention: psi is a mode at eigenangle theta0, U psi ~ e^{i theta0} psi, and
//   Phi[n] = U^n psi - e^{i n theta0} psi = sum_{s<n} e^{i(n-1-s) theta0} U^s (U - e^{i theta0}) psi.
// Backward quantities use U^{-1} and -theta0.

inline Vec compute_phi(const Vec& psi, const TorusOperator& U, double theta0, int n, Direction dir = Direction::Forward) {
    if (n < 0) throw Error("BadLength", "n must be >= 0");
    const double th = dir == Direction::Forward ? theta0 : -theta0;
    auto step = [&](const Vec& x) -> Vec { return dir == Direction::Forward ? U.apply(x) : U.apply_adjoint(x); };
    const Vec r = step(psi) - std::polar(1.0, th) * psi;
    Vec acc = Vec::Zero(psi.size());
    Vec us = r;  // U^s r
    for (int s = 0; s < n; ++s) {
        acc += std::polar(1.0, th * (n - 1 - s)) * us;
        us = step(us);
    }
    return acc;
}

struct F1Table {
    int n = 0, n0 = 0;
    Direction direction = Direction::Forward;
    std::vector<double> F1;            // per word of length n0
    std::vector<double> mu;            // mu_psi(beta)
    std::vector<double> mu_shifted;    // mu_{U^n psi}(beta), computed directly
    std::vector<double> pi2_norm;      // || |Pi_beta|^2 psi || (only when requested)
    double identity_residual = 0.0;    // max |mu_shifted - mu - F1|
    double imag_residue = 0.0;         // max |Im F1|
    double phi_norm = 0.0;
    double sum() const {
        double s = 0;
        for (double f : F1) s += f;
        return s;
    }
};

// F1(beta) = <|Pi|^2 psi, Phi'> + <|Pi|^2 Phi', psi> + <|Pi|^2 Phi', Phi'> with Phi' = e^{-in theta0} Phi[n].
// The shifted measure is propagated separately so the identity check compares two routes.
inline F1Table compute_F1_table(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, double theta0,
                                int n0, int n, Direction dir = Direction::Forward, bool with_pi2 = false) {
    if (n < 0) throw Error("BadLength", "n must be >= 0");
    check_ehrenfest(q, n + n0, "n + n0");
    const double th = dir == Direction::Forward ? theta0 : -theta0;
    const cplx back = std::polar(1.0, -th * n);
    const Vec phi = back * compute_phi(psi, U, theta0, n, dir);
    const Vec shifted = back * apply_power(U, psi, dir == Direction::Forward ? n : -n).col(0);

    Mat B(psi.size(), 3);
    B.col(0) = psi;
    B.col(1) = phi;
    B.col(2) = shifted;
    const std::size_t W = static_cast<std::size_t>(ipow(q.K(), n0));
    F1Table t;
    t.n = n;
    t.n0 = n0;
    t.direction = dir;
    t.phi_norm = phi.norm();
    t.F1.assign(W, 0.0);
    t.mu.assign(W, 0.0);
    t.mu_shifted.assign(W, 0.0);
    if (with_pi2) t.pi2_norm.assign(W, 0.0);
    std::vector<double> idres(W, 0.0), imres(W, 0.0);
    word_tree(q, U, B, n0, dir, [&](std::int64_t i, const Mat& v) {
        const auto k = std::size_t(i);
        const auto a = v.col(0), f = v.col(1), d = v.col(2);
        // <x, y> = y^* x
        const cplx F = f.dot(a) + a.dot(f) + f.squaredNorm();
        t.F1[k] = F.real();
        imres[k] = std::abs(F.imag());
        t.mu[k] = a.squaredNorm();
        t.mu_shifted[k] = d.squaredNorm();
        idres[k] = std::abs(t.mu_shifted[k] - t.mu[k] - t.F1[k]);
        if (with_pi2) {
            // Pi^dag Pi psi up to a unitary: undo the leaf rotation through the word in reverse
            const Word w = word_from_index(i, n0, q.K());
            Mat x = a;
            if (dir == Direction::Forward) {
                for (int j = n0 - 1; j >= 1; --j) x = U.apply_adjoint(q.d[std::size_t(w[std::size_t(j)])].asDiagonal() * x);
                x = q.d[std::size_t(w[0])].asDiagonal() * x;
            } else {
                for (int j = 0; j < n0; ++j) x = U.apply(q.d[std::size_t(w[std::size_t(j)])].asDiagonal() * x);
            }
            t.pi2_norm[k] = x.norm();
        }
    });
    for (std::size_t k = 0; k < W; ++k) {
        t.identity_residual = std::max(t.identity_residual, idres[k]);
        t.imag_residue = std::max(t.imag_residue, imres[k]);
    }
    return t;
}

inline double compute_F1(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, const Word& beta,
                         double theta0, int n, Direction dir = Direction::Forward) {
    const int n0 = int(beta.size());
    check_ehrenfest(q, n + n0, "n + n0");
    const double th = dir == Direction::Forward ? theta0 : -theta0;
    const Vec phi = std::polar(1.0, -th * n) * compute_phi(psi, U, theta0, n, dir);
    const Vec a = refined_apply(q, U, beta, dir, psi).col(0);
    const Vec f = refined_apply(q, U, beta, dir, phi).col(0);
    return (f.dot(a) + a.dot(f) + f.squaredNorm()).real();
}

// G(beta) = sum_alpha mu_psi(alpha beta) - mu_{U^n psi}(beta), alpha of length n
inline std::vector<double> shift_residual_G(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, int n,
                                            int n0) {
    check_ehrenfest(q, n + n0, "n + n0");
    const std::size_t W = static_cast<std::size_t>(ipow(q.K(), n0));
    std::vector<double> g(W, 0.0);
    if (n == 0) return g;
    const auto joint = quantum_measure(psi, q, U, n + n0, Direction::Forward);
    for (std::size_t i = 0; i < joint.table.size(); ++i) g[i % W] += joint.table[i];
    const auto shifted = quantum_measure(apply_power(U, psi, n).col(0), q, U, n0, Direction::Forward);
    for (std::size_t b = 0; b < W; ++b) g[b] -= shifted.table[b];
    return g;
}

inline double shift_residual_G(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, const Word& beta,
                               int n) {
    return shift_residual_G(psi, q, U, n, int(beta.size()))[std::size_t(word_index(beta, q.K()))];
}

inline double compute_F2(const std::vector<double>& F1, const std::vector<double>& weights) {
    if (F1.size() != weights.size()) throw Error("TableMismatch", "one weight per word required");
    double s = 0;
    for (std::size_t i = 0; i < F1.size(); ++i) s -= 2.0 * std::log(weights[i]) * F1[i];
    return s;
}

// n = q n0 + r with r = floor(2T_E) mod n0
struct TimeSplit {
    int n = 0, q = 0, r = 0;
};

inline TimeSplit split_time(int two_te_floor, int n0) {
    if (n0 < 1) throw Error("BadLength", "n0 must be >= 1");
    TimeSplit s;
    s.n = two_te_floor;
    s.r = two_te_floor % n0;
    s.q = (two_te_floor - s.r) / n0;
    return s;
}

inline int two_ehrenfest_floor(const QuasiProjectorSet& q) { return int(std::floor(two_ehrenfest(q) + 1e-12)); }

struct DefectValue {
    double D = 0.0;
    std::vector<double> H;  // H(U^{j n0} psi), j < q
};

// D = q^{-1} sum_{j<q} [H(U^{j n0} psi) - H(psi)] at word length n0
inline DefectValue defect_D(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, int n0, int qq,
                            Direction dir = Direction::Forward) {
    if (qq < 1) throw Error("BadLength", "q must be >= 1");
    check_ehrenfest(q, double(qq) * n0, "q n0");
    DefectValue d;
    Mat x = psi;
    for (int j = 0; j < qq; ++j) {
        d.H.push_back(quantum_entropy_pressure(quantum_measure(x.col(0), q, U, n0, dir)).H);
        x = apply_power(U, x, dir == Direction::Forward ? n0 : -n0);
    }
    for (int j = 1; j < qq; ++j) d.D += d.H[std::size_t(j)] - d.H[0];
    d.D /= qq;
    return d;
}

struct FbarTable {
    int n0 = 0, q = 0;
    Direction direction = Direction::Forward;
    std::vector<double> Fbar;
    double max_identity_residual = 0.0;
    double max_imag_residue = 0.0;
    double sum() const {
        double s = 0;
        for (double f : Fbar) s += f;
        return s;
    }
    double max_abs() const {
        double m = 0;
        for (double f : Fbar) m = std::max(m, std::abs(f));
        return m;
    }
};

// Fbar(beta) = q^{-1} sum_{j<q} F1(beta, j n0). The last term reads words up to time q n0.
inline FbarTable averaged_Fbar(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, double theta0,
                               int n0, int qq, Direction dir = Direction::Forward) {
    if (qq < 1) throw Error("BadLength", "q must be >= 1");
    check_ehrenfest(q, double(qq) * n0, "q n0");
    FbarTable t;
    t.n0 = n0;
    t.q = qq;
    t.direction = dir;
    t.Fbar.assign(static_cast<std::size_t>(ipow(q.K(), n0)), 0.0);
    for (int j = 1; j < qq; ++j) {  // j = 0 contributes F1 = 0
        const auto f = compute_F1_table(psi, q, U, theta0, n0, j * n0, dir);
        for (std::size_t b = 0; b < t.Fbar.size(); ++b) t.Fbar[b] += f.F1[b];
        t.max_identity_residual = std::max(t.max_identity_residual, f.identity_residual);
        t.max_imag_residue = std::max(t.max_imag_residue, f.imag_residue);
    }
    for (double& v : t.Fbar) v /= qq;
    return t;
}

struct SubadditivityResult {
    double entropy_residual = 0.0;   // H^{n+n0}(psi) - H^n(psi) - H^{n0}(U^n psi)
    double pressure_residual = 0.0;  // same with Jacobian weights
    double entropy_tolerance = 0.0;
    double pressure_tolerance = 0.0;
};

// Tolerance: H(p) <= H(p_a) + H(p_b) + max(0, m log m) for the joint table p of
// mass m, plus sum eta(|Delta|) for the discrepancies between marginals and the
// reference tables.
inline SubadditivityResult subadditivity_residual(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U,
                                                  int n, int n0, double lambda = 0.0) {
    check_ehrenfest(q, n + n0, "n + n0");
    const auto joint = quantum_measure(psi, q, U, n + n0, Direction::Forward);
    const auto head = quantum_measure(psi, q, U, n, Direction::Forward);
    const auto tail = quantum_measure(apply_power(U, psi, n).col(0), q, U, n0, Direction::Forward);
    const std::size_t Wb = tail.table.size();
    std::vector<double> ma(head.table.size(), 0.0), mb(Wb, 0.0);
    for (std::size_t i = 0; i < joint.table.size(); ++i) {
        ma[i / Wb] += joint.table[i];
        mb[i % Wb] += joint.table[i];
    }
    auto eta_tol = [](const std::vector<double>& x, const std::vector<double>& y, double& signed_sum) {
        double t = 0;
        signed_sum = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = std::abs(x[i] - y[i]);
            signed_sum += x[i] - y[i];
            t += d <= 0.5 ? eta(d) : 1.0 + d;  // eta is only monotone on [0, 1/e]
        }
        return t;
    };
    double sa = 0, sb = 0;
    const double ta = eta_tol(ma, head.table, sa), tb = eta_tol(mb, tail.table, sb);
    const double m = joint.mass;
    SubadditivityResult r;
    const double Hj = quantum_entropy_pressure(joint).H;
    const double Ha = quantum_entropy_pressure(head).H;
    const double Hb = quantum_entropy_pressure(tail).H;
    r.entropy_residual = Hj - Ha - Hb;
    r.entropy_tolerance = ta + tb + std::max(0.0, m * std::log(m)) + 1e-12;
    // weights e^{k lambda / 2}: p = H - k lambda mass
    r.pressure_residual = (Hj - (n + n0) * lambda * joint.mass) - (Ha - n * lambda * head.mass) -
                          (Hb - n0 * lambda * tail.mass);
    r.pressure_tolerance = r.entropy_tolerance + lambda * (n * std::abs(sa) + n0 * std::abs(sb));
    return r;
}

// ---------------------------------------------------------------- entropic uncertainty

namespace detail {

inline double spectral_norm(const Mat& A) {
    if (A.size() == 0) return 0.0;
    // Gram matrix on the smaller side
    const Mat G = A.rows() >= A.cols() ? Mat(A.adjoint() * A) : Mat(A * A.adjoint());
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (G + G.adjoint()), Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

inline double pressure_of(const std::vector<double>& mu, const std::vector<double>& w) {
    double p = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) p += eta(mu[i]) - mu[i] * std::log(w[i] * w[i]);
    return p;
}

}  // namespace detail

struct EUPResult {
    double lhs = 0.0;
    double p_rho = 0.0, p_tau = 0.0;
    double c_cone = 0.0;
    double R = 0.0;           // largest hypothesis defect
    double V = 1.0;
    std::size_t I = 0, J = 0;
    double rhs = 0.0;         // -2 log(c_cone + 3|I| V^2 R)
    double rhs_sharp = 0.0;   // -2 log c_cone
    bool small_remainder_regime = false;
    bool satisfied = false;
    std::vector<std::pair<std::string, double>> defects;
};

struct EUPOptions {
    double V = 0.0;                         // 0: smallest V admitting the weights
    std::optional<double> remainder_bound;  // contract on R; exceeding it throws
};

namespace detail {

inline void finish_eup(EUPResult& r, const EUPOptions& opt) {
    r.R = 0.0;
    const std::pair<std::string, double>* worst = nullptr;
    for (const auto& d : r.defects)
        if (d.second > r.R) {
            r.R = d.second;
            worst = &d;
        }
    if (opt.remainder_bound && r.R > *opt.remainder_bound + 1e-12)
        throw Error("NormContractViolated", worst->first + " = " + std::to_string(worst->second) +
                                                " exceeds R = " + std::to_string(*opt.remainder_bound));
    r.lhs = r.p_rho + r.p_tau;
    r.rhs = -2.0 * std::log(r.c_cone + 3.0 * double(r.I) * r.V * r.V * r.R);
    r.rhs_sharp = -2.0 * std::log(r.c_cone);
    const double n = double(std::max(r.I, r.J));
    r.small_remainder_regime = r.R <= 1.0 / (n * n * r.V * r.V);
    r.satisfied = r.lhs >= r.rhs - 1e-8;
}

inline double weight_bound(const std::vector<double>& v, const std::vector<double>& w, double V) {
    double need = 1.0;
    for (const auto* ws : {&v, &w})
        for (double x : *ws) {
            if (!(x > 0)) throw Error("WeightOutOfRange", "weights must be positive");
            need = std::max({need, x, 1.0 / x});
        }
    if (V <= 0) return need;
    if (need > V * (1 + 1e-12)) throw Error("WeightOutOfRange", "weight outside [1/V, V], V = " + std::to_string(V));
    return V;
}

}  // namespace detail

// Dense evaluation with exact singular values; intended for dimensions up to a few hundred.
inline EUPResult eup_verify(const std::vector<Mat>& rho, const std::vector<Mat>& tau, const std::vector<double>& v,
                            const std::vector<double>& w, const Mat& Sc1, const Mat& Sc2, const Vec& psi,
                            const EUPOptions& opt = {}) {
    if (rho.size() != v.size() || tau.size() != w.size()) throw Error("TableMismatch", "one weight per operator");
    const Eigen::Index N = psi.size();
    const Mat Id = Mat::Identity(N, N);
    EUPResult r;
    r.I = rho.size();
    r.J = tau.size();
    r.V = detail::weight_bound(v, w, opt.V);

    std::vector<double> mr, mt;
    Mat Sr = Mat::Zero(N, N), St = Mat::Zero(N, N);
    for (const auto& P : rho) {
        mr.push_back((P * psi).squaredNorm());
        Sr += P.adjoint() * P;
    }
    for (const auto& P : tau) {
        mt.push_back((P * psi).squaredNorm());
        St += P.adjoint() * P;
    }
    r.p_rho = detail::pressure_of(mr, v);
    r.p_tau = detail::pressure_of(mt, w);

    double cross = 0;
    for (const auto& P : rho) cross = std::max(cross, detail::spectral_norm((Sc2 - Id) * P * Sc1));
    r.defects = {{"||S_rho|| - 1", detail::spectral_norm(Sr) - 1.0},
                 {"||S_tau|| - 1", detail::spectral_norm(St) - 1.0},
                 {"||S_c1|| - 1", detail::spectral_norm(Sc1) - 1.0},
                 {"||S_c2|| - 1", detail::spectral_norm(Sc2) - 1.0},
                 {"max ||(S_c2 - Id) rho_i S_c1||", cross},
                 {"||(S_rho - Id) S_c1||", detail::spectral_norm((Sr - Id) * Sc1)},
                 {"||(S_tau - Id) S_c1||", detail::spectral_norm((St - Id) * Sc1)},
                 {"||(Id - S_c1) psi||", ((Id - Sc1) * psi).norm()}};

    for (std::size_t i = 0; i < rho.size(); ++i)
        for (std::size_t j = 0; j < tau.size(); ++j)
            r.c_cone = std::max(r.c_cone, v[i] * w[j] * detail::spectral_norm(tau[j] * rho[i].adjoint() * Sc2));
    detail::finish_eup(r, opt);
    return r;
}

// The instantiation used for log modes: tau = {Pi_alpha}, rho_beta = U^n Pi_beta^dag U^{-n}
// (the backward refined quasiprojector), weights e^{n lambda/2}, S_c1 = chi^(0), S_c2 = chi^(n).
// Every norm is taken through the low-rank cutoff factors, so the cost stays at K^n tree walks.
struct EUPInstance {
    EUPResult result;
    int n = 0;
    int rank0 = 0, rankn = 0;
};

inline EUPInstance eup_instantiation(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U,
                                     const SpectralData& sd, double theta0, int n, const EUPOptions& opt = {}) {
    check_ehrenfest(q, n, "n");
    const int N = q.grid.N;
    const int K = q.K();
    const std::size_t W = static_cast<std::size_t>(ipow(K, n));
    const auto chi0 = spectral_cutoff_factor(sd, theta0, 0, q.delta_long);
    const auto chin = spectral_cutoff_factor(sd, theta0, n, q.delta_long);
    EUPInstance out;
    out.n = n;
    out.rank0 = int(chi0.V.cols());
    out.rankn = int(chin.V.cols());
    EUPResult& r = out.result;
    r.I = r.J = W;
    const double wgt = std::exp(0.5 * n * q.lambda);
    r.V = detail::weight_bound({wgt}, {wgt}, opt.V);

    const auto fwd = quantum_measure(psi, q, U, n, Direction::Forward);
    const auto bwd = quantum_measure(psi, q, U, n, Direction::Backward);
    const std::vector<double> ws(W, wgt);
    r.p_tau = detail::pressure_of(fwd.table, ws);
    r.p_rho = detail::pressure_of(bwd.table, ws);

    // Gram operators
    const Mat Ud = U.to_dense();
    const Mat Id = Mat::Identity(N, N);
    const Mat St = refined_gram(q, Ud, n);
    const Mat Sr = Ud * refined_gram(q, Ud.adjoint(), n) * Ud.adjoint();

    auto chi_apply = [](const CutoffFactor& f, const Mat& x) -> Mat {
        if (f.V.cols() == 0) return Mat::Zero(x.rows(), x.cols());
        return f.V * (f.c.cast<cplx>().asDiagonal() * (f.V.adjoint() * x));
    };
    // S_c1 = V0 diag(c0) V0^dag, so ||X S_c1|| = ||X V0 diag(c0)||
    const Mat Y0 = chi0.V * chi0.c.cast<cplx>().asDiagonal();
    const Mat Yn = chin.V * chin.c.cast<cplx>().asDiagonal();

    std::vector<double> cross(W, 0.0);
    if (Y0.cols() > 0)
        word_tree(q, U, Y0, n, Direction::Backward, [&](std::int64_t i, const Mat& leaf) {
            const Mat x = apply_power(U, leaf, n);  // rho_beta Y0
            cross[std::size_t(i)] = detail::spectral_norm(chi_apply(chin, x) - x);
        });
    const double norm_c0 = chi0.c.size() ? chi0.c.maxCoeff() : 0.0;
    const double norm_cn = chin.c.size() ? chin.c.maxCoeff() : 0.0;
    r.defects = {{"||S_rho|| - 1", hermitian_norm(Sr) - 1.0},
                 {"||S_tau|| - 1", hermitian_norm(St) - 1.0},
                 {"||S_c1|| - 1", norm_c0 - 1.0},
                 {"||S_c2|| - 1", norm_cn - 1.0},
                 {"max ||(S_c2 - Id) rho_i S_c1||", *std::max_element(cross.begin(), cross.end())},
                 {"||(S_rho - Id) S_c1||", detail::spectral_norm((Sr - Id) * Y0)},
                 {"||(S_tau - Id) S_c1||", detail::spectral_norm((St - Id) * Y0)},
                 {"||(Id - S_c1) psi||", (psi - chi_apply(chi0, psi)).norm()}};

    // c_cone = e^{n lambda} max ||Pi_alpha U^n Pi_beta U^{-n} chi^(n)||
    double cone = 0;
    if (Yn.cols() > 0) {
        std::vector<Mat> X(W);
        word_tree(q, U, apply_power(U, Yn, -n), n, Direction::Forward,
                  [&](std::int64_t i, const Mat& leaf) { X[std::size_t(i)] = U.apply(leaf); });
        std::vector<double> best(W, 0.0);
        for (std::size_t b = 0; b < W; ++b) {
            std::vector<double> nb(W, 0.0);
            word_tree(q, U, X[b], n, Direction::Forward,
                      [&](std::int64_t i, const Mat& leaf) { nb[std::size_t(i)] = detail::spectral_norm(leaf); });
            best[b] = *std::max_element(nb.begin(), nb.end());
        }
        cone = *std::max_element(best.begin(), best.end());
    }
    r.c_cone = wgt * wgt * cone;
    detail::finish_eup(r, opt);
    return out;
}

// ---------------------------------------------------------------- dispersive estimate

struct DispersiveSample {
    int n = 0;
    Word alpha, beta;
    double norm = 0.0;
    double bound_ratio = 0.0;  // norm / (sqrt(N) J(alpha)^{-1/2} J(beta)^{-1/2})
};

// ||Pi_alpha U^n Pi_beta U^{-n} chi^(n)||; n = 0 reads the single-symbol product Pi_a Pi_b chi.
inline DispersiveSample dispersive_ratio(const QuasiProjectorSet& q, const TorusOperator& U, const Word& alpha,
                                         const Word& beta, int n, const CutoffFactor& chi, const CatMapSpec& cat) {
    check_ehrenfest(q, n, "n");
    const std::size_t len = std::size_t(std::max(n, 1));
    if (alpha.size() != len || beta.size() != len) throw Error("BadWord", "words must have length max(n, 1)");
    DispersiveSample s;
    s.n = n;
    s.alpha = alpha;
    s.beta = beta;
    if (chi.V.cols() > 0) {
        auto proj = [&](int k, const Mat& x) -> Mat { return q.d[std::size_t(k)].asDiagonal() * x; };
        Mat Y = chi.V * chi.c.cast<cplx>().asDiagonal();
        if (n == 0) {
            Y = proj(alpha[0], proj(beta[0], Y));
        } else {
            Y = proj(beta[0], apply_power(U, Y, -n));
            for (int i = 1; i < n; ++i) Y = proj(beta[std::size_t(i)], U.apply(Y));
            Y = proj(alpha[0], U.apply(Y));  // U^{n-1} Pi_beta U^{-n} chi, then one more step
            for (int i = 1; i < n; ++i) Y = proj(alpha[std::size_t(i)], U.apply(Y));
        }
        s.norm = detail::spectral_norm(Y);
    }
    const double J = std::exp(n * lyapunov(cat));
    s.bound_ratio = s.norm * J / std::sqrt(double(q.grid.N));
    return s;
}

// alpha = itinerary of a Lebesgue point z, beta = itinerary of A^{-n} z
inline std::vector<std::pair<Word, Word>> typical_word_pairs(const CatMapSpec& cat, const PartitionSpec& part, int n,
                                                             std::size_t count, std::uint64_t seed) {
    std::vector<std::pair<Word, Word>> out;
    const int len = std::max(n, 1);
    for (const auto& z : lebesgue_points(count, seed)) {
        std::array<double, 2> y = z;
        for (int j = 0; j < n; ++j) y = cat.apply_inverse(y[0], y[1]);
        out.emplace_back(itinerary(cat, part, z, len), itinerary(cat, part, y, len));
    }
    return out;
}

// ---------------------------------------------------------------- regions and defect terms

enum class Region { LpB, LpBc, LcpB, LcpBc, LmB, LcmB, LmBc, LcmBc };

inline const char* region_name(Region r) {
    switch (r) {
        case Region::LpB: return "L+B";
        case Region::LpBc: return "L+Bc";
        case Region::LcpB: return "Lc+B";
        case Region::LcpBc: return "Lc+Bc";
        case Region::LmB: return "L-B";
        case Region::LcmB: return "Lc-B";
        case Region::LmBc: return "L-Bc";
        case Region::LcmBc: return "Lc-Bc";
    }
    return "?";
}

// Words with Fbar >= 0 are the "+" side. The three negative regions other than
// Lc-Bc share the D5 bound, so eight labels collapse to six word sets.
struct RegionDecomposition {
    int n0 = 0, K = 0;
    std::vector<Region> label;
    std::array<std::vector<std::int64_t>, 6> sets;  // D1 .. D6 regions
    static int term_of(Region r) {
        switch (r) {
            case Region::LpB: return 0;
            case Region::LpBc: return 1;
            case Region::LcpB: return 2;
            case Region::LcpBc: return 3;
            case Region::LcmBc: return 5;
            default: return 4;
        }
    }
};

inline RegionDecomposition region_decompose(const std::vector<double>& fbar, const SMBSplit& smb) {
    const auto W = static_cast<std::size_t>(ipow(smb.K, smb.n0));
    if (fbar.size() != W)
        throw Error("TableMismatch", "Fbar table has " + std::to_string(fbar.size()) + " words, SMB split " +
                                         std::to_string(W));
    RegionDecomposition d;
    d.n0 = smb.n0;
    d.K = smb.K;
    d.label.resize(W);
    for (std::size_t i = 0; i < W; ++i) {
        const auto w = std::int64_t(i);
        const bool L = smb.in_L(w), B = smb.in_B(w), plus = fbar[i] >= 0;
        Region r;
        if (plus) r = L ? (B ? Region::LpB : Region::LpBc) : (B ? Region::LcpB : Region::LcpBc);
        else r = L ? (B ? Region::LmB : Region::LmBc) : (B ? Region::LcmB : Region::LcmBc);
        d.label[i] = r;
        d.sets[std::size_t(RegionDecomposition::term_of(r))].push_back(w);
    }
    return d;
}

struct DefectTerms {
    std::array<double, 6> D{};
    double R = 0.0;                  // D2 + D3 + D4
    double D1_bound = 0.0;           // (a+b)(H_max + delta/5) n0 sum_{L+B} Fbar
    double D1_bound_envelope = 0.0;  // same with sum Fbar replaced by 2 eps/lambda + (eps/lambda)^2
    double sum_fbar_D1 = 0.0;
    int proxy_fallbacks = 0;         // words where the classical proxy vanished
};

// mu_proxy: classical cylinder table of the limit measure at length n0;
// quantum: the finite-N quantum table, used where the proxy is exactly zero.
inline DefectTerms defect_bound_terms(const std::vector<double>& fbar, const RegionDecomposition& reg,
                                      const std::vector<double>& mu_proxy, const std::vector<double>& quantum,
                                      const SMBSplit& smb, double epsilon, double lambda) {
    const auto W = static_cast<std::size_t>(ipow(smb.K, smb.n0));
    if (reg.label.size() != W) throw Error("MissingRegion", "region table does not cover the word space");
    if (fbar.size() != W || mu_proxy.size() != W || quantum.size() != W)
        throw Error("TableMismatch", "tables over different word spaces");
    std::size_t covered = 0;
    for (const auto& s : reg.sets) covered += s.size();
    if (covered != W) throw Error("MissingRegion", "regions cover " + std::to_string(covered) + " of " +
                                                       std::to_string(W) + " words");

    const double n0 = smb.n0, a = smb.a, b = smb.b, dl = smb.delta;
    auto comp = [](const CylinderTable& t, std::size_t i) { return t.value.empty() ? 0.0 : t.value[i]; };
    DefectTerms t;
    auto neglog = [&](double m, std::size_t i) {
        if (m > 0) return -std::log(m);
        ++t.proxy_fallbacks;
        return quantum[i] > 0 ? -std::log(quantum[i]) : 0.0;
    };
    for (int k = 0; k < 6; ++k) {
        double s = 0;
        for (std::int64_t w : reg.sets[std::size_t(k)]) {
            const auto i = std::size_t(w);
            const double F = fbar[i];
            switch (k) {
                case 0:
                    s += neglog(mu_proxy[i], i) * F;
                    t.sum_fbar_D1 += F;
                    break;
                case 1:
                    s += neglog(a * std::exp(-(smb.H0 - 2 * dl / 5) * n0) + b * comp(smb.mu_H, i), i) * F;
                    break;
                case 2:
                    s += neglog(a * comp(smb.mu_L, i) + b * std::exp(-(smb.H_max + dl / 5) * n0), i) * F;
                    break;
                case 3: s += neglog(mu_proxy[i], i) * F; break;
                case 4: s += std::log(1 - b + b * std::exp(-n0 * (smb.H0 - dl / 3))) * (-F); break;
                case 5:
                    s += std::log(1 - b + std::max(b * std::exp(-n0 * (smb.H0 - dl / 3)), smb.eps_bar / 3)) * (-F);
                    break;
            }
        }
        t.D[std::size_t(k)] = s;
    }
    t.D[4] = std::min(t.D[4], 0.0);
    t.D[5] = std::min(t.D[5], 0.0);
    t.R = t.D[1] + t.D[2] + t.D[3];
    const double c = (a + b) * (smb.H_max + dl / 5) * n0;
    t.D1_bound = c * t.sum_fbar_D1;
    const double e = epsilon / lambda;
    t.D1_bound_envelope = c * (2 * e + e * e);
    return t;
}

// ---------------------------------------------------------------- per-run defect bundle

struct DefectReport {
    int n0 = 0;
    TimeSplit split;
    F1Table F1;                      // at n = (q-1) n0, forward
    F1Table F1_bwd;
    std::vector<double> G;           // at the same n
    std::vector<double> phi_norms;   // ||Phi[t]||, t = 0 .. q n0
    double F2 = 0.0;
    DefectValue D, D_bwd;
    FbarTable Fbar, Fbar_bwd;
};

inline DefectReport defect_report(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, double theta0,
                                  int n0) {
    DefectReport r;
    r.n0 = n0;
    r.split = split_time(two_ehrenfest_floor(q), n0);
    if (r.split.q < 1)
        throw Error("WordTooLong", "n0 = " + std::to_string(n0) + " exceeds the Ehrenfest cap 2T_E = " +
                                       std::to_string(two_ehrenfest(q)));
    const int qq = r.split.q;
    const int nF = (qq - 1) * n0;
    r.F1 = compute_F1_table(psi, q, U, theta0, n0, nF, Direction::Forward, true);
    r.F1_bwd = compute_F1_table(psi, q, U, theta0, n0, nF, Direction::Backward);
    r.G = shift_residual_G(psi, q, U, nF, n0);
    for (int t = 0; t <= qq * n0; ++t) r.phi_norms.push_back(compute_phi(psi, U, theta0, t).norm());
    r.F2 = compute_F2(r.F1.F1, std::vector<double>(r.F1.F1.size(), std::exp(0.5 * n0 * q.lambda)));
    r.D = defect_D(psi, q, U, n0, qq, Direction::Forward);
    r.D_bwd = defect_D(psi, q, U, n0, qq, Direction::Backward);
    r.Fbar = averaged_Fbar(psi, q, U, theta0, n0, qq, Direction::Forward);
    r.Fbar_bwd = averaged_Fbar(psi, q, U, theta0, n0, qq, Direction::Backward);
    return r;
}

// ---------------------------------------------------------------- theorem report

struct ReportItem {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
};

struct TheoremInputs {
    std::optional<double> lambda;          // integral of log J^u against the limit measure, per step
    std::optional<Estimate> hks_proxy;     // entropy-rate proxy of the limit measure
    std::optional<double> epsilon;
    std::optional<SMBSplit> smb;
    std::optional<FbarTable> fbar, fbar_bwd;
    std::optional<DefectTerms> terms, terms_bwd;
    double fbar_tolerance = 0.0;           // finite-N tolerance of sum Fbar (mass conservation)
};

struct TheoremReport {
    double lhs = 0.0, lhs_stderr = 0.0;
    double rhs = 0.0, rhs_akn = 0.0, rhs_floor = 0.0;
    double tolerance = 0.0;
    bool satisfied = false;
    std::vector<ReportItem> items;
};

inline TheoremReport theorem_report(const TheoremInputs& in) {
    std::vector<std::string> missing;
    if (!in.lambda) missing.push_back("lambda");
    if (!in.hks_proxy) missing.push_back("entropy-rate proxy");
    if (!in.epsilon) missing.push_back("epsilon");
    if (!in.smb) missing.push_back("smb split");
    if (!in.fbar) missing.push_back("forward Fbar");
    if (!in.fbar_bwd) missing.push_back("backward Fbar");
    if (!in.terms) missing.push_back("forward defect terms");
    if (!in.terms_bwd) missing.push_back("backward defect terms");
    if (!missing.empty()) {
        std::string s;
        for (const auto& m : missing) s += (s.empty() ? "" : ", ") + m;
        throw Error("IncompleteInputs", "missing stages: " + s);
    }
    const double lam = *in.lambda, eps = *in.epsilon;
    const auto& smb = *in.smb;
    TheoremReport r;
    r.lhs = in.hks_proxy->value;
    r.lhs_stderr = in.hks_proxy->stderr_;
    const double sumF = in.fbar->sum() + in.fbar_bwd->sum();
    const double fterm = 0.5 * std::abs(lam * sumF);
    const double e = eps / lam;
    const double eterm = smb.H_max * (2 * e + e * e);
    const double rterm = 0.5 * (in.terms->R + in.terms_bwd->R) / smb.n0;
    r.rhs_akn = lam - 0.5 * lam - fterm - eterm - rterm;
    r.rhs_floor = smb.b * smb.H0;
    r.rhs = std::max(r.rhs_akn, r.rhs_floor);
    const double ftol = 0.5 * lam * in.fbar_tolerance;
    // the right side is evaluated from measured tables; only the Monte-Carlo proxy carries noise
    r.tolerance = 3.0 * r.lhs_stderr;
    r.satisfied = r.lhs >= r.rhs - r.tolerance;
    r.items = {{"lhs_entropy_rate_proxy", r.lhs, 3.0 * r.lhs_stderr},
               {"integral_log_Ju", lam, 0.0},
               {"half_dim_lambda", 0.5 * lam, 0.0},
               {"fbar_term", fterm, ftol},
               {"epsilon_term", eterm, 0.0},
               {"remainder_term", rterm, 0.0},
               {"R_forward", in.terms->R, 0.0},
               {"R_backward", in.terms_bwd->R, 0.0},
               {"rhs_akn", r.rhs_akn, ftol},
               {"rhs_akn_defect_free", lam - 0.5 * lam - eterm, 0.0},
               {"rhs_floor_bH0", r.rhs_floor, 0.0},
               {"rhs", r.rhs, ftol},
               {"a", smb.a, 0.0},
               {"b", smb.b, 0.0},
               {"H0", smb.H0, 0.0},
               {"H_max", smb.H_max, 0.0}};
    return r;
}

}  // namespace qcat
