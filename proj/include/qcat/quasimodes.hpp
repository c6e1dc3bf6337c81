#pragma once

#include "partition.hpp"

#include <Eigen/Eigenvalues>

#include <optional>
#include <variant>

namespace qcat {

enum class SpectralMethod { Dense, PeriodProjection, Auto };

inline const char* method_name(SpectralMethod m) {
    switch (m) {
        case SpectralMethod::Dense: return "dense-unitary-eig";
        case SpectralMethod::PeriodProjection: return "period-projection";
        default: return "auto";
    }
}

// U v_j = e^{i theta_j} v_j with orthonormal v_j (columns of vectors).
struct SpectralData {
    RVec angles;
    Mat vectors;
    SpectralMethod method = SpectralMethod::Dense;
    int period = 0;        // quantum period T (period projection only)
    double period_phase = 0.0;
    double max_residual = 0.0;
    double orthonormality = 0.0;

    int dim() const { return int(vectors.rows()); }
};

namespace detail {

inline Mat dense_power(const Mat& U, std::int64_t p) {
    Mat r = Mat::Identity(U.rows(), U.cols());
    Mat b = U;
    while (p > 0) {
        if (p & 1) r = r * b;
        p >>= 1;
        if (p) b = b * b;
    }
    return r;
}

// smallest t with A^t = Id mod N
inline std::int64_t classical_period(const CatMapSpec& cat, int N, std::int64_t cap) {
    std::int64_t a = mod(cat.a, N), b = mod(cat.b, N), c = mod(cat.c, N), d = mod(cat.d, N);
    std::int64_t pa = a, pb = b, pc = c, pd = d;
    for (std::int64_t t = 1; t <= cap; ++t) {
        if (mod(pa - 1, N) == 0 && pb == 0 && pc == 0 && mod(pd - 1, N) == 0) return t;
        const std::int64_t na = mod(pa * a + pb * c, N), nb = mod(pa * b + pb * d, N);
        const std::int64_t nc = mod(pc * a + pd * c, N), nd = mod(pc * b + pd * d, N);
        pa = na;
        pb = nb;
        pc = nc;
        pd = nd;
    }
    return 0;
}

// quantum period T <= cap with U^T = e^{i phi} Id, or nullopt
inline std::optional<std::pair<int, double>> quantum_period(const Mat& U, const CatMapSpec& cat, int cap, double tol) {
    const int N = int(U.rows());
    const std::int64_t tc = classical_period(cat, N, cap);
    if (tc == 0) return std::nullopt;
    for (std::int64_t T : {tc, 2 * tc, 4 * tc}) {
        if (T > cap) break;
        const Mat P = dense_power(U, T);
        const cplx z = P.trace() / double(N);
        if (std::abs(std::abs(z) - 1.0) > tol) continue;
        const cplx ph = z / std::abs(z);
        if ((P - ph * Mat::Identity(N, N)).norm() < tol) return std::make_pair(int(T), std::arg(ph));
    }
    return std::nullopt;
}

inline void finalize(SpectralData& sd, const Mat& U) {
    for (Eigen::Index j = 0; j < sd.angles.size(); ++j) sd.angles(j) = wrap_angle(sd.angles(j));
    const Mat R = U * sd.vectors - sd.vectors * sd.angles.unaryExpr([](double t) { return std::polar(1.0, t); })
                                                      .asDiagonal();
    sd.max_residual = R.colwise().norm().maxCoeff();
    sd.orthonormality = (sd.vectors.adjoint() * sd.vectors - Mat::Identity(sd.dim(), sd.dim())).norm();
}

inline SpectralData dense_decompose(const Mat& U) {
    Eigen::ComplexSchur<Mat> cs(U);
    SpectralData sd;
    sd.method = SpectralMethod::Dense;
    sd.vectors = cs.matrixU();
    const auto& T = cs.matrixT();
    sd.angles.resize(T.rows());
    for (Eigen::Index j = 0; j < T.rows(); ++j) sd.angles(j) = std::arg(T(j, j));
    finalize(sd, U);
    return sd;
}

// P_j = (1/T) sum_t e^{-i theta_j t} U^t for occupied theta_j = (phi + 2 pi j)/T;
// an orthonormal basis of each range from QR of P_j G.
inline SpectralData period_decompose(const Mat& U, int T, double phi) {
    const int N = int(U.rows());
    std::vector<cplx> traces(static_cast<std::size_t>(T));
    {
        Mat P = Mat::Identity(N, N);
        for (int t = 0; t < T; ++t) {
            traces[std::size_t(t)] = P.trace();
            P = U * P;
        }
    }
    std::vector<int> occupied, mult;
    for (int j = 0; j < T; ++j) {
        const double th = (phi + kTwoPi * j) / T;
        cplx s = 0;
        for (int t = 0; t < T; ++t) s += std::polar(1.0, -th * t) * traces[std::size_t(t)];
        const int m = int(std::lround(s.real() / T));
        if (m > 0) {
            occupied.push_back(j);
            mult.push_back(m);
        }
    }
    std::vector<Mat> proj(occupied.size(), Mat::Zero(N, N));
    Mat P = Mat::Identity(N, N);
    for (int t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < occupied.size(); ++i) {
            const double th = (phi + kTwoPi * occupied[i]) / T;
            proj[i] += std::polar(1.0, -th * t) * P;
        }
        P = U * P;
    }
    SpectralData sd;
    sd.method = SpectralMethod::PeriodProjection;
    sd.period = T;
    sd.period_phase = phi;
    int total = 0;
    for (int m : mult) total += m;
    if (total != N) throw Error("ToleranceNotMet", "eigenprojector ranks sum to " + std::to_string(total));
    sd.vectors.resize(N, N);
    sd.angles.resize(N);
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> g;
    int col = 0;
    for (std::size_t i = 0; i < occupied.size(); ++i) {
        proj[i] /= double(T);
        Mat G(N, mult[i]);
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < mult[i]; ++b) G(a, b) = cplx(g(rng), g(rng));
        Eigen::HouseholderQR<Mat> qr(proj[i] * G);
        const Mat Q = qr.householderQ() * Mat::Identity(N, mult[i]);
        sd.vectors.middleCols(col, mult[i]) = Q;
        sd.angles.segment(col, mult[i]).setConstant((phi + kTwoPi * occupied[i]) / T);
        col += mult[i];
    }
    finalize(sd, U);
    return sd;
}

}  // namespace detail

struct SpectralOptions {
    SpectralMethod method = SpectralMethod::Auto;
    double tol = 1e-8;
    int period_cap_factor = 8;  // period projection only when T <= factor * N
    int auto_max_dim = 128;     // and N <= this in auto mode
};

inline SpectralData spectral_decompose(const TorusOperator& U, const CatMapSpec& cat, const SpectralOptions& opt = {}) {
    const Mat Ud = U.to_dense();
    const int N = int(Ud.rows());
    SpectralData sd;
    const bool try_period = opt.method == SpectralMethod::PeriodProjection ||
                            (opt.method == SpectralMethod::Auto && N <= opt.auto_max_dim);
    bool done = false;
    if (try_period) {
        const auto per = detail::quantum_period(Ud, cat, opt.period_cap_factor * N, opt.tol);
        if (per) {
            sd = detail::period_decompose(Ud, per->first, per->second);
            done = true;
        } else if (opt.method == SpectralMethod::PeriodProjection) {
            throw Error("PeriodNotFound", "no quantum period up to " + std::to_string(opt.period_cap_factor * N));
        }
    }
    if (!done) sd = detail::dense_decompose(Ud);
    if (sd.max_residual > opt.tol || sd.orthonormality > opt.tol)
        throw Error("ToleranceNotMet", "eigen residual " + std::to_string(sd.max_residual));
    return sd;
}

struct UniformCoefficients {};
struct RandomCoefficients {
    std::uint64_t seed = 1;
};
using CustomCoefficients = std::vector<cplx>;
using CoeffRule = std::variant<UniformCoefficients, RandomCoefficients, CustomCoefficients>;

struct LogMode {
    Vec state;
    double theta0 = 0.0;
    double epsilon = 0.0;
    double halfwidth = 0.0;            // epsilon / (2 log N)
    std::vector<int> indices;          // in-window eigenvector columns
    std::vector<cplx> coefficients;
    double defect = 0.0;               // ||(U - e^{i theta0}) psi||
};

inline double window_halfwidth(int N, double epsilon) { return epsilon / (2.0 * std::log(double(N))); }

inline LogMode construct_log_mode(const SpectralData& sd, double theta0, double epsilon, const CoeffRule& rule = {}) {
    if (!(epsilon > 0)) throw Error("BadEpsilon", "epsilon must be positive");
    LogMode m;
    m.theta0 = theta0;
    m.epsilon = epsilon;
    m.halfwidth = window_halfwidth(sd.dim(), epsilon);
    double nearest = 1e9;
    for (Eigen::Index j = 0; j < sd.angles.size(); ++j) {
        const double d = angle_dist(sd.angles(j), theta0);
        nearest = std::min(nearest, d);
        if (d <= m.halfwidth) m.indices.push_back(int(j));
    }
    if (m.indices.empty())
        throw Error("EmptyWindow", "no eigenangle within " + std::to_string(m.halfwidth) +
                                       " of theta0; nearest at distance " + std::to_string(nearest));
    const std::size_t k = m.indices.size();
    if (std::holds_alternative<UniformCoefficients>(rule)) {
        m.coefficients.assign(k, cplx(1.0 / std::sqrt(double(k)), 0.0));
    } else if (const auto* r = std::get_if<RandomCoefficients>(&rule)) {
        std::mt19937_64 rng(detail::splitmix64(r->seed));
        std::normal_distribution<double> g;
        for (std::size_t i = 0; i < k; ++i) m.coefficients.emplace_back(g(rng), g(rng));
    } else {
        m.coefficients = std::get<CustomCoefficients>(rule);
        if (m.coefficients.size() != k)
            throw Error("BadCoefficients", std::to_string(k) + " eigenvectors in window, got " +
                                               std::to_string(m.coefficients.size()) + " coefficients");
    }
    double s = 0;
    for (const auto& c : m.coefficients) s += std::norm(c);
    if (!(s > 0)) throw Error("BadCoefficients", "all coefficients vanish");
    for (auto& c : m.coefficients) c /= std::sqrt(s);
    m.state = Vec::Zero(sd.dim());
    for (std::size_t i = 0; i < k; ++i) m.state += m.coefficients[i] * sd.vectors.col(m.indices[i]);
    m.state /= m.state.norm();
    Vec Uv = Vec::Zero(sd.dim());
    for (std::size_t i = 0; i < k; ++i)
        Uv += m.coefficients[i] * std::polar(1.0, sd.angles(m.indices[i])) * sd.vectors.col(m.indices[i]);
    m.defect = (Uv - std::polar(1.0, theta0) * m.state).norm();
    return m;
}

inline double width_defect(const TorusOperator& U, const Vec& psi, double theta0) {
    return (U.apply(psi) - std::polar(1.0, theta0) * psi).norm();
}

struct ScarredMode {
    Vec state;
    int period = 0;
    int T_avg = 0;
    double theta0 = 0.0;
    double width_proxy = 0.0;  // ||(U - e^{i theta0}) psi||
};

// psi ~ sum_{t=-floor(T/2)}^{T-floor(T/2)} e^{-i theta0 t} U^t |coherent(orbit point)>
inline ScarredMode construct_scarred_mode(const TorusOperator& U, const PlanckGrid& grid, const CatMapSpec& cat,
                                          std::array<double, 2> point, int T_avg, double theta0) {
    const auto orbit = InvariantMeasure::orbit_of(cat, point, 4 * grid.N * grid.N);
    const double cap = 2.0 * std::log(double(grid.N)) / lyapunov(cat);
    if (T_avg < 0 || T_avg > cap)
        throw Error("RegimeViolation", "T_avg = " + std::to_string(T_avg) + " outside [0, 2 log N / lambda]");
    ScarredMode s;
    s.period = int(orbit.points().size());
    s.T_avg = T_avg;
    s.theta0 = theta0;
    const Vec coh = coherent_state(grid, point[0], point[1], default_sigma(grid));
    const int t0 = -(T_avg / 2), t1 = T_avg - T_avg / 2;
    Vec acc = Vec::Zero(grid.N);
    Mat v = apply_power(U, coh, t0);
    for (int t = t0; t <= t1; ++t) {
        acc += std::polar(1.0, -theta0 * t) * v.col(0);
        v = U.apply(v);
    }
    s.state = acc / acc.norm();
    s.width_proxy = width_defect(U, s.state, theta0);
    return s;
}

// chi(x): 1 for x <= e^{-delta/2}, 0 for x >= 1, C-infinity monotone step between
inline double cutoff_profile(double x, double delta) {
    const double a = std::exp(-delta / 2.0);
    if (x <= a) return 1.0;
    if (x >= 1.0) return 0.0;
    const double t = (x - a) / (1.0 - a);
    auto f = [](double s) { return s <= 0 ? 0.0 : std::exp(-1.0 / s); };
    return 1.0 - f(t) / (f(t) + f(1.0 - t));
}

// Eigenvalue support of chi^(n): columns V of eigenvectors with nonzero multiplier c.
struct CutoffFactor {
    Mat V;
    RVec c;
    double width = 0.0;     // outer angular radius w0 e^{n delta}
    double plateau = 0.0;   // e^{-delta/2} * width
};

inline CutoffFactor spectral_cutoff_factor(const SpectralData& sd, double theta0, int n, double delta_long) {
    const int N = sd.dim();
    if (!(delta_long > 0 && delta_long < 0.5)) throw Error("RegimeViolation", "delta_long must lie in (0, 1/2)");
    const double cap = (1.0 / delta_long - 1.0) * std::log(double(N));
    if (n < 0 || n >= cap)
        throw Error("RegimeViolation", "n = " + std::to_string(n) + " not below (1/delta - 1) log N = " +
                                           std::to_string(cap));
    const double w0 = std::pow(double(N), -(1.0 - delta_long));
    CutoffFactor f;
    f.width = w0 * std::exp(n * delta_long);
    f.plateau = std::exp(-delta_long / 2.0) * f.width;
    std::vector<int> cols;
    std::vector<double> vals;
    for (int j = 0; j < N; ++j) {
        const double x = angle_dist(sd.angles(j), theta0) / f.width;
        const double c = cutoff_profile(x, delta_long);
        if (c > 0) {
            cols.push_back(j);
            vals.push_back(c);
        }
    }
    f.V.resize(N, Eigen::Index(cols.size()));
    f.c.resize(Eigen::Index(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
        f.V.col(Eigen::Index(i)) = sd.vectors.col(cols[i]);
        f.c(Eigen::Index(i)) = vals[i];
    }
    return f;
}

inline TorusOperator spectral_cutoff(const SpectralData& sd, double theta0, int n, double delta_long) {
    const auto f = spectral_cutoff_factor(sd, theta0, n, delta_long);
    auto apply = [f](const Mat& x) -> Mat {
        if (f.V.cols() == 0) return Mat::Zero(x.rows(), x.cols());
        return f.V * (f.c.cast<cplx>().asDiagonal() * (f.V.adjoint() * x));
    };
    return TorusOperator::matrix_free(sd.dim(), apply, apply, false, true);
}

}  // namespace qcat
