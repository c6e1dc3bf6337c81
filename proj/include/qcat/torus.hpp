#pragma once

#include "core.hpp"

#include <unsupported/Eigen/FFT>

#include <array>
#include <functional>
#include <random>

namespace qcat {

// Quantum torus of dimension N, hbar = 1/(2 pi N).
struct PlanckGrid {
    int N = 0;
    std::array<double, 2> boundary_angles{0.0, 0.0};

    PlanckGrid() = default;
    explicit PlanckGrid(int n, std::array<double, 2> angles = {0.0, 0.0}) : N(n), boundary_angles(angles) {
        if (n < 2) throw Error("DimensionTooSmall", "N = " + std::to_string(n) + " < 2");
        if (angles[0] != 0.0 || angles[1] != 0.0)
            throw Error("UnsupportedBoundary", "only boundary angles (0,0) are implemented");
    }
    double hbar() const { return 1.0 / (kTwoPi * N); }
    double log_inv_hbar() const { return std::log(kTwoPi * N); }
};

// Hyperbolic element of SL(2,Z): (x, xi) -> (a x + b xi, c x + d xi) mod 1.
struct CatMapSpec {
    std::int64_t a = 2, b = 1, c = 1, d = 1;

    CatMapSpec() = default;
    CatMapSpec(std::int64_t a_, std::int64_t b_, std::int64_t c_, std::int64_t d_) : a(a_), b(b_), c(c_), d(d_) {
        if (a * d - b * c != 1) throw Error("NotSymplectic", "det A must be 1");
    }
    std::int64_t trace() const { return a + d; }
    bool hyperbolic() const { return std::abs(trace()) > 2; }
    CatMapSpec transpose() const { return {a, c, b, d}; }
    CatMapSpec inverse() const { return {d, -b, -c, a}; }

    std::array<double, 2> apply(double x, double y) const {
        double nx = std::fmod(double(a) * x + double(b) * y, 1.0);
        double ny = std::fmod(double(c) * x + double(d) * y, 1.0);
        if (nx < 0) nx += 1.0;
        if (ny < 0) ny += 1.0;
        return {nx, ny};
    }
    std::array<double, 2> apply_inverse(double x, double y) const { return inverse().apply(x, y); }
};

inline double lyapunov(const CatMapSpec& cat) {
    if (!cat.hyperbolic())
        throw Error("NonHyperbolic", "|trace A| = " + std::to_string(std::abs(cat.trace())) + " <= 2");
    const double t = std::abs(double(cat.trace()));
    return std::log((t + std::sqrt(t * t - 4.0)) / 2.0);
}

// State vector with its grid. Library functions take plain vectors; this
// wrapper is what gets exported and carried in reports.
struct QuantumState {
    Vec amplitudes;
    PlanckGrid grid;
    bool normalized = true;
};

// Operator on C^N: dense matrix, diagonal, or a matrix-free block apply.
class TorusOperator {
public:
    enum class Kind { Dense, Diagonal, MatrixFree };
    using BlockFn = std::function<Mat(const Mat&)>;

    TorusOperator() = default;

    static TorusOperator dense(Mat m, bool unitary = false, bool hermitian = false) {
        TorusOperator op;
        op.kind_ = Kind::Dense;
        op.n_ = int(m.rows());
        op.mat_ = std::move(m);
        op.unitary_ = unitary;
        op.hermitian_ = hermitian;
        return op;
    }
    static TorusOperator diagonal(Vec d) {
        TorusOperator op;
        op.kind_ = Kind::Diagonal;
        op.n_ = int(d.size());
        op.hermitian_ = d.imag().cwiseAbs().maxCoeff() == 0.0;
        op.unitary_ = (d.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-14;
        op.diag_ = std::move(d);
        return op;
    }
    static TorusOperator matrix_free(int n, BlockFn apply, BlockFn apply_adjoint, bool unitary = false,
                                     bool hermitian = false) {
        TorusOperator op;
        op.kind_ = Kind::MatrixFree;
        op.n_ = n;
        op.fwd_ = std::move(apply);
        op.adj_ = std::move(apply_adjoint);
        op.unitary_ = unitary;
        op.hermitian_ = hermitian;
        return op;
    }

    int dim() const { return n_; }
    Kind kind() const { return kind_; }
    bool unitary() const { return unitary_; }
    bool hermitian() const { return hermitian_; }
    const Mat& matrix() const { return mat_; }
    const Vec& diag() const { return diag_; }

    Mat apply(const Mat& x) const {
        switch (kind_) {
            case Kind::Dense: return mat_ * x;
            case Kind::Diagonal: return diag_.asDiagonal() * x;
            default: return fwd_(x);
        }
    }
    Mat apply_adjoint(const Mat& x) const {
        switch (kind_) {
            case Kind::Dense: return mat_.adjoint() * x;
            case Kind::Diagonal: return diag_.conjugate().asDiagonal() * x;
            default: return adj_(x);
        }
    }
    Mat to_dense() const {
        if (kind_ == Kind::Dense) return mat_;
        return apply(Mat::Identity(n_, n_));
    }
    TorusOperator adjoint() const {
        switch (kind_) {
            case Kind::Dense: return dense(mat_.adjoint(), unitary_, hermitian_);
            case Kind::Diagonal: return diagonal(diag_.conjugate());
            default: return matrix_free(n_, adj_, fwd_, unitary_, hermitian_);
        }
    }

private:
    Kind kind_ = Kind::Dense;
    int n_ = 0;
    Mat mat_;
    Vec diag_;
    BlockFn fwd_, adj_;
    bool unitary_ = false;
    bool hermitian_ = false;
};

// A·B as a matrix-free operator (B applied first)
inline TorusOperator compose(const TorusOperator& A, const TorusOperator& B) {
    return TorusOperator::matrix_free(
        A.dim(), [A, B](const Mat& x) { return A.apply(B.apply(x)); },
        [A, B](const Mat& x) { return B.apply_adjoint(A.apply_adjoint(x)); }, A.unitary() && B.unitary(), false);
}

// Repeated application of U (p > 0) or U^dag (p < 0); never forms powers.
inline Mat apply_power(const TorusOperator& U, Mat x, int p) {
    for (int i = 0; i < p; ++i) x = U.apply(x);
    for (int i = 0; i < -p; ++i) x = U.apply_adjoint(x);
    return x;
}

namespace detail {

inline cplx root_of_unity(std::int64_t k, std::int64_t N) {
    const double t = kTwoPi * double(mod(k, N)) / double(N);
    return {std::cos(t), std::sin(t)};
}

// F|k> = N^{-1/2} sum_j w^{jk} |j>; quantizes S = [[0,-1],[1,0]]
inline Mat dft_matrix(int N) {
    Mat F(N, N);
    const double s = 1.0 / std::sqrt(double(N));
    for (int j = 0; j < N; ++j)
        for (int k = 0; k < N; ++k) F(j, k) = s * root_of_unity(std::int64_t(j) * k, N);
    return F;
}

// diagonal chirp quantizing the lower shear [[1,0],[s,1]]
inline Vec shear_phases(int N, std::int64_t s) {
    Vec ph(N);
    if (N % 2 == 0) {
        for (std::int64_t j = 0; j < N; ++j) {
            const std::int64_t e = mod(mod(s, 2 * N) * mod(j * j, 2 * N), 2 * N);
            const double t = kPi * double(e) / double(N);
            ph(j) = {std::cos(t), std::sin(t)};
        }
    } else {
        const std::int64_t inv2 = (N + 1) / 2;
        for (std::int64_t j = 0; j < N; ++j) {
            const std::int64_t e = mod(mod(s, N) * inv2 % N * mod(j * j, N), N);
            ph(j) = root_of_unity(e, N);
        }
    }
    return ph;
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace detail

// Unitary propagator U with U^dag T_m U proportional to T_{A^T m}.
// A is reduced to a lower shear by right multiplication with shears L_s and
// S (Euclid on the top row); the same word in the quantized generators gives U.
inline TorusOperator build_propagator(const CatMapSpec& cat, const PlanckGrid& grid) {
    if (!cat.hyperbolic())
        throw Error("NonHyperbolic", "|trace A| = " + std::to_string(std::abs(cat.trace())) + " <= 2");
    const int N = grid.N;
    if (N < 2) throw Error("DimensionTooSmall", "N < 2");
    std::int64_t m00 = cat.a, m01 = cat.b, m10 = cat.c, m11 = cat.d;
    Mat W = Mat::Identity(N, N);
    Mat F;
    auto ensure_dft = [&] {
        if (F.size() == 0) F = detail::dft_matrix(N);
    };
    while (m01 != 0) {
        const std::int64_t s = -detail::floor_div(m00, m01);
        if (s != 0) {
            // right multiplication by [[1,0],[s,1]]
            m00 += m01 * s;
            m10 += m11 * s;
            W = W * detail::shear_phases(N, s).asDiagonal();
        }
        if (m01 != 0) {
            // right multiplication by [[0,-1],[1,0]]
            const std::int64_t n00 = m01, n01 = -m00, n10 = m11, n11 = -m10;
            m00 = n00;
            m01 = n01;
            m10 = n10;
            m11 = n11;
            ensure_dft();
            W = W * F;
        }
    }
    if (m00 == -1) {
        m00 = 1;
        m10 = -m10;
        m11 = -m11;
        ensure_dft();
        W = W * F * F;
    }
    const Vec ph = detail::shear_phases(N, m10);
    Mat U = ph.asDiagonal() * W.adjoint();
    return TorusOperator::dense(std::move(U), true, false);
}

// T_m = e^{i pi m1 m2 / N} Z^{m1} X^{-m2}: (T_m v)_j = e^{i pi m1 m2/N} w^{m1 j} v_{j+m2}.
// m is used as a full integer pair (no reduction mod N).
inline TorusOperator weyl_translation(std::array<std::int64_t, 2> m, const PlanckGrid& grid) {
    const int N = grid.N;
    const std::int64_t m1 = m[0], m2 = m[1];
    const double t = kPi * double(mod(m1 * m2, 2 * std::int64_t(N))) / double(N);
    const cplx global{std::cos(t), std::sin(t)};
    Vec ph(N);
    for (int j = 0; j < N; ++j) ph(j) = global * detail::root_of_unity(m1 * j, N);
    auto fwd = [ph, m2, N](const Mat& x) {
        Mat y(x.rows(), x.cols());
        for (int j = 0; j < N; ++j) y.row(j) = ph(j) * x.row(int(mod(j + m2, N)));
        return y;
    };
    auto adj = [ph, m2, N](const Mat& x) {
        Mat y(x.rows(), x.cols());
        for (int j = 0; j < N; ++j) y.row(int(mod(j + m2, N))) = std::conj(ph(j)) * x.row(j);
        return y;
    };
    return TorusOperator::matrix_free(N, fwd, adj, true, m1 == 0 && m2 == 0);
}

// min over unit phases c of ||T_m U - c U T_{A^T m}||_F, which bounds the
// operator-norm residual of U^dag T_m U against T_{A^T m}.
inline double egorov_residual(const TorusOperator& U, const CatMapSpec& cat, const PlanckGrid& grid,
                              std::array<std::int64_t, 2> m) {
    const CatMapSpec At = cat.transpose();
    const std::array<std::int64_t, 2> mp{At.a * m[0] + At.b * m[1], At.c * m[0] + At.d * m[1]};
    const Mat Ud = U.to_dense();
    const Mat lhs = weyl_translation(m, grid).apply(Ud);
    const Mat rhs = weyl_translation(mp, grid).apply_adjoint(Mat(Ud.adjoint())).adjoint();
    cplx c = rhs.reshaped().dot(lhs.reshaped());
    const double ac = std::abs(c);
    c = ac > 0 ? c / ac : cplx(1.0, 0.0);
    return (lhs - c * rhs).norm();
}

inline double egorov_residual(const CatMapSpec& cat, const PlanckGrid& grid, std::array<std::int64_t, 2> m) {
    return egorov_residual(build_propagator(cat, grid), cat, grid, m);
}

inline double default_sigma(const PlanckGrid& grid) { return std::sqrt(grid.hbar()); }

// Periodized Gaussian centered at (q, p) with position width sigma:
// psi(x_j) = sum_nu exp(-(x_j - q - nu)^2 / (2 sigma^2)) exp(2 pi i N p (x_j - nu)), normalized.
inline Vec coherent_state(const PlanckGrid& grid, double q, double p, double sigma) {
    const int N = grid.N;
    const int numax = 2 + int(std::ceil(10.0 * sigma));
    Vec v = Vec::Zero(N);
    for (int j = 0; j < N; ++j) {
        const double x = double(j) / N;
        cplx s = 0;
        for (int nu = -numax; nu <= numax; ++nu) {
            const double dx = x - q - nu;
            const double g = std::exp(-dx * dx / (2.0 * sigma * sigma));
            if (g == 0.0) continue;
            const double ph = kTwoPi * N * p * (x - nu);
            s += g * cplx(std::cos(ph), std::sin(ph));
        }
        v(j) = s;
    }
    return v / v.norm();
}

namespace detail {

struct CoherentFamily {
    Vec psi;                  // base state centered near the origin
    std::vector<int> offset;  // indices e with |psi(e)| significant (e may be negative)
    std::vector<cplx> value;
};

inline CoherentFamily coherent_family(const PlanckGrid& grid, double q, double p, double sigma) {
    CoherentFamily f;
    f.psi = coherent_state(grid, q, p, sigma);
    const int N = grid.N;
    const double mx = f.psi.cwiseAbs().maxCoeff();
    for (int e = -N / 2; e < N - N / 2; ++e) {
        const cplx v = f.psi(int(mod(e, N)));
        if (std::abs(v) > 1e-17 * mx) {
            f.offset.push_back(e);
            f.value.push_back(v);
        }
    }
    return f;
}

inline int sampling_ratio(int M, const PlanckGrid& grid) {
    if (M < grid.N || M % grid.N != 0)
        throw Error("BadSampling", "symbol grid " + std::to_string(M) + " is not a positive multiple of N = " +
                                       std::to_string(grid.N));
    return M / grid.N;
}

}  // namespace detail

// Anti-Wick quantization of a real symbol sampled on the M x M grid
// f(i, k) = f(i/M, k/M), M = rN, via the coherent-state resolution of identity.
inline TorusOperator anti_wick_op(const Eigen::MatrixXd& symbol, const PlanckGrid& grid, double sigma) {
    if (symbol.rows() != symbol.cols()) throw Error("BadSampling", "symbol grid must be square");
    const int M = int(symbol.rows());
    const int r = detail::sampling_ratio(M, grid);
    const int N = grid.N;
    Mat op = Mat::Zero(N, N);
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    std::vector<cplx> row(N), g(N);
    for (int o1 = 0; o1 < r; ++o1) {
        for (int o2 = 0; o2 < r; ++o2) {
            const auto fam = detail::coherent_family(grid, double(o1) / M, double(o2) / M, sigma);
            const std::size_t L = fam.offset.size();
            for (int a = 0; a < N; ++a) {
                // g(d) = sum_b f(a, b) w^{b d}
                for (int b = 0; b < N; ++b) row[b] = symbol(a * r + o1, b * r + o2);
                fft.inv(g, row);
                for (std::size_t i1 = 0; i1 < L; ++i1) {
                    const int j = int(mod(a + fam.offset[i1], N));
                    for (std::size_t i2 = 0; i2 < L; ++i2) {
                        const int k = int(mod(a + fam.offset[i2], N));
                        const int dd = int(mod(fam.offset[i1] - fam.offset[i2], N));
                        op(j, k) += fam.value[i1] * std::conj(fam.value[i2]) * g[dd];
                    }
                }
            }
        }
    }
    op /= double(N) * r * r;
    op = (0.5 * (op + op.adjoint())).eval();
    return TorusOperator::dense(std::move(op), false, true);
}

// Same quantization for a symbol depending on x only (f sampled at i/M);
// the operator is diagonal in the position basis.
inline TorusOperator anti_wick_diagonal(const RVec& symbol_x, const PlanckGrid& grid, double sigma) {
    const int M = int(symbol_x.size());
    const int r = detail::sampling_ratio(M, grid);
    const int N = grid.N;
    RVec d = RVec::Zero(N);
    for (int o1 = 0; o1 < r; ++o1) {
        for (int o2 = 0; o2 < r; ++o2) {
            const auto fam = detail::coherent_family(grid, double(o1) / M, double(o2) / M, sigma);
            for (int a = 0; a < N; ++a) {
                const double f = symbol_x(a * r + o1);
                if (f == 0.0) continue;
                for (std::size_t i = 0; i < fam.offset.size(); ++i)
                    d(int(mod(a + fam.offset[i], N))) += f * std::norm(fam.value[i]);
            }
        }
    }
    d /= double(r) * r;
    return TorusOperator::diagonal(d.cast<cplx>());
}

struct NormEstimate {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

// ||op|| by power iteration on op^dag op from a seeded Gaussian start vector.
// Stops when the relative change and its geometric extrapolation are below tol.
inline NormEstimate operator_norm(const TorusOperator& op, double tol, int max_iter, std::uint64_t seed = 1) {
    if (!(tol > 0)) throw Error("BadTolerance", "tol must be positive");
    const int N = op.dim();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Vec x(N);
    for (int i = 0; i < N; ++i) x(i) = cplx(gauss(rng), gauss(rng));
    x /= x.norm();
    NormEstimate out;
    double prev = 0.0, prev_change = -1.0;
    for (int it = 1; it <= max_iter; ++it) {
        const Vec y = op.apply(x);
        const double est = y.norm();
        out.value = std::max(out.value, est);
        out.iterations = it;
        if (est == 0.0) {
            out.converged = true;
            return out;
        }
        const double change = std::abs(est - prev);
        if (it > 1) {
            double extrap = change;
            if (prev_change > 0) {
                const double rho = std::min(change / prev_change, 0.999);
                extrap = change * rho / (1.0 - rho);
            }
            if (change <= tol * est && extrap <= tol * est) {
                out.converged = true;
                return out;
            }
        }
        prev_change = it > 1 ? change : -1.0;
        prev = est;
        const Vec z = op.apply_adjoint(y);
        const double nz = z.norm();
        if (nz == 0.0) {
            out.converged = true;
            return out;
        }
        x = z / nz;
    }
    return out;
}

}  // namespace qcat
