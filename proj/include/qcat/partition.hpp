#pragma once

#include "classical.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace qcat {

namespace detail {

// CDF of the normalized bump exp(-1/(1-s^2)) on [-1, 1]
inline double bump_cdf(double t) {
    if (t <= -1.0) return 0.0;
    if (t >= 1.0) return 1.0;
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    auto psi = [](double s) {
        const double u = 1.0 - s * s;
        return u <= 0 ? 0.0 : std::exp(-1.0 / u);
    };
    static const double total = GK::integrate(psi, -1.0, 1.0, 0, 0.0);
    // integrate from the nearer end for accuracy
    if (t <= 0) return GK::integrate(psi, -1.0, t, 0, 0.0) / total;
    return 1.0 - GK::integrate(psi, t, 1.0, 0, 0.0) / total;
}

}  // namespace detail

// Square-root partition {q_k}: q_k = m_k / sqrt(sum_j m_j^2), with m_k the
// bump-mollified indicator of strip k. Depends on x only.
class SmoothPartition {
public:
    SmoothPartition() = default;
    SmoothPartition(PartitionSpec base, double eta) : base_(base), eta_(eta) {
        if (base.K > 1 && !(eta > 0 && eta < 0.5 / base.K))
            throw Error("EtaTooLarge", "need 0 < eta < 1/(2K) = " + std::to_string(0.5 / base.K));
        if (base.K == 1 && !(eta > 0)) throw Error("EtaTooLarge", "eta must be positive");
    }

    const PartitionSpec& base() const { return base_; }
    double eta() const { return eta_; }
    int K() const { return base_.K; }

    // mollified indicator m_k(x)
    double mollified(int k, double x) const {
        if (base_.K == 1) return 1.0;
        const double w = 1.0 / base_.K;
        double t = std::fmod(x - base_.left(k), 1.0);
        if (t < 0) t += 1.0;
        // the strip is [0, w) in t; images at t - 1 cover the wrap
        double m = 0;
        for (double s : {t, t - 1.0})
            m += detail::bump_cdf(s / eta_) - detail::bump_cdf((s - w) / eta_);
        return m;
    }

    double q(int k, double x) const {
        if (base_.K == 1) return 1.0;
        double s = 0, mk = 0;
        for (int j = 0; j < base_.K; ++j) {
            const double m = mollified(j, x);
            s += m * m;
            if (j == k) mk = m;
        }
        return mk / std::sqrt(s);
    }

    // all K values at once
    std::vector<double> values(double x) const {
        std::vector<double> m(std::size_t(base_.K));
        double s = 0;
        for (int j = 0; j < base_.K; ++j) {
            m[std::size_t(j)] = mollified(j, x);
            s += m[std::size_t(j)] * m[std::size_t(j)];
        }
        for (double& v : m) v /= std::sqrt(s);
        return m;
    }

    // q_k at x = i/M, i < M
    RVec sample(int k, int M) const {
        RVec f(M);
        for (int i = 0; i < M; ++i) f(i) = q(k, double(i) / M);
        return f;
    }

private:
    PartitionSpec base_;
    double eta_ = 0.05;
};

inline SmoothPartition build_smooth_partition(const PartitionSpec& base, double eta) { return {base, eta}; }

// Quantized partition. Strip symbols depend on x only, so every Pi_k is
// diagonal in the position basis; d(k) holds its diagonal.
struct QuasiProjectorSet {
    PlanckGrid grid;
    SmoothPartition partition;
    std::vector<RVec> d;
    double unity_residual = 0.0;
    double lambda = 0.0;            // Lyapunov exponent of the map used for caps (0 = unset)
    double word_cap_factor = 4.0;   // refined words allowed up to factor * log N / lambda
    double delta_long = 0.15;       // enters the Ehrenfest cap of the measure functionals

    int K() const { return int(d.size()); }
    TorusOperator op(int k) const { return TorusOperator::diagonal(d[std::size_t(k)].cast<cplx>()); }
};

inline QuasiProjectorSet quantize_partition(const SmoothPartition& sp, const PlanckGrid& grid, int oversample = 8,
                                            double sigma = -1.0) {
    if (sigma <= 0) sigma = default_sigma(grid);
    QuasiProjectorSet q;
    q.grid = grid;
    q.partition = sp;
    const int M = oversample * grid.N;
    RVec sum = RVec::Zero(grid.N);
    std::vector<std::vector<double>> table(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) table[std::size_t(i)] = sp.values(double(i) / M);
    for (int k = 0; k < sp.K(); ++k) {
        RVec f(M);
        for (int i = 0; i < M; ++i) f(i) = table[std::size_t(i)][std::size_t(k)];
        RVec dk = anti_wick_diagonal(f, grid, sigma).diag().real();
        sum += dk.cwiseAbs2();
        q.d.push_back(std::move(dk));
    }
    q.unity_residual = (sum.array() - 1.0).abs().maxCoeff();
    return q;
}

enum class Direction { Forward, Backward };

inline const char* direction_name(Direction d) { return d == Direction::Forward ? "forward" : "backward"; }

// T_E = (1 - delta) |log hbar| / (2 lambda)
inline double ehrenfest_time(const PlanckGrid& grid, const CatMapSpec& cat, double delta = 0.15) {
    return (1.0 - delta) * grid.log_inv_hbar() / (2.0 * lyapunov(cat));
}

inline int two_ehrenfest_floor(const PlanckGrid& grid, const CatMapSpec& cat, double delta = 0.15) {
    return int(std::floor(2.0 * ehrenfest_time(grid, cat, delta) + 1e-12));
}

inline void check_word_cap(const QuasiProjectorSet& q, int n) {
    if (q.lambda <= 0) return;
    const double cap = q.word_cap_factor * std::log(double(q.grid.N)) / q.lambda;
    if (n > cap)
        throw Error("WordTooLong", "n = " + std::to_string(n) + " exceeds " + std::to_string(q.word_cap_factor) +
                                       " log N / lambda = " + std::to_string(cap));
}

// Forward: Pi_a psi = U^{-(n-1)} Pi_{a_{n-1}} U ... U Pi_{a_0} psi.
// Backward (word stored in time order a_{-n} .. a_{-1}):
// Pi_{a_{-n}}(-n) ... Pi_{a_{-1}}(-1) psi with Pi(-t) = U^t Pi U^{-t}.
// Columns of psi are treated independently.
inline Mat refined_apply(const QuasiProjectorSet& q, const TorusOperator& U, const Word& word, Direction dir,
                         const Mat& psi) {
    const int n = int(word.size());
    if (n < 1) throw Error("BadLength", "word length must be >= 1");
    check_word_cap(q, n);
    for (int s : word)
        if (s < 0 || s >= q.K()) throw Error("BadWord", "symbol outside alphabet");
    Mat v = psi;
    if (dir == Direction::Forward) {
        v = q.d[std::size_t(word[0])].asDiagonal() * v;
        for (int j = 1; j < n; ++j) v = q.d[std::size_t(word[std::size_t(j)])].asDiagonal() * U.apply(v);
        return apply_power(U, v, -(n - 1));
    }
    for (int j = n - 1; j >= 0; --j) v = q.d[std::size_t(word[std::size_t(j)])].asDiagonal() * U.apply_adjoint(v);
    return apply_power(U, v, n);
}

// Depth-first walk over all K^n words sharing prefixes. At every leaf, visit(idx, v)
// receives the word index and the un-rotated refined vector block:
//   forward  v = Pi_{a_{n-1}} U ... U Pi_{a_0} psi        (= U^{n-1} Pi_a psi)
//   backward v = Pi_{a_{-n}} U^{-1} ... Pi_{a_{-1}} U^{-1} psi  (= U^{-n} Pi_a psi)
// Both differ from the refined vector by a fixed unitary, so norms and inner
// products between leaves are preserved. Top-level branches run in parallel;
// visit must only write to slots owned by idx.
template <class Visit>
void word_tree(const QuasiProjectorSet& q, const TorusOperator& U, const Mat& psi, int n, Direction dir,
               Visit&& visit) {
    if (n < 1) throw Error("BadLength", "word length must be >= 1");
    check_word_cap(q, n);
    const int K = q.K();
    const Mat start = dir == Direction::Forward ? psi : U.apply_adjoint(psi);
    // forward: the symbol at depth t (1-based) is a_{t-1}, weight K^{n-t};
    // backward: it is w[n-t], weight K^{t-1}.
    auto weight = [&](int depth) { return dir == Direction::Forward ? ipow(K, n - depth) : ipow(K, depth - 1); };
    std::function<void(int, std::int64_t, const Mat&)> rec = [&](int depth, std::int64_t idx, const Mat& v) {
        if (depth == n) {
            visit(idx, v);
            return;
        }
        const Mat w = dir == Direction::Forward ? U.apply(v) : U.apply_adjoint(v);
        for (int k = 0; k < K; ++k) {
            const Mat c = q.d[std::size_t(k)].asDiagonal() * w;
            rec(depth + 1, idx + k * weight(depth + 1), c);
        }
    };
    parallel_for(std::size_t(K), [&](std::size_t k) {
        const Mat c = q.d[k].asDiagonal() * start;
        rec(1, std::int64_t(k) * weight(1), c);
    });
}

// Gram operator of the refined family: sum_{a in Sigma^n} Pi_a^dag Pi_a for the
// propagator matrix V, via M_1 = sum_k Pi_k^2, M_{j+1} = sum_k Pi_k V^dag M_j V Pi_k.
// With V = U^dag the same recursion gives L_n, and sum_b Pi_b Pi_b^dag = U^{-(n-1)} L_n U^{n-1}.
inline Mat refined_gram(const QuasiProjectorSet& q, const Mat& V, int n) {
    const int N = q.grid.N;
    // sum_k Pi_k X Pi_k = X o W with W(i,j) = sum_k d_k(i) d_k(j)
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
    for (const auto& dk : q.d) W += dk * dk.transpose();
    Mat M = Mat(W.diagonal().cast<cplx>().asDiagonal());
    for (int j = 1; j < n; ++j) {
        const Mat C = V.adjoint() * M * V;
        M = C.cwiseProduct(W.cast<cplx>());
    }
    return M;
}

inline double hermitian_norm(const Mat& H) {
    const Mat S = 0.5 * (H + H.adjoint());
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

// ||sum_{a in Sigma^n} Pi_a^dag Pi_a - Id||
inline double unity_residual_refined(const QuasiProjectorSet& q, const TorusOperator& U, int n) {
    if (n < 1) throw Error("BadLength", "n must be >= 1");
    check_word_cap(q, n);
    const int N = q.grid.N;
    return hermitian_norm(refined_gram(q, U.to_dense(), n) - Mat::Identity(N, N));
}

}  // namespace qcat
