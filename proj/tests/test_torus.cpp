#include <catch2/catch_amalgamated.hpp>

#include "qcat/torus.hpp"

#include <random>

using namespace qcat;

namespace {

// dense T_m built entry by entry from the definition, independent of weyl_translation
Mat weyl_oracle(int N, std::int64_t m1, std::int64_t m2) {
    Mat T = Mat::Zero(N, N);
    const cplx g = std::polar(1.0, kPi * double(m1) * double(m2) / N);
    for (int j = 0; j < N; ++j) {
        const int src = int(mod(j + m2, N));
        T(j, src) = g * std::polar(1.0, kTwoPi * double(m1) * j / N);
    }
    return T;
}

Mat random_matrix(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = cplx(g(rng), g(rng));
    return a;
}

}  // namespace

TEST_CASE("propagator is unitary and hyperbolicity is enforced", "[torus]") {
    const CatMapSpec arnold(2, 1, 1, 1);
    const auto U = build_propagator(arnold, PlanckGrid(64));
    REQUIRE(U.unitary());
    const Mat& u = U.matrix();
    REQUIRE((u * u.adjoint() - Mat::Identity(64, 64)).norm() < 1e-10);

    REQUIRE_THROWS_AS(build_propagator(CatMapSpec(1, 1, 0, 1), PlanckGrid(64)), Error);
    try {
        build_propagator(CatMapSpec(1, 1, 0, 1), PlanckGrid(64));
    } catch (const Error& e) {
        REQUIRE(e.name() == "NonHyperbolic");
    }
    REQUIRE_THROWS_AS(PlanckGrid(1), Error);
    REQUIRE_THROWS_AS(CatMapSpec(2, 1, 1, 2), Error);
}

TEST_CASE("weyl translations match the dense definition", "[torus]") {
    for (int N : {4, 7, 10}) {
        const PlanckGrid g(N);
        for (std::int64_t m1 = -3; m1 <= 3; ++m1)
            for (std::int64_t m2 = -3; m2 <= 3; ++m2) {
                const auto T = weyl_translation({m1, m2}, g);
                const Mat oracle = weyl_oracle(N, m1, m2);
                REQUIRE((T.to_dense() - oracle).norm() < 1e-12);
                REQUIRE((T.apply_adjoint(Mat::Identity(N, N)) - oracle.adjoint()).norm() < 1e-12);
            }
    }
    const PlanckGrid g4(4);
    REQUIRE((weyl_translation({0, 0}, g4).to_dense() - Mat::Identity(4, 4)).norm() == 0.0);
    const Mat t = weyl_translation({1, 0}, g4).to_dense();
    REQUIRE((t * t.adjoint() - Mat::Identity(4, 4)).norm() < 1e-12);
}

TEST_CASE("weyl commutation phase fixture", "[torus]") {
    // T_(1,0) T_(0,1) = e^{-2 pi i / N} T_(0,1) T_(1,0)
    for (int N : {5, 8, 16}) {
        const PlanckGrid g(N);
        const Mat a = weyl_translation({1, 0}, g).to_dense();
        const Mat b = weyl_translation({0, 1}, g).to_dense();
        const cplx phase = std::polar(1.0, -kTwoPi / N);
        REQUIRE((a * b - phase * b * a).norm() < 1e-12);
        // composition law T_m T_m' = phase T_{m+m'}
        const Mat c = weyl_translation({2, -1}, g).to_dense();
        const Mat d = weyl_translation({-1, 3}, g).to_dense();
        const Mat e = weyl_translation({1, 2}, g).to_dense();
        const Mat cd = c * d;
        const cplx ratio = cd(0, int(mod(2, N))) / e(0, int(mod(2, N)));
        REQUIRE(std::abs(std::abs(ratio) - 1.0) < 1e-12);
        REQUIRE((cd - ratio * e).norm() < 1e-12);
    }
}

TEST_CASE("exact Egorov for Arnold map and other hyperbolic matrices", "[torus]") {
    const CatMapSpec arnold(2, 1, 1, 1);
    REQUIRE(egorov_residual(arnold, PlanckGrid(8), {1, 0}) < 1e-10);
    REQUIRE(egorov_residual(arnold, PlanckGrid(32), {1, 0}) < 1e-10);
    REQUIRE(egorov_residual(arnold, PlanckGrid(32), {0, 1}) < 1e-10);
    REQUIRE(egorov_residual(arnold, PlanckGrid(32), {0, 0}) == 0.0);

    // non-symmetric matrices: the conjugated translation index is A^T m
    for (auto cat : {CatMapSpec(3, 2, 4, 3), CatMapSpec(2, 3, 1, 2), CatMapSpec(-3, 1, -1, 0), CatMapSpec(1, 1, 1, 2)}) {
        for (int N : {9, 12}) {
            const PlanckGrid g(N);
            const auto U = build_propagator(cat, g);
            for (std::int64_t m1 = -2; m1 <= 2; ++m1)
                for (std::int64_t m2 = -2; m2 <= 2; ++m2) REQUIRE(egorov_residual(U, cat, g, {m1, m2}) < 1e-10);
        }
    }
}

TEST_CASE("lyapunov exponent from the quadratic formula", "[torus]") {
    const double golden = std::log((3.0 + std::sqrt(5.0)) / 2.0);
    REQUIRE(std::abs(lyapunov(CatMapSpec(2, 1, 1, 1)) - golden) < 1e-15);
    REQUIRE(std::abs(lyapunov(CatMapSpec(1, 1, 1, 2)) - golden) < 1e-15);
    REQUIRE(std::abs(golden - 0.9624236501192069) < 1e-15);
    REQUIRE_THROWS_AS(lyapunov(CatMapSpec(0, 1, -1, 0)), Error);
}

TEST_CASE("anti-Wick quantization: normalization, positivity, linearity", "[torus]") {
    const PlanckGrid g(16);
    const double s = default_sigma(g);
    for (int M : {16, 32}) {
        const auto one = anti_wick_op(Eigen::MatrixXd::Ones(M, M), g, s);
        REQUIRE((one.matrix() - Mat::Identity(16, 16)).norm() < 1e-10);
        const auto zero = anti_wick_op(Eigen::MatrixXd::Zero(M, M), g, s);
        REQUIRE(zero.matrix().norm() == 0.0);
    }
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd f(32, 32), h(32, 32);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            f(i, j) = u(rng);
            h(i, j) = u(rng) - 0.5;
        }
    const Mat A = anti_wick_op(f, g, s).matrix();
    const Mat B = anti_wick_op(h, g, s).matrix();
    const Mat C = anti_wick_op(2.0 * f - 3.0 * h, g, s).matrix();
    REQUIRE((C - (2.0 * A - 3.0 * B)).norm() < 1e-10);
    REQUIRE((A - A.adjoint()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    REQUIRE(es.eigenvalues().minCoeff() > -1e-10);

    REQUIRE_THROWS_AS(anti_wick_op(Eigen::MatrixXd::Ones(8, 8), g, s), Error);
    REQUIRE_THROWS_AS(anti_wick_op(Eigen::MatrixXd::Ones(24, 24), g, s), Error);
}

TEST_CASE("x-only symbols give the diagonal fast path exactly", "[torus]") {
    const PlanckGrid g(12);
    const double s = default_sigma(g);
    const int M = 36;
    RVec fx(M);
    for (int i = 0; i < M; ++i) fx(i) = 0.5 + 0.5 * std::sin(kTwoPi * i / M) + (i % 5 == 0 ? 0.3 : 0.0);
    Eigen::MatrixXd f(M, M);
    for (int i = 0; i < M; ++i) f.row(i).setConstant(fx(i));
    const Mat full = anti_wick_op(f, g, s).matrix();
    const Mat diag = anti_wick_diagonal(fx, g, s).to_dense();
    REQUIRE((full - diag).norm() < 1e-12);
}

TEST_CASE("anti-Wick of a strip: normalized trace approaches the strip area", "[torus]") {
    // mollified indicator of x in [0, 1/2); Monte-Carlo oracle for its average
    auto symbol = [](double x) {
        const double e = 0.05;
        auto ramp = [e](double t) { return std::clamp(t / e + 0.5, 0.0, 1.0); };
        return std::min(ramp(x), ramp(0.5 - x)) + std::min(ramp(x - 1.0), 0.0);
    };
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double mc = 0;
    const int S = 200000;
    for (int i = 0; i < S; ++i) mc += symbol(u(rng));
    mc /= S;
    double prev_err = 1.0;
    for (int N : {16, 64, 256}) {
        const PlanckGrid g(N);
        const int M = 4 * N;
        RVec fx(M);
        for (int i = 0; i < M; ++i) fx(i) = symbol(double(i) / M);
        const double tr = anti_wick_diagonal(fx, g, default_sigma(g)).diag().real().sum() / N;
        const double err = std::abs(tr - mc);
        REQUIRE(err < prev_err + 5e-3);
        prev_err = err;
    }
    REQUIRE(prev_err < 5e-3);
}

TEST_CASE("operator norm by power iteration against dense SVD", "[torus]") {
    const auto id = TorusOperator::dense(Mat::Identity(16, 16));
    REQUIRE(std::abs(operator_norm(id, 1e-10, 100).value - 1.0) < 1e-8);

    Vec d = Vec::Ones(16);
    d(0) = 3.0;
    const auto nd = operator_norm(TorusOperator::diagonal(d), 1e-10, 1000);
    REQUIRE(nd.converged);
    REQUIRE(std::abs(nd.value - 3.0) < 1e-9);

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const int n = 4 + int(seed % 29);
        const Mat a = random_matrix(n, seed);
        Eigen::JacobiSVD<Mat> svd(a);
        const double oracle = svd.singularValues()(0);
        const auto est = operator_norm(TorusOperator::dense(a), 1e-8, 20000, seed);
        REQUIRE(est.converged);
        REQUIRE(std::abs(est.value - oracle) <= 1e-8 * oracle);
    }
    const auto same = operator_norm(TorusOperator::dense(random_matrix(8, 5)), 1e-8, 20000, 11);
    const auto again = operator_norm(TorusOperator::dense(random_matrix(8, 5)), 1e-8, 20000, 11);
    REQUIRE(same.value == again.value);
}

TEST_CASE("coherent state localizes at its center", "[torus]") {
    const PlanckGrid g(128);
    const Vec v = coherent_state(g, 0.3, 0.7, default_sigma(g));
    REQUIRE(std::abs(v.norm() - 1.0) < 1e-12);
    // circular mean position
    cplx m = 0;
    for (int j = 0; j < g.N; ++j) m += std::norm(v(j)) * std::polar(1.0, kTwoPi * j / g.N);
    REQUIRE(angle_dist(std::arg(m), kTwoPi * 0.3) / kTwoPi < 2.0 / std::sqrt(double(g.N)));
}
