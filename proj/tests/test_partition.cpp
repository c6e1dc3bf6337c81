#include <catch2/catch_amalgamated.hpp>

#include "qcat/partition.hpp"

using namespace qcat;

namespace {

const CatMapSpec arnold(2, 1, 1, 1);

Vec random_state(int N, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Vec v(N);
    for (int i = 0; i < N; ++i) v(i) = cplx(g(rng), g(rng));
    return v / v.norm();
}

QuasiProjectorSet make_qps(int N, int K, double eta = 0.05) {
    auto q = quantize_partition(build_smooth_partition(PartitionSpec(K), eta), PlanckGrid(N));
    q.lambda = lyapunov(arnold);
    return q;
}

}  // namespace

TEST_CASE("smooth partition: square sum, support, interior", "[partition]") {
    const auto sp = build_smooth_partition(PartitionSpec(2), 0.05);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng);
        double s = 0;
        for (int k = 0; k < 2; ++k) s += std::pow(sp.q(k, x), 2);
        REQUIRE(std::abs(s - 1.0) < 1e-8);
    }
    const auto sp3 = build_smooth_partition(PartitionSpec(3), 0.05);
    for (double x : {0.06, 0.2, 0.28}) REQUIRE(std::abs(sp3.q(0, x) - 1.0) < 1e-14);
    for (double x : {0.39, 0.5, 0.94}) REQUIRE(sp3.q(0, x) == 0.0);
    REQUIRE(sp3.q(0, 0.97) > 0.0);  // wraps around the torus
    REQUIRE_THROWS_AS(build_smooth_partition(PartitionSpec(2), 0.3), Error);
    try {
        build_smooth_partition(PartitionSpec(2), 0.3);
    } catch (const Error& e) {
        REQUIRE(e.name() == "EtaTooLarge");
    }
}

TEST_CASE("smooth partition converges to the indicator as eta shrinks", "[partition]") {
    // midpoint quadrature of int |q_0^2 - 1_{E_0}|
    double prev = 1.0;
    for (double eta : {0.1, 0.05, 0.025}) {
        const auto sp = build_smooth_partition(PartitionSpec(2), eta);
        const int M = 20000;
        double s = 0;
        for (int i = 0; i < M; ++i) {
            const double x = (i + 0.5) / M;
            s += std::abs(std::pow(sp.q(0, x), 2) - (x < 0.5 ? 1.0 : 0.0));
        }
        s /= M;
        REQUIRE(s < prev);
        prev = s;
    }
}

TEST_CASE("quasiprojectors: trivial partition, positivity, residual scaling", "[partition]") {
    const auto one = make_qps(32, 1);
    REQUIRE(one.unity_residual < 1e-10);
    REQUIRE((one.d[0].array() - 1.0).abs().maxCoeff() < 1e-10);

    for (int K : {2, 3}) {
        std::vector<double> lx, ly;
        double prev = 1.0;
        for (int N : {64, 128, 256, 512}) {
            const auto q = make_qps(N, K);
            for (const auto& dk : q.d) {
                REQUIRE(dk.minCoeff() >= -1e-8);
                REQUIRE(dk.maxCoeff() <= 1 + 1e-2);
            }
            REQUIRE(q.unity_residual < prev);
            prev = q.unity_residual;
            lx.push_back(std::log(double(N)));
            ly.push_back(std::log(q.unity_residual));
        }
        const double slope = fit_slope(lx, ly);
        INFO("K=" << K << " slope " << slope);
        REQUIRE(slope >= -0.75);
        REQUIRE(slope <= -0.25);
    }
}

TEST_CASE("quasiprojectors match the general anti-Wick path", "[partition]") {
    const PlanckGrid g(16);
    const auto sp = build_smooth_partition(PartitionSpec(3), 0.05);
    const auto q = quantize_partition(sp, g, 2);
    const int M = 32;
    Eigen::MatrixXd f(M, M);
    for (int i = 0; i < M; ++i) f.row(i).setConstant(sp.q(1, double(i) / M));
    const Mat full = anti_wick_op(f, g, default_sigma(g)).matrix();
    REQUIRE((full - Mat(q.d[1].cast<cplx>().asDiagonal())).norm() < 1e-12);
}

TEST_CASE("Egorov at the partition level improves with N", "[partition]") {
    // ||U^dag Pi_k U - Op(q_k o A)|| for the Arnold map
    std::vector<double> lx, ly;
    for (int N : {16, 32, 64}) {
        const PlanckGrid g(N);
        const auto sp = build_smooth_partition(PartitionSpec(2), 0.1);
        const auto q = quantize_partition(sp, g, 2);
        const auto U = build_propagator(arnold, g);
        const int M = 2 * N;
        Eigen::MatrixXd f(M, M);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) f(i, j) = sp.q(0, arnold.apply(double(i) / M, double(j) / M)[0]);
        const Mat rhs = anti_wick_op(f, g, default_sigma(g)).matrix();
        const Mat lhs = U.matrix().adjoint() * q.d[0].cast<cplx>().asDiagonal() * U.matrix();
        Eigen::JacobiSVD<Mat> svd(lhs - rhs);
        lx.push_back(std::log(double(N)));
        ly.push_back(std::log(svd.singularValues()(0)));
    }
    REQUIRE(fit_slope(lx, ly) < 0.0);
}

TEST_CASE("Ehrenfest time ladder", "[partition]") {
    REQUIRE(two_ehrenfest_floor(PlanckGrid(128), arnold) == 5);
    REQUIRE(two_ehrenfest_floor(PlanckGrid(256), arnold) == 6);
    REQUIRE(two_ehrenfest_floor(PlanckGrid(512), arnold) == 7);
}

TEST_CASE("refined words: single step, norm bound, mass", "[partition]") {
    const int N = 128;
    const auto q = make_qps(N, 2);
    const auto U = build_propagator(arnold, PlanckGrid(N));
    const Vec psi = random_state(N, 5);

    const Mat one = refined_apply(q, U, {1}, Direction::Forward, psi);
    REQUIRE((one - q.d[1].cast<cplx>().asDiagonal() * psi).norm() == 0.0);

    const int n = two_ehrenfest_floor(q.grid, arnold);
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
        double mass = 0;
        for (std::int64_t i = 0; i < ipow(2, n); ++i) {
            const Word w = word_from_index(i, n, 2);
            const double nv = refined_apply(q, U, w, dir, psi).norm();
            REQUIRE(nv <= std::pow(1.01, n));
            mass += nv * nv;
        }
        REQUIRE(std::abs(mass - 1.0) <= n * q.unity_residual);
    }
    REQUIRE_THROWS_AS(refined_apply(q, U, Word(30, 0), Direction::Forward, psi), Error);
}

TEST_CASE("word tree agrees with direct refined application", "[partition]") {
    const int N = 64, K = 3, n = 4;
    const auto q = make_qps(N, K);
    const auto U = build_propagator(arnold, PlanckGrid(N));
    const Vec psi = random_state(N, 9);
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
        std::vector<Vec> leaves(std::size_t(ipow(K, n)));
        word_tree(q, U, psi, n, dir, [&](std::int64_t idx, const Mat& v) { leaves[std::size_t(idx)] = v.col(0); });
        const int rot = dir == Direction::Forward ? n - 1 : -n;
        for (std::int64_t i = 0; i < ipow(K, n); ++i) {
            const Mat direct = refined_apply(q, U, word_from_index(i, n, K), dir, psi);
            REQUIRE((apply_power(U, direct, rot) - leaves[std::size_t(i)]).norm() < 1e-12);
        }
    }
}

TEST_CASE("refinement consistency across one extra symbol", "[partition]") {
    const int N = 128, K = 2;
    const auto q = make_qps(N, K);
    const auto U = build_propagator(arnold, PlanckGrid(N));
    for (std::uint64_t seed : {1, 2, 3}) {
        const Vec psi = random_state(N, seed);
        for (int n = 2; n <= 5; ++n) {
            std::vector<double> parent(std::size_t(ipow(K, n - 1))), child(std::size_t(ipow(K, n)));
            word_tree(q, U, psi, n - 1, Direction::Forward,
                      [&](std::int64_t i, const Mat& v) { parent[std::size_t(i)] = v.squaredNorm(); });
            word_tree(q, U, psi, n, Direction::Forward,
                      [&](std::int64_t i, const Mat& v) { child[std::size_t(i)] = v.squaredNorm(); });
            for (std::size_t p = 0; p < parent.size(); ++p) {
                double s = 0;
                for (int k = 0; k < K; ++k) s += child[p * K + std::size_t(k)];
                REQUIRE(std::abs(parent[p] - s) <= (n + 1) * q.unity_residual);
            }
        }
    }
}

TEST_CASE("refined unity residual: recursion against word enumeration", "[partition]") {
    {
        const int N = 16, K = 2;
        const auto q = make_qps(N, K, 0.1);
        const auto U = build_propagator(arnold, PlanckGrid(N));
        REQUIRE(std::abs(unity_residual_refined(q, U, 1) - q.unity_residual) < 1e-12);
        for (int n = 2; n <= 4; ++n) {
            // oracle: sum of Pi_a^dag Pi_a over explicit dense word products
            Mat S = Mat::Zero(N, N);
            for (std::int64_t i = 0; i < ipow(K, n); ++i) {
                const Mat P = refined_apply(q, U, word_from_index(i, n, K), Direction::Forward, Mat::Identity(N, N));
                S += P.adjoint() * P;
            }
            Eigen::SelfAdjointEigenSolver<Mat> es(S - Mat::Identity(N, N));
            REQUIRE(std::abs(unity_residual_refined(q, U, n) - es.eigenvalues().cwiseAbs().maxCoeff()) < 1e-12);
        }
    }
    const auto q = make_qps(128, 2);
    const auto U = build_propagator(arnold, PlanckGrid(128));
    REQUIRE(unity_residual_refined(q, U, 2) <= 3 * q.unity_residual);
    const double r5 = unity_residual_refined(q, U, 5);
    REQUIRE(std::isfinite(r5));
    REQUIRE(r5 <= 5 * q.unity_residual);
}
