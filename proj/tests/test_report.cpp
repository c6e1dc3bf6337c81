#include <catch2/catch_amalgamated.hpp>

#include "qcat/pipeline.hpp"

using namespace qcat;

namespace {

const CatMapSpec arnold(2, 1, 1, 1);

struct Fixture {
    PlanckGrid grid;
    TorusOperator U;
    QuasiProjectorSet q;
    SpectralData sd;
    explicit Fixture(int N, double offset = 0.0)
        : grid(N), U(build_propagator(arnold, grid)),
          q(quantize_partition(build_smooth_partition(PartitionSpec(3, offset), 0.05), grid)),
          sd(spectral_decompose(U, arnold)) {
        q.lambda = lyapunov(arnold);
    }
};

InvariantMeasure half_scarred() {
    return InvariantMeasure::mixture({0.5, 0.5},
                                     {InvariantMeasure::orbit(arnold, {{0.0, 0.0}}), InvariantMeasure::lebesgue()});
}

}  // namespace

TEST_CASE("theorem report lists missing stages", "[report]") {
    TheoremInputs in;
    in.lambda = 1.0;
    in.epsilon = 0.0;
    try {
        theorem_report(in);
        FAIL("expected IncompleteInputs");
    } catch (const Error& e) {
        REQUIRE(e.name() == "IncompleteInputs");
        const std::string msg = e.what();
        REQUIRE(msg.find("smb split") != std::string::npos);
        REQUIRE(msg.find("backward Fbar") != std::string::npos);
        REQUIRE(msg.find("lambda") == std::string::npos);
    }
}

TEST_CASE("theorem report: eigenstate fixture", "[report]") {
    Fixture f(128);
    const double lam = lyapunov(arnold);
    const int j = nearest_index(f.sd, 1.0);
    TheoremParams p;
    p.theta0 = f.sd.angles(j);
    p.n0 = 2;
    p.mc = {400000, 5};
    const auto run = run_theorem(f.sd.vectors.col(j), f.q, f.U, arnold, InvariantMeasure::lebesgue(), p);
    const auto& r = run.report;
    REQUIRE(r.lhs / lam >= 0.7);
    REQUIRE(r.lhs / lam <= 1.05);
    REQUIRE(std::abs(r.rhs_akn - lam / 2) < 1e-6);
    REQUIRE(r.satisfied);
    REQUIRE(std::abs(run.defects.D.D) < 1e-10);
    REQUIRE(std::abs(run.terms.R) < 1e-10);
    REQUIRE(run.defects.Fbar.max_abs() < 1e-10);
}

TEST_CASE("theorem report: epsilon corrections only lower the bound", "[report]") {
    Fixture f(256);
    const double lam = lyapunov(arnold);
    const double th = nearest_angle(f.sd, 0.5);
    TheoremParams p;
    p.theta0 = th;
    p.n0 = 2;
    p.mc = {400000, 6};
    const auto mix = half_scarred();
    for (double eps : {0.8, 0.4}) {
        const auto lm = construct_log_mode(f.sd, th, eps, RandomCoefficients{4});
        p.epsilon = eps;
        const auto run = run_theorem(lm.state, f.q, f.U, arnold, mix, p);

        TheoremInputs in;
        in.lambda = lam;
        in.hks_proxy = run.hks;
        in.smb = run.smb;
        in.fbar = run.defects.Fbar;
        in.fbar_bwd = run.defects.Fbar_bwd;
        in.terms = run.terms;
        in.terms_bwd = run.terms_bwd;
        in.epsilon = 0.0;
        const auto r0 = theorem_report(in);
        in.epsilon = eps;
        const auto r1 = theorem_report(in);
        REQUIRE(r1.rhs_akn <= r0.rhs_akn);
        REQUIRE(r1.rhs <= r0.rhs);
        const double e = eps / lam;
        REQUIRE(std::abs((r0.rhs_akn - r1.rhs_akn) - run.smb.H_max * (2 * e + e * e)) < 1e-12);

        // D1 against its bound with the Fbar envelope
        const auto& t = run.terms;
        const double tol = run.smb.n0 * f.q.unity_residual;
        REQUIRE(t.D[0] <= t.D1_bound_envelope + tol);
        REQUIRE(t.D[4] <= 0.0);
        REQUIRE(t.D[5] <= 0.0);
    }
}

TEST_CASE("theorem report: half-scarred classical side", "[report]") {
    // the classical ingredients alone, without the quantum pipeline
    const double lam = lyapunov(arnold);
    const MonteCarlo mc{1000000, 8};
    const auto proxy = entropy_rate_proxy(half_scarred(), arnold, PartitionSpec(3, -1.0 / 6), 8, mc);
    REQUIRE(std::abs(proxy.value - lam / 2) < 0.25 * lam / 2);
    const auto smb = smb_split(half_scarred(), arnold, PartitionSpec(3, -1.0 / 6), lam / 2, 0.1, 4, mc);
    REQUIRE(smb.a == 0.5);
    REQUIRE(smb.b == 0.5);
    REQUIRE(smb.in_L(0));
}
