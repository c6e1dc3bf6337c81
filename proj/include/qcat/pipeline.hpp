#pragma once

#include "entropy.hpp"

namespace qcat {

// Everything the theorem report needs, computed for one state.
struct TheoremRun {
    TheoremReport report;
    DefectReport defects;
    SMBSplit smb;
    RegionDecomposition regions, regions_bwd;
    DefectTerms terms, terms_bwd;
    QuantumWordMeasure mu_fwd, mu_bwd;  // at length n0
    Estimate hks;
    double unity_residual = 0.0;
};

struct TheoremParams {
    double theta0 = 0.0;
    double epsilon = 0.0;
    int n0 = 3;
    double H0 = 0.0;         // 0: lambda / 2
    double eps_bar = 0.1;
    int proxy_length = 8;    // block length of the entropy-rate proxy
    MonteCarlo mc;
};

inline TheoremRun run_theorem(const Vec& psi, const QuasiProjectorSet& q, const TorusOperator& U, const CatMapSpec& cat,
                              const InvariantMeasure& mu_sc, const TheoremParams& p) {
    const double lam = lyapunov(cat);
    const PartitionSpec& part = q.partition.base();
    TheoremRun run;
    run.unity_residual = q.unity_residual;
    run.defects = defect_report(psi, q, U, p.theta0, p.n0);
    run.smb = smb_split(mu_sc, cat, part, p.H0 > 0 ? p.H0 : lam / 2, p.eps_bar, p.n0, p.mc);
    run.mu_fwd = quantum_measure(psi, q, U, p.n0, Direction::Forward);
    run.mu_bwd = quantum_measure(psi, q, U, p.n0, Direction::Backward);
    run.regions = region_decompose(run.defects.Fbar.Fbar, run.smb);
    run.regions_bwd = region_decompose(run.defects.Fbar_bwd.Fbar, run.smb);
    // the limit measure is invariant, so backward words share the forward cylinder masses
    run.terms = defect_bound_terms(run.defects.Fbar.Fbar, run.regions, run.smb.mu.value, run.mu_fwd.table, run.smb,
                                   p.epsilon, lam);
    run.terms_bwd = defect_bound_terms(run.defects.Fbar_bwd.Fbar, run.regions_bwd, run.smb.mu.value,
                                       run.mu_bwd.table, run.smb, p.epsilon, lam);
    run.hks = entropy_rate_proxy(mu_sc, cat, part, p.proxy_length, p.mc);

    TheoremInputs in;
    in.lambda = lam;  // log J^u is constant for a linear map
    in.hks_proxy = run.hks;
    in.epsilon = p.epsilon;
    in.smb = run.smb;
    in.fbar = run.defects.Fbar;
    in.fbar_bwd = run.defects.Fbar_bwd;
    in.terms = run.terms;
    in.terms_bwd = run.terms_bwd;
    in.fbar_tolerance = 2.0 * p.n0 * q.unity_residual;
    run.report = theorem_report(in);
    return run;
}

inline double nearest_angle(const SpectralData& sd, double target) {
    double best = sd.angles(0);
    for (Eigen::Index j = 0; j < sd.angles.size(); ++j)
        if (angle_dist(sd.angles(j), target) < angle_dist(best, target)) best = sd.angles(j);
    return best;
}

inline int nearest_index(const SpectralData& sd, double target) {
    int best = 0;
    for (Eigen::Index j = 0; j < sd.angles.size(); ++j)
        if (angle_dist(sd.angles(j), target) < angle_dist(sd.angles(best), target)) best = int(j);
    return best;
}

}  // namespace qcat
