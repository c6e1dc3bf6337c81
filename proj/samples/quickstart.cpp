// Build a logarithmic mode of the Arnold cat map at N = 128 and print the main
// functionals: word measures, entropy, shift defects and the uncertainty bound.

#include "qcat/qcat.hpp"

#include <iostream>

int main() {
    using namespace qcat;
    const CatMapSpec cat(2, 1, 1, 1);
    const PlanckGrid grid(128);
    const auto U = build_propagator(cat, grid);

    auto q = quantize_partition(build_smooth_partition(PartitionSpec(2), 0.05), grid);
    q.lambda = lyapunov(cat);

    const auto sd = spectral_decompose(U, cat);
    const double theta0 = nearest_angle(sd, 1.0);
    const auto mode = construct_log_mode(sd, theta0, 0.8);
    std::cout << "eigenangles in window: " << mode.indices.size() << ", ||(U - e^{i theta0}) psi|| = " << mode.defect
              << "\n";

    const int n = two_ehrenfest_floor(q);
    const auto mu = quantum_measure(mode.state, q, U, n, Direction::Forward);
    std::cout << "n = " << n << " words, mass " << mu.mass << ", entropy " << quantum_entropy_pressure(mu).H
              << " (n log K = " << n * std::log(2.0) << ")\n";

    const auto f1 = compute_F1_table(mode.state, q, U, theta0, 2, 3);
    std::cout << "F1 at n = 3: sum " << f1.sum() << ", identity residual " << f1.identity_residual << "\n";

    const auto eup = eup_instantiation(mode.state, q, U, sd, theta0, n).result;
    std::cout << "uncertainty bound: lhs " << eup.lhs << " >= " << eup.rhs << " (sharp " << eup.rhs_sharp << ")"
              << (eup.satisfied ? ", holds" : ", fails") << "\n";
}
