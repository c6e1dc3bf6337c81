#include <catch2/catch_amalgamated.hpp>

#include "qcat/classical.hpp"

using namespace qcat;

namespace {

using Poly = std::vector<std::array<double, 2>>;

// Sutherland-Hodgman clip against u.x + v.y >= c
Poly clip(const Poly& p, double u, double v, double c) {
    Poly out;
    const std::size_t n = p.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& P = p[i];
        const auto& Q = p[(i + 1) % n];
        const double fp = u * P[0] + v * P[1] - c;
        const double fq = u * Q[0] + v * Q[1] - c;
        if (fp >= 0) out.push_back(P);
        if ((fp >= 0) != (fq >= 0)) {
            const double t = fp / (fp - fq);
            out.push_back({P[0] + t * (Q[0] - P[0]), P[1] + t * (Q[1] - P[1])});
        }
    }
    return out;
}

double area(const Poly& p) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& P = p[i];
        const auto& Q = p[(i + 1) % p.size()];
        s += P[0] * Q[1] - Q[0] * P[1];
    }
    return std::abs(s) / 2;
}

// Exact Lebesgue area of a cylinder: for each time j the condition is
// (row_j . z) mod 1 in [l, r) where row_j is the first row of A^j. Enumerate
// the integer shifts and clip the unit square by the half-plane pairs.
double exact_cylinder(const CatMapSpec& cat, int K, const Word& w) {
    const int n = int(w.size());
    std::vector<std::array<double, 2>> rows{{1.0, 0.0}};
    double r0 = 1, r1 = 0;
    for (int j = 1; j < n; ++j) {
        const double n0 = r0 * cat.a + r1 * cat.c;
        const double n1 = r0 * cat.b + r1 * cat.d;
        r0 = n0;
        r1 = n1;
        rows.push_back({r0, r1});
    }
    double total = 0;
    std::function<void(int, Poly)> rec = [&](int j, Poly p) {
        if (p.size() < 3) return;
        if (j == n) {
            total += area(p);
            return;
        }
        const double l = double(w[j]) / K, r = double(w[j] + 1) / K;
        const auto [u, v] = rows[j];
        const double lo = std::min(0.0, u) + std::min(0.0, v);
        const double hi = std::max(0.0, u) + std::max(0.0, v);
        for (int k = int(std::floor(lo)) - 1; k <= int(std::ceil(hi)) + 1; ++k) {
            Poly q = clip(p, u, v, l + k);
            q = clip(q, -u, -v, -(r + k));
            rec(j + 1, q);
        }
    };
    rec(0, Poly{{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    return total;
}

const CatMapSpec arnold(2, 1, 1, 1);

}  // namespace

TEST_CASE("word indexing round-trips", "[classical]") {
    for (std::int64_t i = 0; i < 81; ++i) REQUIRE(word_index(word_from_index(i, 4, 3), 3) == i);
    REQUIRE(word_to_string(parse_word("0120", 3)) == "0120");
    REQUIRE(word_index({1, 0}, 3) == 3);
    REQUIRE_THROWS_AS(parse_word("3", 3), Error);
}

TEST_CASE("coarse jacobian is e^{n lambda} and multiplicative", "[classical]") {
    const double lam = lyapunov(arnold);
    REQUIRE(coarse_jacobian(arnold, {}) == 1.0);
    REQUIRE(std::abs(coarse_jacobian(arnold, {0, 1, 2}) - 17.944) < 1e-3);
    REQUIRE(std::abs(std::sqrt(coarse_jacobian(arnold, {0, 1})) - 2.618) < 1e-3);
    const Word a{0, 1}, b{2, 2, 1};
    Word ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    REQUIRE(std::abs(coarse_jacobian(arnold, ab) / (coarse_jacobian(arnold, a) * coarse_jacobian(arnold, b)) - 1.0) <
            1e-14);
    REQUIRE(std::abs(std::log(coarse_jacobian(arnold, ab)) - 5 * lam) < 1e-12);
}

TEST_CASE("polygon oracle sanity", "[classical]") {
    // the oracle itself must partition the square
    for (int n = 1; n <= 3; ++n) {
        double s = 0;
        for (std::int64_t i = 0; i < ipow(3, n); ++i) s += exact_cylinder(arnold, 3, word_from_index(i, n, 3));
        REQUIRE(std::abs(s - 1.0) < 1e-12);
    }
    REQUIRE(std::abs(exact_cylinder(arnold, 2, {0}) - 0.5) < 1e-14);
}

TEST_CASE("Lebesgue cylinder measures match exact polygon areas", "[classical]") {
    const auto leb = InvariantMeasure::lebesgue();
    const MonteCarlo mc{400000, 99};
    const auto e0 = cylinder_measure(leb, arnold, PartitionSpec(2), {0}, mc);
    REQUIRE(std::abs(e0.value - 0.5) < 3 * e0.stderr_ + 1e-12);
    const auto e01 = cylinder_measure(leb, arnold, PartitionSpec(2), {0, 1}, mc);
    REQUIRE(std::abs(e01.value - exact_cylinder(arnold, 2, {0, 1})) < 3 * e01.stderr_);

    for (int n = 1; n <= 3; ++n) {
        const auto t = cylinder_table(leb, arnold, PartitionSpec(3), n, mc);
        int outside = 0;
        double sum = 0;
        for (std::size_t i = 0; i < t.value.size(); ++i) {
            const double ex = exact_cylinder(arnold, 3, word_from_index(std::int64_t(i), n, 3));
            sum += t.value[i];
            if (std::abs(t.value[i] - ex) > 3 * t.stderr_[i] + 1e-12) ++outside;
            REQUIRE(std::abs(t.value[i] - ex) < 4.5 * t.stderr_[i] + 1e-12);
        }
        // 3-sigma excursions should be rare
        REQUIRE(outside <= 1 + int(t.value.size()) / 20);
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
    REQUIRE(cylinder_measure(leb, arnold, PartitionSpec(3), {}, mc).value == 1.0);
    REQUIRE_THROWS_AS(cylinder_measure(leb, arnold, PartitionSpec(3), {0}, MonteCarlo{100, 1}), Error);
}

TEST_CASE("orbit measures are exact and validated", "[classical]") {
    const auto fixed = InvariantMeasure::orbit(arnold, {{0.0, 0.0}});
    const MonteCarlo mc;
    REQUIRE(cylinder_measure(fixed, arnold, PartitionSpec(3), {0, 0, 0, 0, 0}, mc).value == 1.0);
    REQUIRE(cylinder_measure(fixed, arnold, PartitionSpec(3), {0, 0, 1}, mc).value == 0.0);
    REQUIRE(classical_entropy(fixed, arnold, PartitionSpec(3), 5, mc).value == 0.0);
    REQUIRE_THROWS_AS(InvariantMeasure::orbit(arnold, {{0.1, 0.0}}), Error);

    // period-2 orbit of the Arnold map: (2/5, 1/5) <-> ... found by orbit_of
    const auto orb = InvariantMeasure::orbit_of(arnold, {0.4, 0.2});
    const auto& pts = orb.points();
    REQUIRE(pts.size() >= 2);
    const auto t = orbit_cylinders(orb, PartitionSpec(3), 3);
    double s = 0;
    for (double v : t) s += v;
    REQUIRE(std::abs(s - 1.0) < 1e-14);
    REQUIRE_THROWS_AS(InvariantMeasure::mixture({0.5, 0.4}, {fixed, orb}), Error);
}

TEST_CASE("entropy: uniform words, additivity, Lebesgue rate", "[classical]") {
    const auto leb = InvariantMeasure::lebesgue();
    const double lam = lyapunov(arnold);
    const MonteCarlo mc{1000000, 7};
    const PartitionSpec p3(3);
    std::vector<double> H;
    for (int n = 1; n <= 6; ++n) H.push_back(classical_entropy(leb, arnold, p3, n, mc).value);
    // one-step cylinders are the strips themselves
    REQUIRE(std::abs(H[0] - std::log(3.0)) < 1e-3);
    for (std::size_t i = 1; i < H.size(); ++i) REQUIRE(H[i] >= H[i - 1]);
    for (int n = 1; n <= 3; ++n)
        for (int m = 1; n + m <= 6; ++m) REQUIRE(H[n + m - 1] <= H[n - 1] + H[m - 1] + 1e-2);
    REQUIRE(std::abs(H[5] / 6 - lam) < 0.25 * lam);

    // a synthetic table uniform over all words
    CylinderTable u;
    u.value.assign(81, 1.0 / 81);
    REQUIRE(std::abs(table_entropy(u).value - 4 * std::log(3.0)) < 1e-12);

    // the block-entropy difference is a sharper rate proxy than H(n)/n
    const auto d = entropy_rate_proxy(leb, arnold, p3, 7, mc);
    REQUIRE(std::abs(d.value - lam) < std::abs(H[5] / 6 - lam));
}

TEST_CASE("Ruelle inequality checks", "[classical]") {
    const MonteCarlo mc{1000000, 3};
    const auto fixed = InvariantMeasure::orbit(arnold, {{0.0, 0.0}});
    const auto r0 = ruelle_check(fixed, arnold, PartitionSpec(3), 6, mc);
    REQUIRE(r0.rate_estimate == 0.0);
    REQUIRE(r0.satisfied);
    const auto mix = InvariantMeasure::mixture({0.5, 0.5}, {fixed, InvariantMeasure::lebesgue()});
    const auto rm = ruelle_check(mix, arnold, PartitionSpec(3), 6, mc);
    REQUIRE(rm.satisfied);
    REQUIRE(rm.rate_estimate <= rm.ruelle_bound);

    // Lebesgue: H(n)/n approaches lambda from above; at desk n it is still above
    // the bound, but decreasing toward it.
    const auto leb = InvariantMeasure::lebesgue();
    double prev = 1e9;
    for (int n : {2, 4, 6, 8}) {
        const auto r = ruelle_check(leb, arnold, PartitionSpec(3), n, mc);
        REQUIRE(r.rate_estimate < prev);
        REQUIRE(r.rate_estimate >= r.ruelle_bound - 3 * r.stderr_);
        prev = r.rate_estimate;
    }
    REQUIRE(prev < 1.1 * lyapunov(arnold));
}

TEST_CASE("SMB splitting fixtures", "[classical]") {
    const double lam = lyapunov(arnold);
    const MonteCarlo mc{1000000, 11};
    const PartitionSpec p3(3);
    const auto fixed = InvariantMeasure::orbit(arnold, {{0.0, 0.0}});
    const auto leb = InvariantMeasure::lebesgue();
    const auto mix = InvariantMeasure::mixture({0.5, 0.5}, {fixed, leb});

    const auto s = smb_split(mix, arnold, p3, lam / 2, 0.1, 6, mc);
    REQUIRE(s.a == 0.5);
    REQUIRE(s.b == 0.5);
    REQUIRE(s.L_words.size() == 1);
    REQUIRE(s.L_words[0] == 0);
    REQUIRE(s.cardinality_ok());
    for (const auto& q : s.inequalities) {
        INFO(q.name << ": " << q.lhs << " < " << q.rhs);
        REQUIRE(q.holds());
    }
    double muL = s.mu.value[0];
    REQUIRE(muL > 0.5 * (1 - 0.1));

    const auto sl = smb_split(leb, arnold, p3, lam / 2, 0.1, 6, mc);
    REQUIRE(sl.a == 0.0);
    REQUIRE(sl.b == 1.0);
    REQUIRE(sl.L_words.empty());
    for (const auto& q : sl.inequalities) REQUIRE(q.holds());

    const auto sf = smb_split(fixed, arnold, p3, lam / 2, 0.1, 6, mc);
    REQUIRE(sf.a == 1.0);
    REQUIRE(sf.b == 0.0);
    REQUIRE(sf.mu.value[0] == 1.0);
    REQUIRE(sf.in_L(0));

    REQUIRE_THROWS_AS(smb_split(leb, arnold, p3, lam, 0.1, 4, mc), Error);
}
