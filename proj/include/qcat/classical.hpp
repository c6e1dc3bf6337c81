#pragma once

#include "torus.hpp"

#include <limits>
#include <numeric>
#include <optional>

namespace qcat {

// Symbolic word; symbol j is the cell visited at time j.
using Word = std::vector<int>;

inline std::int64_t word_index(const Word& w, int K) {
    std::int64_t idx = 0;
    for (int s : w) idx = idx * K + s;
    return idx;
}

inline Word word_from_index(std::int64_t idx, int n, int K) {
    Word w(n);
    for (int j = n - 1; j >= 0; --j) {
        w[j] = int(idx % K);
        idx /= K;
    }
    return w;
}

inline char symbol_char(int s) { return s < 10 ? char('0' + s) : char('a' + s - 10); }

inline std::string word_to_string(const Word& w) {
    std::string s;
    for (int x : w) s.push_back(symbol_char(x));
    return s;
}

inline Word parse_word(const std::string& s, int K) {
    Word w;
    for (char c : s) {
        int v = -1;
        if (c >= '0' && c <= '9') v = c - '0';
        else if (c >= 'a' && c <= 'z') v = 10 + c - 'a';
        if (v < 0 || v >= K) throw Error("BadWord", "symbol '" + std::string(1, c) + "' outside alphabet");
        w.push_back(v);
    }
    return w;
}

// K vertical strips [offset + k/K, offset + (k+1)/K) x [0,1), taken mod 1.
struct PartitionSpec {
    int K = 3;
    double offset = 0.0;

    PartitionSpec() = default;
    explicit PartitionSpec(int k, double off = 0.0) : K(k), offset(off) {
        if (k < 1 || k > 36) throw Error("BadPartition", "K must be in [1, 36]");
    }
    double diameter() const { return 1.0 / K; }
    double left(int k) const { return offset + double(k) / K; }
    int cell_of(double x) const {
        double t = std::fmod(x - offset, 1.0);
        if (t < 0) t += 1.0;
        int c = int(std::floor(t * K));
        return std::clamp(c, 0, K - 1);
    }
};

// J_n^u(alpha): product of the per-step unstable Jacobian, e^{n lambda} for a linear map
inline double coarse_jacobian(const CatMapSpec& cat, const Word& word) {
    return std::exp(double(word.size()) * lyapunov(cat));
}

struct MonteCarlo {
    std::int64_t samples = 1000000;
    std::uint64_t seed = 12345;
};

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

class InvariantMeasure {
public:
    enum class Kind { Lebesgue, OrbitAtomic, Mixture };

    static InvariantMeasure lebesgue() { return InvariantMeasure(Kind::Lebesgue); }

    // Uniform measure on the periodic orbit listed in dynamical order.
    static InvariantMeasure orbit(const CatMapSpec& cat, std::vector<std::array<double, 2>> points) {
        if (points.empty()) throw Error("NotPeriodic", "empty orbit");
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto img = cat.apply(points[i][0], points[i][1]);
            const auto& nxt = points[(i + 1) % points.size()];
            if (torus_gap(img, nxt) > 1e-9) throw Error("NotPeriodic", "listed points are not an orbit of A");
        }
        InvariantMeasure m(Kind::OrbitAtomic);
        m.points_ = std::move(points);
        return m;
    }

    // Orbit generated from a single point with rational coordinates (denominator
    // up to 2^20), followed exactly in integer arithmetic mod the denominator.
    static InvariantMeasure orbit_of(const CatMapSpec& cat, std::array<double, 2> p, int max_period = 100000) {
        const auto rx = rational_approx(p[0]), ry = rational_approx(p[1]);
        if (!rx || !ry) throw Error("NotPeriodic", "point is not rational with small denominator");
        const std::int64_t q = std::lcm(rx->second, ry->second);
        const std::int64_t x0 = mod(rx->first * (q / rx->second), q), y0 = mod(ry->first * (q / ry->second), q);
        std::vector<std::array<double, 2>> pts;
        std::int64_t x = x0, y = y0;
        for (int t = 0; t < max_period; ++t) {
            pts.push_back({double(x) / double(q), double(y) / double(q)});
            const std::int64_t nx = mod(mod(cat.a, q) * x + mod(cat.b, q) * y, q);
            const std::int64_t ny = mod(mod(cat.c, q) * x + mod(cat.d, q) * y, q);
            x = nx;
            y = ny;
            if (x == x0 && y == y0) return orbit(cat, pts);
        }
        throw Error("NotPeriodic", "no period found up to " + std::to_string(max_period));
    }

    // best rational p/q with q <= max_den and |x - p/q| < 1e-9, by continued fractions
    static std::optional<std::pair<std::int64_t, std::int64_t>> rational_approx(double x,
                                                                                std::int64_t max_den = 1 << 20) {
        std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
        double r = x;
        for (int it = 0; it < 64; ++it) {
            const double a = std::floor(r);
            const std::int64_t ai = std::int64_t(a);
            const std::int64_t h2 = ai * h1 + h0, k2 = ai * k1 + k0;
            if (k2 > max_den) break;
            h0 = h1;
            h1 = h2;
            k0 = k1;
            k1 = k2;
            if (std::abs(x - double(h1) / double(k1)) < 1e-9) return std::make_pair(h1, k1);
            const double frac = r - a;
            if (frac < 1e-15) break;
            r = 1.0 / frac;
        }
        return std::nullopt;
    }

    static InvariantMeasure mixture(std::vector<double> weights, std::vector<InvariantMeasure> comps) {
        if (weights.size() != comps.size() || comps.empty()) throw Error("BadMixture", "weights/components mismatch");
        double s = 0;
        for (double w : weights) {
            if (w < 0) throw Error("BadMixture", "negative weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-12) throw Error("BadMixture", "weights must sum to 1");
        InvariantMeasure m(Kind::Mixture);
        for (std::size_t i = 0; i < comps.size(); ++i) {
            if (comps[i].kind_ == Kind::Mixture) {
                for (std::size_t j = 0; j < comps[i].components_.size(); ++j) {
                    m.weights_.push_back(weights[i] * comps[i].weights_[j]);
                    m.components_.push_back(comps[i].components_[j]);
                }
            } else {
                m.weights_.push_back(weights[i]);
                m.components_.push_back(comps[i]);
            }
        }
        return m;
    }

    Kind kind() const { return kind_; }
    const std::vector<std::array<double, 2>>& points() const { return points_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<InvariantMeasure>& components() const { return components_; }

    // KS entropy of an ergodic component: 0 for periodic orbits, lambda for Lebesgue
    double ergodic_entropy(const CatMapSpec& cat) const {
        switch (kind_) {
            case Kind::Lebesgue: return lyapunov(cat);
            case Kind::OrbitAtomic: return 0.0;
            default: throw Error("NotErgodic", "mixture has no single ergodic entropy");
        }
    }

    // (weight, component) pairs; a non-mixture is its own single component
    std::vector<std::pair<double, InvariantMeasure>> flatten() const {
        std::vector<std::pair<double, InvariantMeasure>> out;
        if (kind_ != Kind::Mixture) {
            out.emplace_back(1.0, *this);
            return out;
        }
        for (std::size_t i = 0; i < components_.size(); ++i) out.emplace_back(weights_[i], components_[i]);
        return out;
    }

    static double torus_gap(const std::array<double, 2>& a, const std::array<double, 2>& b) {
        double g = 0;
        for (int i = 0; i < 2; ++i) {
            double d = std::fmod(std::abs(a[i] - b[i]), 1.0);
            g = std::max(g, std::min(d, 1.0 - d));
        }
        return g;
    }

private:
    explicit InvariantMeasure(Kind k) : kind_(k) {}
    Kind kind_;
    std::vector<std::array<double, 2>> points_;
    std::vector<double> weights_;
    std::vector<InvariantMeasure> components_;
};

// Probabilities of all K^n cylinders E_alpha = cap_j A^{-j} E_{alpha_j}, indexed by word_index,
// with per-entry standard errors (zero for exactly computed parts).
struct CylinderTable {
    int n = 0;
    int K = 0;
    std::vector<double> value;
    std::vector<double> stderr_;
    std::int64_t samples = 0;       // Monte-Carlo samples behind the Lebesgue part (0 if none)
    double lebesgue_weight = 0.0;   // total weight of Lebesgue components
    std::vector<double> lebesgue;   // empirical Lebesgue frequencies (empty if none)
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::int64_t itinerary_index(const CatMapSpec& cat, const PartitionSpec& part, double x, double y, int n) {
    std::int64_t idx = 0;
    for (int j = 0; j < n; ++j) {
        idx = idx * part.K + part.cell_of(x);
        const auto z = cat.apply(x, y);
        x = z[0];
        y = z[1];
    }
    return idx;
}

// Word counts of n-step itineraries of uniformly sampled points. Samples are
// drawn in fixed blocks with seeds derived from the master seed.
inline std::vector<std::int64_t> lebesgue_counts(const CatMapSpec& cat, const PartitionSpec& part, int n,
                                                 const MonteCarlo& mc) {
    if (mc.samples < 10000) throw Error("BadSampleCount", "Lebesgue cylinders need at least 1e4 samples");
    const std::int64_t words = ipow(part.K, n);
    constexpr std::int64_t block = 1 << 16;
    const std::int64_t nblocks = (mc.samples + block - 1) / block;
    std::vector<std::vector<std::int64_t>> partial(static_cast<std::size_t>(nblocks));
    parallel_for(std::size_t(nblocks), [&](std::size_t b) {
        std::mt19937_64 rng(splitmix64(mc.seed ^ splitmix64(b + 1)));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        auto& cnt = partial[b];
        cnt.assign(std::size_t(words), 0);
        const std::int64_t lo = std::int64_t(b) * block;
        const std::int64_t hi = std::min(mc.samples, lo + block);
        for (std::int64_t s = lo; s < hi; ++s) {
            const double x = u(rng), y = u(rng);
            ++cnt[std::size_t(itinerary_index(cat, part, x, y, n))];
        }
    });
    std::vector<std::int64_t> total(std::size_t(words), 0);
    for (const auto& c : partial)
        for (std::size_t i = 0; i < c.size(); ++i) total[i] += c[i];
    return total;
}

}  // namespace detail

// Itineraries of one periodic orbit: fraction of orbit points with each word.
inline std::vector<double> orbit_cylinders(const InvariantMeasure& m, const PartitionSpec& part, int n) {
    const auto& pts = m.points();
    const std::size_t P = pts.size();
    std::vector<double> t(std::size_t(ipow(part.K, n)), 0.0);
    for (std::size_t i = 0; i < P; ++i) {
        std::int64_t idx = 0;
        for (int j = 0; j < n; ++j) idx = idx * part.K + part.cell_of(pts[(i + std::size_t(j)) % P][0]);
        t[std::size_t(idx)] += 1.0 / double(P);
    }
    return t;
}

inline CylinderTable cylinder_table(const InvariantMeasure& mu, const CatMapSpec& cat, const PartitionSpec& part, int n,
                                    const MonteCarlo& mc) {
    CylinderTable out;
    out.n = n;
    out.K = part.K;
    const std::size_t W = std::size_t(ipow(part.K, n));
    out.value.assign(W, 0.0);
    out.stderr_.assign(W, 0.0);
    for (const auto& [w, comp] : mu.flatten())
        if (comp.kind() == InvariantMeasure::Kind::Lebesgue) out.lebesgue_weight += w;
    if (out.lebesgue_weight > 0) {
        const auto counts = detail::lebesgue_counts(cat, part, n, mc);
        out.samples = mc.samples;
        out.lebesgue.resize(W);
        for (std::size_t i = 0; i < W; ++i) {
            const double p = double(counts[i]) / double(mc.samples);
            out.lebesgue[i] = p;
            out.value[i] += out.lebesgue_weight * p;
            out.stderr_[i] = out.lebesgue_weight * std::sqrt(p * (1.0 - p) / double(mc.samples));
        }
    }
    for (const auto& [w, comp] : mu.flatten()) {
        if (comp.kind() != InvariantMeasure::Kind::OrbitAtomic) continue;
        const auto t = orbit_cylinders(comp, part, n);
        for (std::size_t i = 0; i < W; ++i) out.value[i] += w * t[i];
    }
    return out;
}

inline Estimate cylinder_measure(const InvariantMeasure& mu, const CatMapSpec& cat, const PartitionSpec& part,
                                 const Word& word, const MonteCarlo& mc) {
    if (word.empty()) return {1.0, 0.0};
    for (int s : word)
        if (s < 0 || s >= part.K) throw Error("BadWord", "symbol outside alphabet");
    const auto t = cylinder_table(mu, cat, part, int(word.size()), mc);
    const auto i = std::size_t(word_index(word, part.K));
    return {t.value[i], t.stderr_[i]};
}

// Entropy of a table plus a delta-method standard error for its Monte-Carlo part.
inline Estimate table_entropy(const CylinderTable& t) {
    Estimate e;
    for (double p : t.value) e.value += eta(p);
    if (t.samples > 0) {
        double m1 = 0, m2 = 0;
        for (std::size_t i = 0; i < t.value.size(); ++i) {
            const double q = t.lebesgue[i];
            if (q <= 0) continue;
            const double g = -t.lebesgue_weight * (std::log(t.value[i]) + 1.0);
            m1 += q * g;
            m2 += q * g * g;
        }
        e.stderr_ = std::sqrt(std::max(0.0, m2 - m1 * m1) / double(t.samples));
    }
    return e;
}

// H_0^{n-1}(mu) = sum over K^n words of eta(mu(E_alpha))
inline Estimate classical_entropy(const InvariantMeasure& mu, const CatMapSpec& cat, const PartitionSpec& part, int n,
                                  const MonteCarlo& mc) {
    if (n < 1) throw Error("BadLength", "n must be >= 1");
    return table_entropy(cylinder_table(mu, cat, part, n, mc));
}

// Conditional block entropy H(n) - H(n-1): the entropy-rate proxy used in reports.
inline Estimate entropy_rate_proxy(const InvariantMeasure& mu, const CatMapSpec& cat, const PartitionSpec& part, int n,
                                   const MonteCarlo& mc) {
    if (n < 2) throw Error("BadLength", "n must be >= 2");
    const auto a = classical_entropy(mu, cat, part, n, mc);
    const auto b = classical_entropy(mu, cat, part, n - 1, mc);
    return {a.value - b.value, a.stderr_ + b.stderr_};
}

struct RuelleCheck {
    double rate_estimate = 0.0;
    double stderr_ = 0.0;
    double ruelle_bound = 0.0;
    bool satisfied = false;
};

// rate = H_0^{n-1}/n at n = n_max against the Ruelle bound int log J^u dmu = lambda
inline RuelleCheck ruelle_check(const InvariantMeasure& mu, const CatMapSpec& cat, const PartitionSpec& part, int n_max,
                                const MonteCarlo& mc) {
    if (n_max < 2) throw Error("BadLength", "n_max must be >= 2");
    const auto h = classical_entropy(mu, cat, part, n_max, mc);
    RuelleCheck r;
    r.rate_estimate = h.value / n_max;
    r.stderr_ = h.stderr_ / n_max;
    r.ruelle_bound = lyapunov(cat);
    r.satisfied = r.rate_estimate <= r.ruelle_bound + 3.0 * r.stderr_;
    return r;
}

// Inequality lhs < rhs with the Monte-Carlo standard error of (rhs - lhs).
struct MassInequality {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double stderr_ = 0.0;
    // strictness is not observable at Monte-Carlo resolution; a zero weight makes both sides 0
    bool holds() const { return lhs <= rhs + 3.0 * stderr_; }
};

struct SMBSplit {
    int n0 = 0;
    int K = 0;
    double H0 = 0.0;
    double H_max = 0.0;
    double eps_bar = 0.0;
    double delta = 0.0;
    double eta_bar = 0.0;
    double a = 0.0, b = 0.0, c = 0.0;
    std::vector<std::int64_t> L_words;
    std::vector<std::int64_t> B_words;
    double cardinality_bound = 0.0;  // e^{(H0 - 2 delta/5) n0}
    // cylinder tables at length n0 of mu, mu_L, mu_H (normalized components; empty if weight 0)
    CylinderTable mu, mu_L, mu_H;
    std::vector<MassInequality> inequalities;
    bool cardinality_ok() const { return double(L_words.size()) <= cardinality_bound; }
    bool in_L(std::int64_t w) const { return std::binary_search(L_words.begin(), L_words.end(), w); }
    bool in_B(std::int64_t w) const { return std::binary_search(B_words.begin(), B_words.end(), w); }
};

namespace detail {

inline InvariantMeasure normalized_part(const std::vector<std::pair<double, InvariantMeasure>>& parts, double total) {
    std::vector<double> w;
    std::vector<InvariantMeasure> c;
    for (const auto& [pw, m] : parts) {
        w.push_back(pw / total);
        c.push_back(m);
    }
    double s = 0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    return InvariantMeasure::mixture(w, c);
}

// mass of a word set under a table, with Monte-Carlo stderr of the set probability
inline Estimate set_mass(const CylinderTable& t, const std::vector<char>& member) {
    Estimate e;
    double pl = 0;
    for (std::size_t i = 0; i < t.value.size(); ++i)
        if (member[i]) {
            e.value += t.value[i];
            if (t.samples > 0) pl += t.lebesgue[i];
        }
    if (t.samples > 0) e.stderr_ = t.lebesgue_weight * std::sqrt(pl * (1.0 - pl) / double(t.samples));
    return e;
}

}  // namespace detail

// Low/high entropy splitting of a finite ergodic mixture and the word sets L, B at length n0.
inline SMBSplit smb_split(const InvariantMeasure& mu, const CatMapSpec& cat, const PartitionSpec& part, double H0,
                          double eps_bar, int n0, const MonteCarlo& mc) {
    const double H_max = lyapunov(cat);
    if (!(H0 > 0 && H0 <= H_max + 1e-15)) throw Error("BadThreshold", "need 0 < H0 <= H_max");
    if (!(eps_bar > 0)) throw Error("BadThreshold", "eps_bar must be positive");
    SMBSplit s;
    s.n0 = n0;
    s.K = part.K;
    s.H0 = H0;
    s.H_max = H_max;
    s.eps_bar = eps_bar;
    const auto comps = mu.flatten();
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& [w, m] : comps) gap = std::min(gap, std::abs(H0 - m.ergodic_entropy(cat)));
    s.delta = std::min(0.5 * gap, 0.5 * H0);
    if (!(s.delta > 0)) throw Error("ThresholdDegenerate", "H0 coincides with a component entropy");
    s.eta_bar = std::min(s.delta / 10.0, eps_bar / 3.0);
    std::vector<std::pair<double, InvariantMeasure>> low, high, mid;
    for (const auto& [w, m] : comps) {
        const double h = m.ergodic_entropy(cat);
        if (w == 0) continue;
        if (h < H0 - s.delta / 2) low.emplace_back(w, m);
        else if (h >= H0) high.emplace_back(w, m);
        else mid.emplace_back(w, m);
    }
    for (const auto& p : low) s.a += p.first;
    for (const auto& p : high) s.b += p.first;
    s.c = 1.0 - s.a - s.b;
    if (s.a == 0 && s.b == 0) throw Error("ThresholdDegenerate", "both a and b vanish");
    s.mu = cylinder_table(mu, cat, part, n0, mc);
    const std::size_t W = s.mu.value.size();
    const double l_thresh = std::exp(-(H0 + s.eta_bar) * n0);
    const double b_thresh = std::exp(-(H_max + s.delta / 5.0) * n0);
    if (s.a > 0) {
        s.mu_L = cylinder_table(detail::normalized_part(low, s.a), cat, part, n0, mc);
        for (std::size_t i = 0; i < W; ++i)
            if (s.mu_L.value[i] > l_thresh) s.L_words.push_back(std::int64_t(i));
    }
    if (s.b > 0) {
        s.mu_H = cylinder_table(detail::normalized_part(high, s.b), cat, part, n0, mc);
        for (std::size_t i = 0; i < W; ++i)
            if (s.mu_H.value[i] >= b_thresh) s.B_words.push_back(std::int64_t(i));
    }
    s.cardinality_bound = std::exp((H0 - 2.0 * s.delta / 5.0) * n0);

    std::vector<char> inL(W, 0), inLc(W, 1);
    for (auto w : s.L_words) {
        inL[std::size_t(w)] = 1;
        inLc[std::size_t(w)] = 0;
    }
    const auto muL = detail::set_mass(s.mu, inL);
    const auto muLc = detail::set_mass(s.mu, inLc);
    Estimate lowL{0, 0}, highLc{0, 0};
    if (s.a > 0) lowL = detail::set_mass(s.mu_L, inL);
    if (s.b > 0) highLc = detail::set_mass(s.mu_H, inLc);
    const double e = eps_bar;
    s.inequalities.push_back({"a - a*eps_bar < mu(L)", s.a - s.a * e, muL.value, muL.stderr_});
    s.inequalities.push_back({"mu(L) < a*mu_L(L) + eps_bar", muL.value, s.a * lowL.value + e,
                              std::hypot(muL.stderr_, s.a * lowL.stderr_)});
    s.inequalities.push_back({"b - b*eps_bar < mu(L^c)", s.b - s.b * e, muLc.value, muLc.stderr_});
    s.inequalities.push_back({"mu(L^c) < b*mu_H(L^c) + eps_bar", muLc.value, s.b * highLc.value + e,
                              std::hypot(muLc.stderr_, s.b * highLc.stderr_)});
    if (s.b > 0) {
        // mu_H-mass of words in L^c above e^{-(H0 - delta/3) n0}
        const double cap = std::exp(-(H0 - s.delta / 3.0) * n0);
        std::vector<char> heavy(W, 0);
        for (std::size_t i = 0; i < W; ++i) heavy[i] = inLc[i] && s.mu_H.value[i] > cap;
        const auto hm = detail::set_mass(s.mu_H, heavy);
        s.inequalities.push_back({"mu_H(heavy words in L^c) <= eps_bar/3", hm.value, e / 3.0, hm.stderr_});
    }
    s.inequalities.push_back({"c*mu_M < eps_bar/3", s.c, e / 3.0, 0.0});
    return s;
}

// Points sampled from Lebesgue measure; used to draw typical word pairs.
inline std::vector<std::array<double, 2>> lebesgue_points(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(detail::splitmix64(seed));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::array<double, 2>> pts(count);
    for (auto& p : pts) {
        p[0] = u(rng);
        p[1] = u(rng);
    }
    return pts;
}

inline Word itinerary(const CatMapSpec& cat, const PartitionSpec& part, std::array<double, 2> z, int n) {
    Word w(n);
    for (int j = 0; j < n; ++j) {
        w[j] = part.cell_of(z[0]);
        z = cat.apply(z[0], z[1]);
    }
    return w;
}

}  // namespace qcat
