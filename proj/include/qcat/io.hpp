#pragma once

#include "torus.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace qcat {

namespace detail {

inline void put_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw Error("BadStateFile", "truncated state file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace detail

// <base>.bin holds interleaved re/im little-endian doubles; <base>.json the sidecar.
inline void export_state(const std::string& base, const Vec& state, nlohmann::json sidecar) {
    std::ofstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw Error("IoError", "cannot write " + base + ".bin");
    for (Eigen::Index i = 0; i < state.size(); ++i) {
        detail::put_le(bin, state(i).real());
        detail::put_le(bin, state(i).imag());
    }
    sidecar["N"] = state.size();
    sidecar["format"] = "complex128-le-interleaved";
    std::ofstream js(base + ".json");
    if (!js) throw Error("IoError", "cannot write " + base + ".json");
    js << sidecar.dump(2) << "\n";
}

inline std::pair<Vec, nlohmann::json> import_state(const std::string& base) {
    std::ifstream js(base + ".json");
    if (!js) throw Error("IoError", "cannot read " + base + ".json");
    const auto meta = nlohmann::json::parse(js);
    const int N = meta.at("N").get<int>();
    std::ifstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw Error("IoError", "cannot read " + base + ".bin");
    Vec v(N);
    for (int i = 0; i < N; ++i) {
        const double re = detail::get_le(bin);
        const double im = detail::get_le(bin);
        v(i) = cplx(re, im);
    }
    return {v, meta};
}

}  // namespace qcat
