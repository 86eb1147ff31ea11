#pragma once

// Counter-keyed RNG streams for reproducible parallel Monte Carlo.
//
// Every logical stream (one per replicate, path, or stage trajectory) is an
// xoshiro256++ generator seeded from a splitmix64 key chain, so stream k of a
// run is fully determined by (seed, tag, k) and independent of thread
// scheduling. Normal and exponential variates use the classic 128/256-layer
// ziggurat tables; the hot particle loop draws ~10^11 of them, which rules
// out the stdlib distributions (3-5x slower and not stable across libstdc++
// versions anyway).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace sbmr {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    return mix64(state);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Key for one logical stream. Extra levels (stage, sub-stream) chain through
// the same mix, so derive_key(derive_key(s, a), b) stays collision-resistant.
inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag,
                                std::uint64_t index = 0) {
    std::uint64_t k = mix64(seed ^ 0x6A09E667F3BCC909ULL);
    k = mix64(k ^ tag);
    k = mix64(k ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    return k;
}

class Rng {
public:
    explicit Rng(std::uint64_t key = 0) { reseed(key); }

    void reseed(std::uint64_t key) {
        std::uint64_t sm = key;
        for (auto& w : s_) w = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in (0,1), never exactly 0 or 1 (safe under log()).
    double next_double() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform index in [0, n); multiply-shift, bias O(n/2^64).
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool next_bernoulli(double p) { return next_double() < p; }

    double next_normal();
    double next_exponential();  // rate 1

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

namespace detail {

// Marsaglia-Tsang ziggurat tables, built once per process.
struct ZigguratTables {
    std::uint32_t kn[128];
    double wn[128], fn[128];
    std::uint32_t ke[256];
    double we[256], fe[256];

    ZigguratTables() {
        {
            double dn = 3.442619855899, tn = dn;
            const double vn = 9.91256303526217e-3, m1 = 2147483648.0;
            double q = vn / std::exp(-0.5 * dn * dn);
            kn[0] = static_cast<std::uint32_t>((dn / q) * m1);
            kn[1] = 0;
            wn[0] = q / m1;
            wn[127] = dn / m1;
            fn[0] = 1.0;
            fn[127] = std::exp(-0.5 * dn * dn);
            for (int i = 126; i >= 1; i--) {
                dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
                kn[i + 1] = static_cast<std::uint32_t>((dn / tn) * m1);
                tn = dn;
                fn[i] = std::exp(-0.5 * dn * dn);
                wn[i] = dn / m1;
            }
        }
        {
            double de = 7.697117470131487, te = de;
            const double ve = 3.949659822581572e-3, m2 = 4294967296.0;
            double q = ve / std::exp(-de);
            ke[0] = static_cast<std::uint32_t>((de / q) * m2);
            ke[1] = 0;
            we[0] = q / m2;
            we[255] = de / m2;
            fe[0] = 1.0;
            fe[255] = std::exp(-de);
            for (int i = 254; i >= 1; i--) {
                de = -std::log(ve / de + std::exp(-de));
                ke[i + 1] = static_cast<std::uint32_t>((de / te) * m2);
                te = de;
                fe[i] = std::exp(-de);
                we[i] = de / m2;
            }
        }
    }
};

inline const ZigguratTables& ziggurat() {
    static const ZigguratTables tables;
    return tables;
}

}  // namespace detail

inline double Rng::next_normal() {
    const auto& z = detail::ziggurat();
    for (;;) {
        const std::int32_t hz = static_cast<std::int32_t>(next_u64());
        const std::uint32_t iz = static_cast<std::uint32_t>(hz) & 127u;
        const std::uint32_t ahz =
            hz >= 0 ? static_cast<std::uint32_t>(hz) : static_cast<std::uint32_t>(-(std::int64_t)hz);
        if (ahz < z.kn[iz]) return hz * z.wn[iz];

        constexpr double r = 3.442619855899;
        if (iz == 0) {
            double x, y;
            do {
                x = -std::log(next_double()) / r;
                y = -std::log(next_double());
            } while (y + y < x * x);
            return hz > 0 ? r + x : -(r + x);
        }
        const double x = hz * z.wn[iz];
        if (z.fn[iz] + next_double() * (z.fn[iz - 1] - z.fn[iz]) <
            std::exp(-0.5 * x * x)) {
            return x;
        }
    }
}

inline double Rng::next_exponential() {
    const auto& z = detail::ziggurat();
    for (;;) {
        const std::uint32_t jz = static_cast<std::uint32_t>(next_u64());
        const std::uint32_t iz = jz & 255u;
        if (jz < z.ke[iz]) return jz * z.we[iz];

        if (iz == 0) return 7.697117470131487 - std::log(next_double());
        const double x = jz * z.we[iz];
        if (z.fe[iz] + next_double() * (z.fe[iz - 1] - z.fe[iz]) < std::exp(-x)) {
            return x;
        }
    }
}

}  // namespace sbmr
