#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace pic {

// Deterministic PRNG used everywhere randomness is needed. xoshiro256**
// seeded through splitmix64, with explicitly written distributions, so a
// given seed produces the same stream on every platform and stdlib.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) {
            si = splitmix64(x);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform double in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via the polar method; the spare value is discarded so
    // the state depends only on the number of calls
    double normal() {
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    std::array<double, 3> unit_vector() {
        // rejection-sampled direction, uniform on the sphere
        while (true) {
            const double x = uniform(-1.0, 1.0);
            const double y = uniform(-1.0, 1.0);
            const double z = uniform(-1.0, 1.0);
            const double n2 = x * x + y * y + z * z;
            if (n2 > 1e-12 && n2 <= 1.0) {
                const double inv = 1.0 / std::sqrt(n2);
                return {x * inv, y * inv, z * inv};
            }
        }
    }

    // k distinct indices from [0, n), in draw order (partial Fisher-Yates)
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(uniform_int(static_cast<uint64_t>(n - i)));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::array<uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<uint64_t, 4>& st) { s_ = st; }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> s_;
};

// Stable seed derivation: every sample's randomness comes from
// (global seed, string tag), so builds are order-independent.
inline uint64_t derive_seed(uint64_t global_seed, std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ULL ^ global_seed;
    for (const char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    // splitmix-style finalizer to spread low-entropy tags
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

}  // namespace pic
