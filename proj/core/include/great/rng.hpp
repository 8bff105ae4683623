// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace great {

// Deterministic random source. Every draw is derived from raw mt19937_64
// words with explicitly written transforms, so sequences are identical
// across standard libraries and platforms (std::*_distribution is
// implementation-defined and must not be used anywhere in this project).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix(seed)), inc_(splitmix(seed ^ 0x9e3779b97f4a7c15ull) | 1ull) {}

    uint64_t next_u64() {
        // xorshift128+ style step on two 64-bit words
        uint64_t x = state_;
        uint64_t y = inc_;
        state_ = y;
        x ^= x << 23;
        inc_ = x ^ y ^ (x >> 17) ^ (y >> 26);
        return inc_ + y;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) * static_cast<uint64_t>(n)) >> 64);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

private:
    uint64_t state_;
    uint64_t inc_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used for hashed-token embeddings and per-parameter seed derivation.
inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace great
