#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace foodfuse {

// Deterministic keyed random stream. A stream is addressed by
// (root_seed, purpose tag, item index); the sequence it yields depends only
// on that key, never on draws taken from other streams. All draws are
// generated from our own xoshiro256++ core so results are identical across
// platforms and standard libraries.
class RngStream {
public:
    RngStream(uint64_t root_seed, std::string_view purpose, uint64_t index = 0) {
        uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the purpose tag
        for (char c : purpose) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        uint64_t x = root_seed;
        x = splitmix(x ^ h);
        x = splitmix(x ^ (index * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL));
        for (auto& w : state_) {
            x = splitmix(x);
            w = x;
        }
    }

    uint64_t next_u64() {
        uint64_t* s = state_;
        uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int64_t uniform_int(int64_t n) {
        // rejection to avoid modulo bias
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return static_cast<int64_t>(v % un);
    }

    // standard normal, Box-Muller with a cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void fill_normal(T* dst, int64_t n, double stddev = 1.0, double mean = 0.0) {
        for (int64_t i = 0; i < n; i++) dst[i] = static_cast<T>(mean + stddev * normal());
    }

    template <typename T>
    void fill_uniform(T* dst, int64_t n, double lo = 0.0, double hi = 1.0) {
        for (int64_t i = 0; i < n; i++) dst[i] = static_cast<T>(uniform(lo, hi));
    }

private:
    static uint64_t splitmix(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static uint64_t splitmix(uint64_t&& x) {
        uint64_t y = x;
        return splitmix(y);
    }
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace foodfuse
