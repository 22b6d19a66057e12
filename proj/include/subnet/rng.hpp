#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace subnet {

// Deterministic xoshiro256++ stream with hand-rolled transforms so that
// sequences are identical across standard libraries and platforms.
class Rng {
  public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        // splitmix64 expansion of the seed into the xoshiro state
        uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            s = z ^ (z >> 31);
        }
        has_cached_normal_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument
    double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n)
    int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

    // Standard normal via Box-Muller, one cached value
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925287 * u2;
        cached_normal_ = r * std::sin(a);
        has_cached_normal_ = true;
        return r * std::cos(a);
    }

    // Categorical draw from a probability vector (assumed to sum to ~1).
    // Bucket order follows the vector; any residual mass goes to the last entry.
    int categorical(const std::vector<double>& probs) {
        const double u = uniform();
        double acc = 0.0;
        for (size_t k = 0; k + 1 < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc) return int(k);
        }
        return int(probs.size()) - 1;
    }

    // Independent child stream for a named purpose
    Rng derive(std::string_view tag) const {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (const char c : tag) h = (h ^ uint64_t(uint8_t(c))) * 0x100000001b3ULL;
        for (const auto s : state_) h = (h ^ s) * 0x100000001b3ULL;
        return Rng(h);
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace subnet
