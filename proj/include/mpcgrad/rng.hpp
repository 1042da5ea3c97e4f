#pragma once

#include <cmath>
#include <cstdint>

namespace mpcgrad {

namespace detail {
// SplitMix64 output function (Steele/Lea/Flood construction, Vigna's constants).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based splittable generator. A stream is identified by a 64-bit key;
/// the value at counter i is a pure function of (key, i), so streams can be
/// replayed and split deterministically regardless of evaluation order.
class SplitRng {
public:
    SplitRng() = default;
    explicit SplitRng(std::uint64_t key) : key_(key) {}

    /// Derive an independent child stream. split(i) is a pure function of
    /// (key, i); splitting never disturbs this stream's counter.
    [[nodiscard]] SplitRng split(std::uint64_t index) const {
        return SplitRng(detail::mix64(key_ ^ detail::mix64(index + 0x632BE59BD9B4E019ULL)));
    }

    [[nodiscard]] std::uint64_t key() const { return key_; }

    std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    /// Uniform on [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Standard normal via Box-Muller; consumes two uniforms per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::uint64_t key_ = 0x9E3779B97F4A7C15ULL;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace mpcgrad
