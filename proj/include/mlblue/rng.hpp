#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace mlblue::rng {

/// Name and version of the generator, pinned in output metadata so that
/// published numbers can be reproduced.
inline constexpr const char* kGeneratorId = "splitmix64-fork/1";

namespace detail {
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Splittable counter-style stream. Substreams are derived by `fork`, so a
/// stream keyed by (seed, group, member, level) can be reconstructed from
/// anywhere, in any order: draws never depend on what other streams did.
/// Coupled levels share draws by forking the same key; distinct groups fork
/// distinct keys and are independent.
class Stream {
public:
    Stream() = default;
    explicit Stream(std::uint64_t seed) : state_(detail::mix64(seed + detail::kGolden)) {}

    /// Derive an independent substream identified by `key`.
    [[nodiscard]] Stream fork(std::uint64_t key) const {
        Stream s;
        s.state_ = detail::mix64(state_ ^ detail::mix64(key + detail::kGolden));
        return s;
    }

    std::uint64_t next_u64() {
        state_ += detail::kGolden;
        return detail::mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. Two uniforms per draw, no caching, so
    /// the mapping from stream position to output is stateless and exact.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // uniform() can return 0; shift into (0, 1] for the log.
        u1 = 1.0 - u1;
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    [[nodiscard]] std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0;
};

}  // namespace mlblue::rng
