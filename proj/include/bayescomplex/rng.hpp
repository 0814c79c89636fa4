#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace bayescomplex {

/// Counter-based generator (Philox4x32-10) keyed by a 64-bit seed and a
/// 64-bit stream id. Draw n of a given (seed, stream_id) is a pure function
/// of those three numbers, so every platform produces the same sequence and
/// workers on distinct streams never overlap.
///
/// Distributions are implemented here rather than taken from <random>,
/// whose normal/uniform adaptors are implementation-defined.
class SeededRng {
public:
    using result_type = std::uint64_t;

    explicit SeededRng(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }

    /// Independent generator for a sub-task (worker, replica, grid point).
    SeededRng substream(std::uint64_t index) const;

    std::uint64_t next_u64();
    std::uint64_t operator()() { return next_u64(); }
    static constexpr std::uint64_t min() { return 0; }
    static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

    /// Uniform on the open interval (0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal (Box-Muller; the second variate is cached).
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int block_pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bayescomplex
