#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <thread>
#include <vector>

#include "bayescomplex/rng.hpp"

namespace bayescomplex {

/// Splits n draws into `workers` contiguous chunks, runs
/// fn(rng_for_chunk, count) -> Stats on each, and returns the per-chunk
/// statistics in chunk order. Chunk i always uses rng.substream(i), so the
/// merged result depends only on (seed, stream, workers) and not on thread
/// scheduling.
template <class Fn>
auto run_partitioned(std::size_t n, unsigned workers, const SeededRng& rng, Fn fn) {
    using Stats = decltype(fn(std::declval<SeededRng&>(), std::size_t{}));
    workers = std::max(1u, workers);
    std::vector<Stats> out(workers);
    std::vector<std::size_t> counts(workers, n / workers);
    for (std::size_t i = 0; i < n % workers; ++i) ++counts[i];

    if (workers == 1) {
        SeededRng local = rng.substream(0);
        out[0] = fn(local, counts[0]);
        return out;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            SeededRng local = rng.substream(w);
            out[w] = fn(local, counts[w]);
        });
    }
    pool.clear();  // joins
    return out;
}

}  // namespace bayescomplex
