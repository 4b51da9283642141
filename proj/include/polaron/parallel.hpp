#pragma once

// Fixed-chunk parallel loops. Chunk boundaries depend only on the problem
// size, so per-chunk partial results and their pairwise reduction are the
// same for any worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "polaron/summation.hpp"

namespace polaron {

/// Run body(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// rethrown on the calling thread (the one with the lowest index wins).
inline void parallel_for(std::size_t n, unsigned workers,
                         const std::function<void(std::size_t)>& body) {
    workers = std::max(1u, workers);
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::size_t err_index = n;
    std::exception_ptr err;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned t = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    pool.reserve(t);
    for (unsigned k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

/// Sum of term(i) over [0, n): each fixed-size chunk is reduced with a cascade
/// sum, the chunk totals with a pairwise tree.
inline double deterministic_sum(std::size_t n, unsigned workers,
                                const std::function<double(std::size_t)>& term,
                                std::size_t chunk = 256) {
    const std::size_t chunks = (n + chunk - 1) / chunk;
    std::vector<double> partial(chunks, 0.0);
    parallel_for(chunks, workers, [&](std::size_t c) {
        CascadeSum s;
        const std::size_t lo = c * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) s.add(term(i));
        partial[c] = s.value();
    });
    return pairwise_sum(partial);
}

}  // namespace polaron
