#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include "sweepsim/rng.hpp"

namespace sweepsim {

/// Runs `body(rng, replicate_id)` for replicate ids [first, first + count)
/// on a pool of `threads` workers. Each replicate owns the stream
/// (seed, replicate_id), and results land at their replicate index, so the
/// output does not depend on the thread count or the scheduling order.
template <class Body>
auto run_replicates(std::uint64_t seed, std::uint64_t count, unsigned threads, Body body,
                    std::uint64_t first = 0) {
    using Result = decltype(body(std::declval<RngStream&>(), std::uint64_t{}));
    std::vector<Result> results(count);
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::uint64_t>(count, 1))));

    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::uint64_t k = next.fetch_add(1);
            if (k >= count) return;
            try {
                RngStream rng(seed, first + k);
                results[k] = body(rng, first + k);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };

    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

}  // namespace sweepsim
