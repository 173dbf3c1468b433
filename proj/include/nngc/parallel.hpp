#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nngc {

[[nodiscard]] inline std::size_t resolve_jobs(std::size_t requested) {
    if (requested > 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(0..n-1) on at most `jobs` threads. Each index must write only to
/// its own output slot, so results do not depend on scheduling. The first
/// exception (lowest index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    jobs = std::min(resolve_jobs(jobs), n);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::size_t error_index = n;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(jobs);
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
}

} // namespace nngc
