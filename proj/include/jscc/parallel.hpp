#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace jscc {

// Runs fn(0..n-1) across up to max_threads workers. Tasks must be mutually
// independent and write only to their own output slots; results are then
// deterministic regardless of scheduling. The first thrown exception is
// rethrown on the caller.
inline void parallel_for(std::size_t n, unsigned max_threads,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const unsigned workers =
        std::max(1u, std::min<unsigned>(max_threads, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline unsigned hardware_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n ? n : 2;
}

}  // namespace jscc
