#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace earpipe {

inline int default_worker_count() {
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs body(state, i) for i in [0, n) on up to `workers` threads. Each worker gets its own
/// state from make_state(), so backends are never shared. The first exception is rethrown
/// after all workers stop.
template <typename MakeState, typename Body>
void parallel_for(std::size_t n, int workers, MakeState&& make_state, Body&& body) {
    if (n == 0) return;
    const auto count = static_cast<std::size_t>(std::clamp<long>(workers, 1, static_cast<long>(n)));
    if (count == 1) {
        auto state = make_state();
        for (std::size_t i = 0; i < n; ++i) body(state, i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(count);
        for (std::size_t t = 0; t < count; ++t) {
            pool.emplace_back([&] {
                try {
                    auto state = make_state();
                    for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) body(state, i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace earpipe
