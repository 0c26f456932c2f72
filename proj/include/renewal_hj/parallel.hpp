#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace renewal_hj {

/// Runs f(i) for i in [0, n) on up to `workers` threads, each thread taking
/// one contiguous block. Every index is computed by exactly one call, so the
/// results do not depend on the worker count as long as f(i) only writes
/// slot i. The first exception (in block order) is rethrown.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), std::max<std::size_t>(n, 1));
    if (k <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::exception_ptr> errors(k);
    std::vector<std::thread> threads;
    threads.reserve(k - 1);
    auto run_block = [&](std::size_t b) {
        const std::size_t lo = n * b / k;
        const std::size_t hi = n * (b + 1) / k;
        try {
            for (std::size_t i = lo; i < hi; ++i) f(i);
        } catch (...) {
            errors[b] = std::current_exception();
        }
    };
    for (std::size_t b = 1; b < k; ++b) threads.emplace_back(run_block, b);
    run_block(0);
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace renewal_hj
