#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace rfscope {

// Worker cap: RFSCOPE_THREADS if set, else hardware concurrency.
inline int thread_cap() {
    if (const char* env = std::getenv("RFSCOPE_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? int(hc) : 1;
}

// Runs fn(i) for i in [0, n). Results must be written to per-index slots so
// the outcome is identical for any worker count.
inline void parallel_for(int n, const std::function<void(int)>& fn, int max_workers = -1) {
    int workers = max_workers > 0 ? max_workers : thread_cap();
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(size_t(workers));
    std::vector<std::exception_ptr> errors{size_t(workers)};
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (int i = t; i < n; i += workers) fn(i);
            } catch (...) {
                errors[size_t(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace rfscope
