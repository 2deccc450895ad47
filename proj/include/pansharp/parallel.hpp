#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace pansharp {

// Worker cap for band/tile parallel loops, from PANSHARP_THREADS (default 1).
inline int max_threads() {
    static const int cached = [] {
        const char* env = std::getenv("PANSHARP_THREADS");
        if (!env) return 1;
        const int n = std::atoi(env);
        if (n < 1) return 1;
        const int hw = static_cast<int>(std::thread::hardware_concurrency());
        return hw > 0 ? std::min(n, hw) : n;
    }();
    return cached;
}

// Runs fn(i) for i in [0, n). Work items must write disjoint state; results
// are identical to the serial loop regardless of the thread cap.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(max_threads(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += workers) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace pansharp
