#pragma once
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace fluencebench {

// Worker pool size: FLUENCEBENCH_THREADS when set, else hardware count.
inline int worker_count() {
    if (const char* env = std::getenv("FLUENCEBENCH_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1)
            return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n). Each index owns its output slot, so results
// are independent of scheduling; callers must reduce in index order.
template <typename F>
void parallel_for(int64_t n, F&& fn) {
    const int threads = worker_count();
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const int used = static_cast<int>(std::min<int64_t>(threads, n));
    for (int t = 0; t < used; ++t)
        pool.emplace_back([&, t] {
            for (int64_t i = t; i < n; i += used)
                fn(i);
        });
    for (auto& th : pool)
        th.join();
}

} // namespace fluencebench
