#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace sider {

// Static-partition parallel loop; item->worker assignment is deterministic
// and results must be written to per-item slots by the caller.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn, int max_threads = 0) {
    int hw = (int)std::thread::hardware_concurrency();
    int workers = max_threads > 0 ? std::min(max_threads, hw) : hw;
    workers = (int)std::max<int64_t>(1, std::min<int64_t>(workers, n));
    if (workers == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int wkr = 0; wkr < workers; ++wkr) {
        pool.emplace_back([&, wkr] {
            for (int64_t i = wkr; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace sider
