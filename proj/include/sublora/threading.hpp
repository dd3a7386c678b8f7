#pragma once

#include <atomic>
#include <thread>
#include <vector>

namespace sublora {

// Worker cap: SUBLORA_THREADS if set, else hardware concurrency.
int worker_threads();

// Runs fn(block) for block = 0..nblocks-1, possibly on worker threads.
// Callers keep per-block output slots and merge them in block order, so
// results do not depend on the thread count.
template <class Fn>
void parallel_blocks(int nblocks, Fn&& fn) {
    const int workers = std::min(worker_threads(), nblocks);
    if (workers <= 1) {
        for (int b = 0; b < nblocks; ++b) fn(b);
        return;
    }
    std::atomic<int> next{0};
    auto drain = [&] {
        for (;;) {
            const int b = next.fetch_add(1);
            if (b >= nblocks) return;
            fn(b);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(drain);
    drain();
    for (auto& th : pool) th.join();
}

}  // namespace sublora
