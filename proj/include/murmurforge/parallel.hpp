#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace murmurforge {

/// Worker cap for internally parallel operations. MURMURFORGE_THREADS
/// overrides the hardware count; 0 or unset means auto.
inline unsigned thread_cap() {
    if (const char* env = std::getenv("MURMURFORGE_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs fn(block_index, begin, end) over [0, n) in fixed-size blocks.
/// Block boundaries depend only on n and block_size, never on the worker
/// count, so callers that write per-block outputs and merge them in block
/// order get results independent of the thread cap.
inline void parallel_blocks(std::size_t n, std::size_t block_size,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t nblocks = (n + block_size - 1) / block_size;
    const unsigned workers = std::min<std::size_t>(thread_cap(), nblocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < nblocks; ++b)
            fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t b = next.fetch_add(1);
            if (b >= nblocks) break;
            fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

} // namespace murmurforge
