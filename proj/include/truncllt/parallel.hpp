#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace truncllt {

// Fixed-size block decomposition of [0, n). Workers claim blocks atomically,
// each block is folded sequentially, and the per-block results are merged in
// block-index order afterwards. Reported statistics therefore depend on the
// block size constant, never on the worker count or scheduling.
inline constexpr long kBlockSize = 4096;

template <class Acc, class PathFn, class MergeFn>
Acc parallel_blocks(long begin, long end, int workers, const Acc& init, PathFn per_path,
                    MergeFn merge) {
    const long total = end - begin;
    if (total <= 0) return init;
    const long nblocks = (total + kBlockSize - 1) / kBlockSize;
    std::vector<Acc> partial(static_cast<std::size_t>(nblocks), init);
    std::atomic<long> next{0};
    auto run = [&]() {
        while (true) {
            const long blk = next.fetch_add(1);
            if (blk >= nblocks) break;
            const long lo = begin + blk * kBlockSize;
            const long hi = std::min(end, lo + kBlockSize);
            Acc acc = init;
            for (long i = lo; i < hi; ++i) per_path(i, acc);
            partial[static_cast<std::size_t>(blk)] = std::move(acc);
        }
    };
    if (workers <= 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& th : pool) th.join();
    }
    Acc out = init;
    for (auto& p : partial) merge(out, p);
    return out;
}

}  // namespace truncllt
