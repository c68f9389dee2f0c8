// parallel.hpp: block-parallel loops whose reductions are independent of worker count,
// and per-sample random streams derived from (seed, index).
#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace bhs {

inline unsigned default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Runs work(begin, end) -> Partial over fixed-size blocks of [0, count) and hands the
// partials to merge(Partial&&) strictly in block order. Block boundaries depend only on
// count and block_size, so the merged result is bit-identical for any worker count.
template <class Partial, class Work, class Merge>
void ordered_blocks(std::size_t count, std::size_t block_size, unsigned workers, Work&& work,
                    Merge&& merge) {
    if (count == 0) return;
    block_size = std::max<std::size_t>(block_size, 1);
    const std::size_t blocks = (count + block_size - 1) / block_size;
    workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(std::min<std::size_t>(blocks, 1024)));

    if (workers == 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            merge(work(b * block_size, std::min(count, (b + 1) * block_size)));
        return;
    }

    std::atomic<std::size_t> next_block{0};
    std::mutex mtx;
    std::condition_variable cv;
    std::map<std::size_t, Partial> pending;
    std::size_t next_merge = 0;
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const std::size_t b = next_block.fetch_add(1);
            if (b >= blocks) return;
            {
                // Bound memory: do not run too far ahead of the merge cursor.
                std::unique_lock lock(mtx);
                cv.wait(lock, [&] { return failure || b < next_merge + 2 * workers; });
                if (failure) return;
            }
            Partial part;
            try {
                part = work(b * block_size, std::min(count, (b + 1) * block_size));
            } catch (...) {
                std::lock_guard lock(mtx);
                if (!failure) failure = std::current_exception();
                cv.notify_all();
                return;
            }
            std::unique_lock lock(mtx);
            pending.emplace(b, std::move(part));
            while (!failure) {
                auto it = pending.find(next_merge);
                if (it == pending.end()) break;
                try {
                    merge(std::move(it->second));
                } catch (...) {
                    failure = std::current_exception();
                }
                pending.erase(it);
                ++next_merge;
            }
            cv.notify_all();
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear(); // joins
    if (failure) std::rethrow_exception(failure);
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
} // namespace detail

// Independent generator for sample `index` of a run seeded with `seed`.
inline std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(detail::splitmix64(detail::splitmix64(seed) ^ index));
}

} // namespace bhs
