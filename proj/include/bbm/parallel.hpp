#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace bbm {

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n). Chunk
// boundaries depend only on n and chunk_size, never on the thread count, so a
// caller that keeps per-chunk partial results and reduces them in chunk order
// gets identical results for any number of threads.
template <class Fn>
void for_each_chunk(std::size_t n, std::size_t chunk_size, int threads, Fn&& fn) {
    if (n == 0) return;
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
    if (threads <= 1 || n_chunks == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        }
    };
    const int n_workers = std::min<int>(threads, static_cast<int>(n_chunks));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
    return n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
}

}  // namespace bbm
