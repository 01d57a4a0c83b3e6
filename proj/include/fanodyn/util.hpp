// util.hpp - small shared helpers (deterministic parallel blocks, checksums, formatting)

#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

namespace fanodyn::util {

// Runs fn(lo, hi) over fixed-size index blocks. Block boundaries do not depend
// on the thread count, so any reduction done per block and combined in block
// order is bitwise reproducible for every value of threads.
inline void parallel_blocks(std::int64_t n, int threads,
                            const std::function<void(std::int64_t, std::int64_t)>& fn,
                            std::int64_t block = 1024) {
    if (n <= 0) return;
    const std::int64_t n_blocks = (n + block - 1) / block;
    if (threads <= 1 || n_blocks == 1) {
        for (std::int64_t b = 0; b < n_blocks; ++b)
            fn(b * block, std::min(n, (b + 1) * block));
        return;
    }
    std::vector<std::thread> pool;
    const int nt = static_cast<int>(std::min<std::int64_t>(threads, n_blocks));
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([=, &fn] {
            for (std::int64_t b = t; b < n_blocks; b += nt)
                fn(b * block, std::min(n, (b + 1) * block));
        });
    }
    for (auto& th : pool) th.join();
}

// FNV-1a 64-bit, used for output-file checksums in run reports.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

// Shortest round-trip decimal representation of a double.
inline std::string format_double(double x, int precision = 0) {
    char buf[64];
    std::to_chars_result r = precision > 0
        ? std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, precision)
        : std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

} // namespace fanodyn::util
