#ifndef PEGE_PARALLEL_HPP
#define PEGE_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace pege {

// Kernel thread cap from PEGE_THREADS; defaults to 1 so results are
// bitwise reproducible unless parallelism is requested.
inline std::size_t kernel_threads()
{
    static const std::size_t cached = [] {
        const char* env = std::getenv("PEGE_THREADS");
        if (!env)
            return std::size_t{1};
        try {
            const long v = std::stol(env);
            return static_cast<std::size_t>(std::max(1L, v));
        } catch (...) {
            return std::size_t{1};
        }
    }();
    return cached;
}

// Splits [0, n) into contiguous chunks. `fn(begin, end)` must only write
// state owned by its range.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    const std::size_t threads = std::min(kernel_threads(), n);
    if (threads <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 1; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin < end)
            pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(std::size_t{0}, std::min(n, chunk));
    for (auto& th : pool)
        th.join();
}

} // namespace pege

#endif // PEGE_PARALLEL_HPP
