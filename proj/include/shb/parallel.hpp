// parallel.hpp - index-ordered parallel map
#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace shb {

// Worker count from SHB_WORKERS, else hardware concurrency.
inline int default_workers() {
    if (const char* env = std::getenv("SHB_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Evaluates f(0..n-1) on `workers` threads; results are stored by index so
// any later reduction sees the same order whatever the thread count. The
// lowest-index failure is rethrown.
template <class F>
auto parallel_map(std::size_t n, int workers, F&& f) -> std::vector<decltype(f(std::size_t{0}))> {
    using R = decltype(f(std::size_t{0}));
    std::vector<R> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= n) return;
            try {
                out[k] = f(k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const std::size_t nw = std::min<std::size_t>(n, static_cast<std::size_t>(workers < 1 ? 1 : workers));
    if (nw <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nw);
        for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace shb
