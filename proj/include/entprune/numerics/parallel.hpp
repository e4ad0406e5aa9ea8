#pragma once

#include <cstddef>
#include <future>
#include <thread>
#include <vector>

namespace entprune {

// Evaluates fn(i) for i in [0, n), concurrently when more than one hardware
// thread is available. Results keep index order; the first exception rethrows.
template <class Fn>
auto parallel_map(std::size_t n, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<R> out;
    out.reserve(n);
    const unsigned hw = std::thread::hardware_concurrency();
    if (hw <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(fn(i));
        return out;
    }
    std::vector<std::future<R>> futs;
    futs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) futs.push_back(std::async(std::launch::async, [&fn, i] { return fn(i); }));
    for (auto& f : futs) out.push_back(f.get());
    return out;
}

} // namespace entprune
