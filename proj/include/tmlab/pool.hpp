#pragma once

// Work pool over independent grid points. Every point derives its own RNG
// seed from (master seed, point index), so results are identical however the
// points are scheduled; exceptions are captured per point and reported back
// instead of tearing the run down.

#include <atomic>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace tmlab {

inline std::vector<std::string> parallel_for_errors(std::size_t n, int workers,
                                                    const std::function<void(std::size_t)>& fn) {
    std::vector<std::string> errors(n);
    if (workers < 1) workers = 1;
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            } catch (...) {
                errors[i] = "unknown error";
            }
        }
        return errors;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            } catch (...) {
                errors[i] = "unknown error";
            }
        }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    return errors;
}

}  // namespace tmlab
