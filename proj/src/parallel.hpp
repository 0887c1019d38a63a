#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

#include "common.hpp"

namespace lvo {

// Index-parallel loop with deterministic semantics: workers claim indices
// from a shared counter and results must be written into per-index slots,
// so the outcome is identical for any thread count (including 1). If body
// throws, the exception of the lowest failing index is rethrown after all
// workers finish. The thread budget comes from LVO_PIPELINE_THREADS
// (0 = auto).
inline void parallel_for(size_t count, const std::function<void(size_t)>& body) {
    int budget = thread_budget();
    if (budget <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) body(i);
        return;
    }
    size_t workers = std::min<size_t>(static_cast<size_t>(budget), count);
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= count) break;
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (size_t i = 0; i < count; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
}

}  // namespace lvo
