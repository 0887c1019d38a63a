#include "common.hpp"

#include <cstdlib>
#include <thread>

namespace lvo {

int thread_budget() {
    static int budget = [] {
        if (const char* env = std::getenv("LVO_PIPELINE_THREADS")) {
            int v = std::atoi(env);
            if (v > 0) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return budget;
}

}  // namespace lvo
