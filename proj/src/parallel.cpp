#include "mapgrad/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace mapgrad {

int max_threads() {
    const char* env = std::getenv("MAPGRAD_THREADS");
    if (env) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for_classes(int num_classes, const std::function<void(int)>& fn) {
    const int workers = std::min(max_threads(), num_classes);
    if (workers <= 1 || num_classes <= 1) {
        for (int c = 0; c < num_classes; ++c) fn(c);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int c = next.fetch_add(1);
                if (c >= num_classes || failed.load()) break;
                try {
                    fn(c);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    break;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace mapgrad
