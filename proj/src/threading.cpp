#include "sublora/threading.hpp"

#include <cstdlib>

namespace sublora {

int worker_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("SUBLORA_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return v;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

}  // namespace sublora
