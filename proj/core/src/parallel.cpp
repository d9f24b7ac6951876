#include "contagion/parallel.hpp"

#include <cstdlib>
#include <string>

namespace contagion {

int thread_count() {
    if (const char* env = std::getenv("CONTAGION_THREADS")) {
        try {
            int v = std::stoi(env);
            if (v >= 1) return v;
        } catch (const std::exception&) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace contagion
