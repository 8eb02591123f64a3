#include "hscat/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>
#include <vector>

#include "hscat/grid.hpp"

namespace hscat {

namespace {
std::atomic<unsigned> g_threads{0};
}

double length(Vec3 a) { return std::sqrt(dot(a, a)); }

Vec3 normalize(Vec3 a) {
    const double len = length(a);
    return len > 0.0 ? (1.0 / len) * a : a;
}

void GridSpec::validate() const {
    if (resolution <= 0) throw ConfigError("grid resolution must be positive");
    if (!(side > 0.0) || !std::isfinite(side)) throw ConfigError("grid side must be positive");
}

Vec3 GridSpec::voxel_center(int i, int j, int k) const {
    const double h = voxel_size();
    return {lo() + (i + 0.5) * h, lo() + (j + 0.5) * h, lo() + (k + 0.5) * h};
}

bool GridSpec::contains(Vec3 p) const {
    return p.x >= lo() && p.x <= hi() && p.y >= lo() && p.y <= hi() && p.z >= lo() && p.z <= hi();
}

void set_thread_count(unsigned n) { g_threads = n; }

unsigned thread_count() {
    const unsigned n = g_threads.load();
    if (n != 0) return n;
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t end = std::min(n, (w + 1) * chunk);
                for (std::size_t i = w * chunk; i < end; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace hscat
