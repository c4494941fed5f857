#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace fibersieve {

/// Samples of a scalar function on a uniform grid x_i = origin + i * spacing.
struct UniformGrid {
    double origin = 0.0;
    double spacing = 1.0;
    std::vector<double> values;

    double front() const { return origin; }
    double back() const { return origin + spacing * static_cast<double>(values.size() - 1); }
    double x(std::size_t i) const { return origin + spacing * static_cast<double>(i); }

    /// Piecewise-linear interpolation; clamps to the end values outside the grid.
    double at(double x_query) const {
        if (values.empty()) {
            return 0.0;
        }
        const double s = (x_query - origin) / spacing;
        if (s <= 0.0) {
            return values.front();
        }
        const auto last = static_cast<double>(values.size() - 1);
        if (s >= last) {
            return values.back();
        }
        const auto i = static_cast<std::size_t>(s);
        const double t = s - static_cast<double>(i);
        return values[i] + t * (values[i + 1] - values[i]);
    }

    /// Largest |dv/dx| between neighbouring samples.
    double max_abs_slope() const {
        double m = 0.0;
        for (std::size_t i = 1; i < values.size(); ++i) {
            m = std::max(m, std::abs(values[i] - values[i - 1]) / spacing);
        }
        return m;
    }
};

/// Cumulative trapezoid rule, starting at zero.
inline std::vector<double> cumulative_trapezoid(std::span<const double> y, double dx) {
    std::vector<double> out(y.size(), 0.0);
    for (std::size_t i = 1; i < y.size(); ++i) {
        out[i] = out[i - 1] + 0.5 * dx * (y[i] + y[i - 1]);
    }
    return out;
}

/// SplitMix64 finaliser; used to derive independent seeds from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(master) ^ a) ^ (b * 0xD1B54A32D192ED03ull));
}

/// Runs body(i) for i in [0, n) on up to `workers` threads. Work items must be independent.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         unsigned workers = 0) {
    if (workers == 0) {
        workers = std::max(1u, std::thread::hardware_concurrency());
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += workers) {
                        body(i);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace fibersieve
