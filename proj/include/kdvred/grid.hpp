#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kdvred/error.hpp"

namespace kdvred {

/// Uniform 1-D grid of n points starting at x_min with spacing (x_max - x_min) / n.
/// With a periodic boundary x_max is identified with x_min.
struct Grid {
    double x_min = 0.0;
    double x_max = 1.0;
    std::size_t n_points = 16;

    double length() const { return x_max - x_min; }
    double dx() const { return length() / static_cast<double>(n_points); }
    double x(std::size_t i) const { return x_min + static_cast<double>(i) * dx(); }

    std::vector<double> points() const {
        std::vector<double> xs(n_points);
        for (std::size_t i = 0; i < n_points; ++i) xs[i] = x(i);
        return xs;
    }

    void validate() const {
        if (n_points < 16) throw ConfigError("grid: n_points must be >= 16");
        if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_max > x_min)) {
            throw ConfigError("grid: require finite x_min < x_max");
        }
    }
};

} // namespace kdvred
