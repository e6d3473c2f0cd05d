#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace nphawkes {

/// A point in space-time, or a lag (dt, dx, dy) when used for the trigger.
struct Point3 {
    double t{0.0};
    double x{0.0};
    double y{0.0};

    constexpr double operator[](std::size_t d) const noexcept {
        return d == 0 ? t : (d == 1 ? x : y);
    }
    friend constexpr bool operator==(const Point3&, const Point3&) = default;
};

constexpr Point3 operator-(const Point3& a, const Point3& b) noexcept {
    return {a.t - b.t, a.x - b.x, a.y - b.y};
}

constexpr Point3 operator+(const Point3& a, const Point3& b) noexcept {
    return {a.t + b.t, a.x + b.x, a.y + b.y};
}

/// Axis-aligned box [lo, hi] per dimension.
struct Box {
    std::array<double, 3> lo{0.0, 0.0, 0.0};
    std::array<double, 3> hi{1.0, 1.0, 1.0};

    double extent(std::size_t d) const noexcept { return hi[d] - lo[d]; }
    double volume() const noexcept {
        return std::max(0.0, extent(0)) * std::max(0.0, extent(1)) * std::max(0.0, extent(2));
    }
    bool contains(const Point3& p) const noexcept {
        for (std::size_t d = 0; d < 3; ++d) {
            if (p[d] < lo[d] || p[d] > hi[d]) return false;
        }
        return true;
    }
};

/// Tensor-product grid of nodes; flat index (i * n_x + j) * n_y + k with t slowest.
struct TensorGrid {
    std::array<std::vector<double>, 3> axes;

    std::array<std::size_t, 3> counts() const noexcept {
        return {axes[0].size(), axes[1].size(), axes[2].size()};
    }
    std::size_t size() const noexcept { return axes[0].size() * axes[1].size() * axes[2].size(); }
    Point3 node(std::size_t flat) const noexcept {
        const std::size_t ny = axes[2].size(), nx = axes[1].size();
        const std::size_t k = flat % ny;
        const std::size_t j = (flat / ny) % nx;
        const std::size_t i = flat / (ny * nx);
        return {axes[0][i], axes[1][j], axes[2][k]};
    }
    std::vector<Point3> points() const {
        std::vector<Point3> out;
        out.reserve(size());
        for (double t : axes[0])
            for (double x : axes[1])
                for (double y : axes[2]) out.push_back({t, x, y});
        return out;
    }

    /// n equidistant nodes spanning [a, b] including both ends; a single node sits at the midpoint.
    static std::vector<double> linspace(double a, double b, std::size_t n) {
        if (n == 0) throw std::invalid_argument("grid axis needs at least one node");
        if (n == 1) return {0.5 * (a + b)};
        std::vector<double> out(n);
        const double h = (b - a) / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) out[i] = a + h * static_cast<double>(i);
        out.back() = b;
        return out;
    }

    static TensorGrid equidistant(const Box& box, std::array<std::size_t, 3> counts) {
        TensorGrid g;
        for (std::size_t d = 0; d < 3; ++d) g.axes[d] = linspace(box.lo[d], box.hi[d], counts[d]);
        return g;
    }
};

}  // namespace nphawkes
