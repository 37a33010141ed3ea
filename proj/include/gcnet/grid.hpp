#pragma once

#include <cstdint>
#include <vector>

#include "gcnet/errors.hpp"

namespace gcnet {

// Pixel (i,j) of an H x W grid has continuous coordinates
// x = (j+0.5)/W, y = (i+0.5)/H, both in (0,1).
struct GridSpec {
    int h = 0;
    int w = 0;

    GridSpec() = default;
    GridSpec(int height, int width) : h(height), w(width) {
        if (h < 1 || w < 1) throw UsageError("GridSpec: H and W must be >= 1");
    }

    double pixel_x(int j) const { return (j + 0.5) / w; }
    double pixel_y(int i) const { return (i + 0.5) / h; }
    std::int64_t pixels() const { return static_cast<std::int64_t>(h) * w; }
};

struct MaskGrid {
    int h = 0;
    int w = 0;
    std::vector<double> v;

    MaskGrid() = default;
    MaskGrid(int height, int width) : h(height), w(width), v(static_cast<std::size_t>(height) * width, 0.0) {}
    explicit MaskGrid(const GridSpec& g) : MaskGrid(g.h, g.w) {}

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * w + j]; }
    std::int64_t pixels() const { return static_cast<std::int64_t>(h) * w; }

    double mean() const {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    }
};

}  // namespace gcnet
