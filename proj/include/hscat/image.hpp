#pragma once

#include <cstddef>
#include <vector>

#include "hscat/error.hpp"

namespace hscat {

// Planar float image: data[(c * height + y) * width + x]. Row 0 is the top.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0) : width(w), height(h), channels(c) {
        if (w <= 0 || h <= 0 || c <= 0) throw ShapeError("image dimensions must be positive");
        data.assign(std::size_t(w) * h * c, fill);
    }

    std::size_t pixels() const { return std::size_t(width) * height; }
    double& at(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
    bool same_layout(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace hscat
