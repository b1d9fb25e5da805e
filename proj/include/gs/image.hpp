#pragma once

#include "gs/common.hpp"

#include <Eigen/Dense>
#include <vector>

namespace gs {

// Real-valued H x W x C image, row-major with interleaved channels.
// Values are nominally in [0, 1]; gradients reuse the same container.
struct ImageF {
    int height = 0, width = 0, channels = 0;
    std::vector<double> data;

    ImageF() = default;
    ImageF(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || (c != 1 && c != 3))
            throw InvalidParameterError("image: bad dimensions");
    }

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    size_t pixel_count() const { return static_cast<size_t>(height) * width; }

    bool same_shape(const ImageF& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

inline void require_same_shape(const ImageF& a, const ImageF& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeMismatchError(std::string(what) + ": image shapes differ");
}

} // namespace gs
