#pragma once

#include <cstddef>
#include <vector>

#include "handbio/error.hpp"

namespace handbio {

// Floating-point raster, row-major with interleaved channels. Samples live
// in [0,1] everywhere except detail layers, which are nonnegative and may
// exceed 1 before normalization.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0.0) {}

    static Image zeros(int h, int w, int c = 1) { return Image(h, w, c); }
    static Image constant(int h, int w, int c, double value) {
        Image img(h, w, c);
        std::fill(img.data.begin(), img.data.end(), value);
        return img;
    }

    double& at(int y, int x, int c = 0) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c = 0) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }

    void require_channels(int c, const char* what) const {
        if (channels != c) throw ShapeError(std::string(what) + ": expected " + std::to_string(c) + "-channel image, got " + std::to_string(channels));
    }
};

}  // namespace handbio
