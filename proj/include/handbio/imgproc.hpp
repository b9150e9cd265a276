#pragma once

#include <vector>

#include "handbio/image.hpp"

namespace handbio::img {

struct GuidedFilterParams {
    int radius = 10;               // square window radius in pixels
    double regularization = 0.01;  // variance regularizer of the filter itself

    void validate() const;
};

struct SsimParams {
    int window = 11;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const;
};

struct PreprocessParams {
    GuidedFilterParams guided;
    double epsilon = 1e-3;  // stabilizer of the detail-layer division
    int out_size = 224;     // side length of the resized network inputs
};

// Windowed mean with clipped borders (divide by the in-bounds count).
// Integral-image implementation: runtime independent of the radius.
Image box_mean(const Image& img, int radius);

// Edge-preserving smoothing: per-window linear regression of the input onto
// the guide, coefficients averaged over overlapping windows. Color images
// are filtered per channel with that channel as its own guide.
Image guided_filter(const Image& input, const Image& guide, const GuidedFilterParams& params);
Image guided_filter_self(const Image& input, const GuidedFilterParams& params);

// Element-wise original / (smoothed + epsilon). Output is >= 0 and finite.
Image detail_layer(const Image& original, const Image& smoothed, double epsilon);

// Per-pixel 0.2989 R + 0.5870 G + 0.1140 B.
Image rgb_to_luma(const Image& img);

// (x - min) / (max - min); a constant image maps to all zeros.
Image normalize_minmax(const Image& img);

// Bilinear interpolation with half-pixel center alignment.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Mean structural similarity over sliding windows (uniform window).
double ssim(const Image& a, const Image& b, const SsimParams& params);

// Keeps frame 0, then keeps frame i iff ssim(frame i, last kept) < threshold.
std::vector<size_t> select_frames(const std::vector<Image>& frames, const SsimParams& params, double threshold);

struct PreprocessResult {
    Image low;          // smoothed image resized to out_size (3 channels)
    Image high;         // normalized detail-layer luma resized to out_size (1 channel)
    Image detail_luma;  // full-resolution normalized detail-layer luma (texture features)
};

// Full chain: filter -> divide -> luma -> normalize -> resize.
PreprocessResult preprocess(const Image& img, const PreprocessParams& params);

}  // namespace handbio::img
