#pragma once

#include "handbio/image.hpp"
#include "handbio/imgproc.hpp"
#include "handbio/tensor.hpp"

// Serial, windowed/loop-literal reference implementations. They follow the
// textbook definitions directly (O(N * r^2) windows, quadruple conv loops)
// and are kept as oracles for the fast kernels: tests compare against them
// and the benchmark measures the gap.
namespace handbio::ref {

// Mean over the clipped (2r+1)^2 window, recomputed per pixel.
Image box_mean(const Image& img, int radius);

// Per-window regression coefficients computed directly, then averaged over
// every window covering each pixel.
Image guided_filter(const Image& input, const Image& guide, const img::GuidedFilterParams& params);

// Cross-correlation with bias, scalar quadruple loop.
// input (C,H,W), weights (K,C,kh,kw), bias (K).
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride, int pad);

}  // namespace handbio::ref
