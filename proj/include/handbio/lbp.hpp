#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "handbio/image.hpp"

namespace handbio::lbp {

struct LbpParams {
    int neighbors = 8;    // fixed at 8 in this version
    int radius = 1;       // sampling circle radius in pixels
    bool uniform = true;  // 59-bin uniform histogram vs raw 256 bins

    void validate() const;
};

// Feature vector with a tag naming where it was extracted.
struct FeatureVector {
    std::vector<double> values;
    std::string source;  // one of: lbp, fc9, fc10, fusion, concat
};

// 8-bit code at (x, y): bit i is set iff the sample at angle 2*pi*i/8
// (starting east, counter-clockwise) on the radius circle is >= center.
// Off-grid samples are bilinearly interpolated.
uint8_t lbp_code(const Image& img, int x, int y, const LbpParams& params);

// Histogram of codes over all pixels at least `radius` from the border,
// L1-normalized. Uniform mode buckets the 58 patterns with <= 2 circular
// bit transitions into their own bins plus one catch-all bin.
FeatureVector lbp_histogram(const Image& img, const LbpParams& params);

// Bin index for a code under the uniform mapping (58 uniform bins in
// ascending code order, catch-all = 58).
int uniform_bin(uint8_t code);

inline constexpr int kUniformBins = 59;

}  // namespace handbio::lbp
