#include "handbio/lbp.hpp"

#include <cmath>

namespace handbio::lbp {

void LbpParams::validate() const {
    if (neighbors != 8) throw ParamError("lbp: only 8 neighbors are supported");
    if (radius < 1) throw ParamError("lbp: radius must be >= 1");
}

namespace {

struct SampleOffset {
    double dx, dy;
    bool on_grid;
    int ix, iy;
};

// Neighbor i sits at angle 2*pi*i/8 from east, counter-clockwise on screen
// (y grows downward, so the y offset is negated). Offsets landing on exact
// grid positions are snapped to avoid spurious interpolation.
std::array<SampleOffset, 8> sample_offsets(int radius) {
    std::array<SampleOffset, 8> offs;
    for (int i = 0; i < 8; ++i) {
        const double angle = 2.0 * M_PI * i / 8.0;
        double dx = radius * std::cos(angle);
        double dy = -radius * std::sin(angle);
        if (std::abs(dx - std::round(dx)) < 1e-9) dx = std::round(dx);
        if (std::abs(dy - std::round(dy)) < 1e-9) dy = std::round(dy);
        SampleOffset o{dx, dy, false, 0, 0};
        if (dx == std::floor(dx) && dy == std::floor(dy)) {
            o.on_grid = true;
            o.ix = static_cast<int>(dx);
            o.iy = static_cast<int>(dy);
        }
        offs[i] = o;
    }
    return offs;
}

double sample(const Image& img, double fy, double fx) {
    const int y0 = static_cast<int>(std::floor(fy));
    const int x0 = static_cast<int>(std::floor(fx));
    const double wy = fy - y0, wx = fx - x0;
    const double v00 = img.at(y0, x0);
    const double v01 = img.at(y0, x0 + 1);
    const double v10 = img.at(y0 + 1, x0);
    const double v11 = img.at(y0 + 1, x0 + 1);
    return (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
}

uint8_t code_at(const Image& img, int x, int y, const std::array<SampleOffset, 8>& offs) {
    const double center = img.at(y, x);
    uint8_t code = 0;
    for (int i = 0; i < 8; ++i) {
        const auto& o = offs[i];
        const double v = o.on_grid ? img.at(y + o.iy, x + o.ix) : sample(img, y + o.dy, x + o.dx);
        if (v >= center) code |= static_cast<uint8_t>(1u << i);
    }
    return code;
}

int circular_transitions(uint8_t code) {
    int t = 0;
    for (int i = 0; i < 8; ++i) {
        const int a = (code >> i) & 1;
        const int b = (code >> ((i + 1) % 8)) & 1;
        t += a != b;
    }
    return t;
}

const std::array<int, 256>& uniform_table() {
    static const std::array<int, 256> table = [] {
        std::array<int, 256> t{};
        int next = 0;
        for (int c = 0; c < 256; ++c) t[c] = circular_transitions(static_cast<uint8_t>(c)) <= 2 ? next++ : kUniformBins - 1;
        return t;
    }();
    return table;
}

}  // namespace

int uniform_bin(uint8_t code) { return uniform_table()[code]; }

uint8_t lbp_code(const Image& img, int x, int y, const LbpParams& params) {
    params.validate();
    img.require_channels(1, "lbp_code");
    const int r = params.radius;
    if (x < r || y < r || x >= img.width - r || y >= img.height - r)
        throw ParamError("lbp_code: pixel closer than radius to the border");
    return code_at(img, x, y, sample_offsets(r));
}

FeatureVector lbp_histogram(const Image& img, const LbpParams& params) {
    params.validate();
    img.require_channels(1, "lbp_histogram");
    const int r = params.radius;
    if (img.height <= 2 * r + 1 || img.width <= 2 * r + 1)
        throw ShapeError("lbp_histogram: image not larger than 2*radius+1");

    const auto offs = sample_offsets(r);
    const auto& table = uniform_table();
    const int bins = params.uniform ? kUniformBins : 256;
    std::vector<int64_t> counts(bins, 0);

    const int y_end = img.height - r, x_end = img.width - r;
#pragma omp parallel
    {
        std::vector<int64_t> local(bins, 0);
#pragma omp for schedule(static)
        for (int y = r; y < y_end; ++y) {
            for (int x = r; x < x_end; ++x) {
                const uint8_t code = code_at(img, x, y, offs);
                ++local[params.uniform ? table[code] : code];
            }
        }
#pragma omp critical
        for (int b = 0; b < bins; ++b) counts[b] += local[b];
    }

    int64_t total = 0;
    for (int64_t c : counts) total += c;

    FeatureVector fv;
    fv.source = "lbp";
    fv.values.resize(bins);
    for (int b = 0; b < bins; ++b) fv.values[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
    return fv;
}

}  // namespace handbio::lbp
