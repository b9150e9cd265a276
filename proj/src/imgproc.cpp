#include "handbio/imgproc.hpp"

#include <algorithm>
#include <cmath>

namespace handbio::img {

void GuidedFilterParams::validate() const {
    if (radius < 1) throw ParamError("guided filter radius must be >= 1");
    if (regularization < 0.0) throw ParamError("guided filter regularization must be >= 0");
}

void SsimParams::validate() const {
    if (window < 3 || window % 2 == 0) throw ParamError("ssim window must be odd and >= 3");
    if (k1 <= 0.0 || k2 <= 0.0) throw ParamError("ssim stabilizers k1, k2 must be > 0");
    if (dynamic_range <= 0.0) throw ParamError("ssim dynamic range must be > 0");
}

namespace {

// Summed-area table with a zero top row / left column: sums are O(1) per
// window regardless of radius.
struct Integral {
    int h, w;
    std::vector<double> s;  // (h+1) x (w+1)

    explicit Integral(const Image& img) : h(img.height), w(img.width), s(static_cast<size_t>(h + 1) * (w + 1), 0.0) {
        for (int y = 0; y < h; ++y) {
            double row = 0.0;
            const double* src = &img.data[static_cast<size_t>(y) * w];
            double* cur = &s[static_cast<size_t>(y + 1) * (w + 1)];
            const double* above = &s[static_cast<size_t>(y) * (w + 1)];
            for (int x = 0; x < w; ++x) {
                row += src[x];
                cur[x + 1] = above[x + 1] + row;
            }
        }
    }

    // Sum over rows [y0, y1) x cols [x0, x1).
    double sum(int y0, int x0, int y1, int x1) const {
        const size_t stride = w + 1;
        return s[y1 * stride + x1] - s[y0 * stride + x1] - s[y1 * stride + x0] + s[y0 * stride + x0];
    }
};

Image product(const Image& a, const Image& b) {
    Image out(a.height, a.width, 1);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

Image extract_channel(const Image& img, int c) {
    Image out(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, x, c);
    return out;
}

}  // namespace

Image box_mean(const Image& img, int radius) {
    img.require_channels(1, "box_mean");
    if (radius < 1) throw ParamError("box_mean: radius must be >= 1");
    if (radius >= std::min(img.height, img.width))
        throw ParamError("box_mean: degenerate window, radius " + std::to_string(radius) + " >= min image dimension " +
                         std::to_string(std::min(img.height, img.width)));

    Integral integral(img);
    Image out(img.height, img.width, 1);
    const int h = img.height, w = img.width;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - radius);
        const int y1 = std::min(h, y + radius + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - radius);
            const int x1 = std::min(w, x + radius + 1);
            const double count = static_cast<double>(y1 - y0) * (x1 - x0);
            out.at(y, x) = integral.sum(y0, x0, y1, x1) / count;
        }
    }
    return out;
}

Image guided_filter(const Image& input, const Image& guide, const GuidedFilterParams& params) {
    params.validate();
    if (!input.same_shape(guide)) throw ShapeError("guided_filter: input and guide dimensions differ");

    if (input.channels != 1) {
        // Per-channel filtering with that channel as its own guide.
        Image out(input.height, input.width, input.channels);
        for (int c = 0; c < input.channels; ++c) {
            Image ch = extract_channel(input, c);
            Image gch = extract_channel(guide, c);
            Image f = guided_filter(ch, gch, params);
            for (int y = 0; y < out.height; ++y)
                for (int x = 0; x < out.width; ++x) out.at(y, x, c) = f.at(y, x);
        }
        return out;
    }

    const int r = params.radius;
    const double reg = params.regularization;

    Image mean_guide = box_mean(guide, r);
    Image mean_input = box_mean(input, r);
    Image corr_gg = box_mean(product(guide, guide), r);
    Image corr_gi = box_mean(product(guide, input), r);

    Image a(input.height, input.width, 1);
    Image b(input.height, input.width, 1);
    const size_t n = a.data.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const double mg = mean_guide.data[i];
        const double mi = mean_input.data[i];
        const double var = corr_gg.data[i] - mg * mg;
        const double cov = corr_gi.data[i] - mg * mi;
        const double denom = var + reg;
        // A window with zero variance and zero regularization carries no
        // linear relation; fall back to the plain mean (a = 0, b = mean).
        const double ak = denom > 0.0 ? cov / denom : 0.0;
        a.data[i] = ak;
        b.data[i] = mi - ak * mg;
    }

    Image mean_a = box_mean(a, r);
    Image mean_b = box_mean(b, r);
    Image out(input.height, input.width, 1);
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) out.data[i] = mean_a.data[i] * guide.data[i] + mean_b.data[i];
    return out;
}

Image guided_filter_self(const Image& input, const GuidedFilterParams& params) {
    return guided_filter(input, input, params);
}

Image detail_layer(const Image& original, const Image& smoothed, double epsilon) {
    if (!original.same_shape(smoothed)) throw ShapeError("detail_layer: image dimensions differ");
    if (epsilon <= 0.0) throw ParamError("detail_layer: epsilon must be > 0");
    Image out(original.height, original.width, original.channels);
    const size_t n = out.data.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) out.data[i] = original.data[i] / (smoothed.data[i] + epsilon);
    return out;
}

Image rgb_to_luma(const Image& img) {
    img.require_channels(3, "rgb_to_luma");
    Image out(img.height, img.width, 1);
    const size_t n = out.data.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const double* px = &img.data[i * 3];
        out.data[i] = 0.2989 * px[0] + 0.5870 * px[1] + 0.1140 * px[2];
    }
    return out;
}

Image normalize_minmax(const Image& img) {
    img.require_channels(1, "normalize_minmax");
    if (img.data.empty()) throw DataError("normalize_minmax: empty image");
    const auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
    Image out(img.height, img.width, 1);
    const double lo = *mn, range = *mx - *mn;
    if (range <= 0.0) return out;  // constant image maps to all zeros
    const size_t n = out.data.size();
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) out.data[i] = (img.data[i] - lo) / range;
    return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ParamError("resize_bilinear: target dimensions must be >= 1");
    if (out_h == img.height && out_w == img.width) return img;

    Image out(out_h, out_w, img.channels);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    const int c = img.channels;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int k = 0; k < c; ++k) {
                const double top = (1.0 - wx) * img.at(y0, x0, k) + wx * img.at(y0, x1, k);
                const double bot = (1.0 - wx) * img.at(y1, x0, k) + wx * img.at(y1, x1, k);
                out.at(y, x, k) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    params.validate();
    a.require_channels(1, "ssim");
    b.require_channels(1, "ssim");
    if (!a.same_shape(b)) throw ShapeError("ssim: image dimensions differ");
    if (a.height < params.window || a.width < params.window)
        throw ShapeError("ssim: image smaller than the comparison window");

    const int win = params.window;
    const double c1 = params.k1 * params.dynamic_range * params.k1 * params.dynamic_range;
    const double c2 = params.k2 * params.dynamic_range * params.k2 * params.dynamic_range;
    const int oh = a.height - win + 1;
    const int ow = a.width - win + 1;
    const double inv_n = 1.0 / (win * win);

    // Per-row partial sums keep the final reduction order fixed.
    std::vector<double> row_sum(oh, 0.0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        double acc = 0.0;
        for (int x = 0; x < ow; ++x) {
            double sa = 0.0, sb = 0.0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    sa += a.at(y + dy, x + dx);
                    sb += b.at(y + dy, x + dx);
                }
            const double mu_a = sa * inv_n;
            const double mu_b = sb * inv_n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    const double da = a.at(y + dy, x + dx) - mu_a;
                    const double db = b.at(y + dy, x + dx) - mu_b;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va *= inv_n;
            vb *= inv_n;
            cov *= inv_n;
            acc += (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
        }
        row_sum[y] = acc;
    }
    double total = 0.0;
    for (double v : row_sum) total += v;
    return total / (static_cast<double>(oh) * ow);
}

std::vector<size_t> select_frames(const std::vector<Image>& frames, const SsimParams& params, double threshold) {
    std::vector<size_t> kept;
    if (frames.empty()) return kept;
    if (threshold <= -1.0 || threshold > 1.0) throw ParamError("select_frames: threshold must lie in (-1, 1]");
    kept.push_back(0);
    for (size_t i = 1; i < frames.size(); ++i) {
        if (ssim(frames[i], frames[kept.back()], params) < threshold) kept.push_back(i);
    }
    return kept;
}

PreprocessResult preprocess(const Image& img, const PreprocessParams& params) {
    img.require_channels(3, "preprocess");
    if (params.out_size < 1) throw ParamError("preprocess: output size must be >= 1");

    Image smoothed = guided_filter_self(img, params.guided);
    Image detail = detail_layer(img, smoothed, params.epsilon);
    Image detail_luma = normalize_minmax(rgb_to_luma(detail));

    PreprocessResult result;
    result.low = resize_bilinear(smoothed, params.out_size, params.out_size);
    result.high = resize_bilinear(detail_luma, params.out_size, params.out_size);
    result.detail_luma = std::move(detail_luma);
    return result;
}

}  // namespace handbio::img
