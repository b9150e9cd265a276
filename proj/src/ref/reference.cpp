#include "handbio/reference.hpp"

#include <algorithm>

namespace handbio::ref {

Image box_mean(const Image& img, int radius) {
    img.require_channels(1, "ref::box_mean");
    if (radius < 1) throw ParamError("ref::box_mean: radius must be >= 1");
    if (radius >= std::min(img.height, img.width)) throw ParamError("ref::box_mean: degenerate window");
    Image out(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double sum = 0.0;
            int count = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) continue;
                    sum += img.at(yy, xx);
                    ++count;
                }
            }
            out.at(y, x) = sum / count;
        }
    }
    return out;
}

Image guided_filter(const Image& input, const Image& guide, const img::GuidedFilterParams& params) {
    params.validate();
    if (!input.same_shape(guide)) throw ShapeError("ref::guided_filter: dimensions differ");
    if (input.channels != 1) {
        Image out(input.height, input.width, input.channels);
        for (int c = 0; c < input.channels; ++c) {
            Image pc(input.height, input.width, 1), gc(input.height, input.width, 1);
            for (int y = 0; y < input.height; ++y)
                for (int x = 0; x < input.width; ++x) {
                    pc.at(y, x) = input.at(y, x, c);
                    gc.at(y, x) = guide.at(y, x, c);
                }
            Image f = ref::guided_filter(pc, gc, params);
            for (int y = 0; y < input.height; ++y)
                for (int x = 0; x < input.width; ++x) out.at(y, x, c) = f.at(y, x);
        }
        return out;
    }

    const int h = input.height, w = input.width, r = params.radius;
    std::vector<double> a(static_cast<size_t>(h) * w), b(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sg = 0.0, si = 0.0, sgg = 0.0, sgi = 0.0;
            int count = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const double g = guide.at(yy, xx), p = input.at(yy, xx);
                    sg += g;
                    si += p;
                    sgg += g * g;
                    sgi += g * p;
                    ++count;
                }
            const double mg = sg / count, mi = si / count;
            const double var = sgg / count - mg * mg;
            const double cov = sgi / count - mg * mi;
            const double denom = var + params.regularization;
            const double ak = denom > 0.0 ? cov / denom : 0.0;
            a[static_cast<size_t>(y) * w + x] = ak;
            b[static_cast<size_t>(y) * w + x] = mi - ak * mg;
        }
    }

    Image out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sa = 0.0, sb = 0.0;
            int count = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    sa += a[static_cast<size_t>(yy) * w + xx];
                    sb += b[static_cast<size_t>(yy) * w + xx];
                    ++count;
                }
            out.at(y, x) = (sa / count) * guide.at(y, x) + sb / count;
        }
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride, int pad) {
    if (input.rank() != 3 || weights.rank() != 4) throw ShapeError("ref::conv2d: expects (C,H,W) input and (K,C,kh,kw) weights");
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int k = weights.shape[0], kh = weights.shape[2], kw = weights.shape[3];
    if (weights.shape[1] != c_in) throw ShapeError("ref::conv2d: channel mismatch");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    Tensor out({k, oh, ow});
    for (int f = 0; f < k; ++f)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias.data[f];
                for (int c = 0; c < c_in; ++c)
                    for (int dy = 0; dy < kh; ++dy)
                        for (int dx = 0; dx < kw; ++dx) {
                            const int iy = oy * stride - pad + dy;
                            const int ix = ox * stride - pad + dx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += weights.data[((static_cast<size_t>(f) * c_in + c) * kh + dy) * kw + dx] *
                                   input.data[(static_cast<size_t>(c) * h + iy) * w + ix];
                        }
                out.data[(static_cast<size_t>(f) * oh + oy) * ow + ox] = acc;
            }
    return out;
}

}  // namespace handbio::ref
