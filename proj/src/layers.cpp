#include "handbio/layers.hpp"

#include <algorithm>
#include <cmath>

#include "handbio/error.hpp"

namespace handbio::nn {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

int conv_out(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

Layer make_conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int pad, bool new_group) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || pad < 0)
        throw ParamError("conv2d: bad geometry for layer " + name);
    Layer l;
    l.kind = LayerKind::Conv2d;
    l.name = std::move(name);
    l.in_channels = in_channels;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    l.new_group = new_group;
    l.w = Tensor({out_channels, in_channels, kernel, kernel});
    l.b = Tensor({out_channels});
    return l;
}

Layer make_fc(std::string name, int in_dim, int out_dim, bool new_group) {
    if (in_dim < 1 || out_dim < 1) throw ParamError("fc: bad dimensions for layer " + name);
    Layer l;
    l.kind = LayerKind::Fc;
    l.name = std::move(name);
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.new_group = new_group;
    l.w = Tensor({in_dim, out_dim});
    l.b = Tensor({out_dim});
    return l;
}

Layer make_relu() {
    Layer l;
    l.kind = LayerKind::Relu;
    l.name = "relu";
    return l;
}

Layer make_maxpool2d(int kernel, int stride) {
    if (kernel < 1 || stride < 1) throw ParamError("maxpool2d: bad geometry");
    Layer l;
    l.kind = LayerKind::MaxPool2d;
    l.name = "maxpool2d";
    l.kernel = kernel;
    l.stride = stride;
    return l;
}

Layer make_avgpool1d(int kernel, int stride) {
    if (kernel < 1 || stride < 1) throw ParamError("avgpool1d: bad geometry");
    Layer l;
    l.kind = LayerKind::AvgPool1d;
    l.name = "avgpool1d";
    l.kernel = kernel;
    l.stride = stride;
    return l;
}

Layer make_dropout(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ParamError("dropout: rate must be in [0,1)");
    Layer l;
    l.kind = LayerKind::Dropout;
    l.name = "dropout";
    l.rate = rate;
    return l;
}

Layer make_depth_concat() {
    Layer l;
    l.kind = LayerKind::DepthConcat;
    l.name = "depth_concat";
    return l;
}

Layer make_softmax_xent() {
    Layer l;
    l.kind = LayerKind::SoftmaxXent;
    l.name = "softmax_xent";
    return l;
}

void init_params(Layer& layer, Rng& rng) {
    if (!layer.has_params()) return;
    int fan_in = layer.kind == LayerKind::Conv2d ? layer.in_channels * layer.kernel * layer.kernel
                                                 : layer.in_dim;
    double stddev = std::sqrt(2.0 / fan_in);
    for (double& v : layer.w.data) v = rng.normal(0.0, stddev);
    std::fill(layer.b.data.begin(), layer.b.data.end(), 0.0);
}

namespace {

Tensor conv2d_forward(const Layer& l, const Tensor& x) {
    require(x.rank() == 3, "conv2d " + l.name + ": input must be (C,H,W), got " + x.shape_str());
    require(x.shape[0] == l.in_channels, "conv2d " + l.name + ": expected " +
                                             std::to_string(l.in_channels) + " channels, got " +
                                             x.shape_str());
    const int H = x.shape[1], W = x.shape[2];
    const int K = l.kernel, S = l.stride, P = l.pad, C = l.in_channels, O = l.out_channels;
    const int Ho = conv_out(H, K, S, P), Wo = conv_out(W, K, S, P);
    require(Ho >= 1 && Wo >= 1, "conv2d " + l.name + ": kernel larger than padded input");
    Tensor y({O, Ho, Wo});
#pragma omp parallel for schedule(static)
    for (int o = 0; o < O; ++o) {
        for (int i = 0; i < Ho; ++i) {
            for (int j = 0; j < Wo; ++j) {
                double acc = l.b[o];
                for (int c = 0; c < C; ++c) {
                    for (int u = 0; u < K; ++u) {
                        const int iy = i * S - P + u;
                        if (iy < 0 || iy >= H) continue;
                        for (int v = 0; v < K; ++v) {
                            const int ix = j * S - P + v;
                            if (ix < 0 || ix >= W) continue;
                            acc += x[(static_cast<size_t>(c) * H + iy) * W + ix] *
                                   l.w[((static_cast<size_t>(o) * C + c) * K + u) * K + v];
                        }
                    }
                }
                y[(static_cast<size_t>(o) * Ho + i) * Wo + j] = acc;
            }
        }
    }
    return y;
}

LayerGrads conv2d_backward(const Layer& l, const Tensor& x, const Tensor& gy) {
    const int H = x.shape[1], W = x.shape[2];
    const int K = l.kernel, S = l.stride, P = l.pad, C = l.in_channels, O = l.out_channels;
    const int Ho = gy.shape[1], Wo = gy.shape[2];
    LayerGrads g;
    g.gx = Tensor({C, H, W});
    g.gw = Tensor(l.w.shape);
    g.gb = Tensor(l.b.shape);
    // Gather form: every gradient element is owned by one loop iteration, so
    // the parallel loops are race-free and the sums have a fixed order.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int xx = 0; xx < W; ++xx) {
                double acc = 0.0;
                for (int u = 0; u < K; ++u) {
                    const int iy = y + P - u;
                    if (iy < 0 || iy % S != 0) continue;
                    const int i = iy / S;
                    if (i >= Ho) continue;
                    for (int v = 0; v < K; ++v) {
                        const int ix = xx + P - v;
                        if (ix < 0 || ix % S != 0) continue;
                        const int j = ix / S;
                        if (j >= Wo) continue;
                        for (int o = 0; o < O; ++o)
                            acc += gy[(static_cast<size_t>(o) * Ho + i) * Wo + j] *
                                   l.w[((static_cast<size_t>(o) * C + c) * K + u) * K + v];
                    }
                }
                g.gx[(static_cast<size_t>(c) * H + y) * W + xx] = acc;
            }
        }
    }
#pragma omp parallel for schedule(static)
    for (int o = 0; o < O; ++o) {
        double bacc = 0.0;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) bacc += gy[(static_cast<size_t>(o) * Ho + i) * Wo + j];
        g.gb[o] = bacc;
        for (int c = 0; c < C; ++c) {
            for (int u = 0; u < K; ++u) {
                for (int v = 0; v < K; ++v) {
                    double acc = 0.0;
                    for (int i = 0; i < Ho; ++i) {
                        const int iy = i * S - P + u;
                        if (iy < 0 || iy >= H) continue;
                        for (int j = 0; j < Wo; ++j) {
                            const int ix = j * S - P + v;
                            if (ix < 0 || ix >= W) continue;
                            acc += gy[(static_cast<size_t>(o) * Ho + i) * Wo + j] *
                                   x[(static_cast<size_t>(c) * H + iy) * W + ix];
                        }
                    }
                    g.gw[((static_cast<size_t>(o) * C + c) * K + u) * K + v] = acc;
                }
            }
        }
    }
    return g;
}

Tensor maxpool_forward(const Layer& l, const Tensor& x, LayerCache& cache) {
    require(x.rank() == 3, "maxpool2d: input must be (C,H,W), got " + x.shape_str());
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    const int K = l.kernel, S = l.stride;
    require(H >= K && W >= K, "maxpool2d: window larger than input " + x.shape_str());
    const int Ho = (H - K) / S + 1, Wo = (W - K) / S + 1;
    Tensor y({C, Ho, Wo});
    cache.argmax.assign(y.numel(), -1);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < Ho; ++i) {
            for (int j = 0; j < Wo; ++j) {
                int best = -1;
                double bv = 0.0;
                for (int u = 0; u < K; ++u) {
                    for (int v = 0; v < K; ++v) {
                        const int idx = (c * H + i * S + u) * W + j * S + v;
                        if (best < 0 || x[idx] > bv) {
                            best = idx;
                            bv = x[idx];
                        }
                    }
                }
                const size_t oi = (static_cast<size_t>(c) * Ho + i) * Wo + j;
                y[oi] = bv;
                cache.argmax[oi] = best;
            }
        }
    }
    return y;
}

Tensor avgpool1d_forward(const Layer& l, const Tensor& x) {
    const int D = static_cast<int>(x.numel());
    const int K = l.kernel, S = l.stride;
    require(D >= K, "avgpool1d: window larger than input " + x.shape_str());
    const int Do = (D - K) / S + 1;
    Tensor y({Do});
    for (int i = 0; i < Do; ++i) {
        double acc = 0.0;
        for (int u = 0; u < K; ++u) acc += x[i * S + u];
        y[i] = acc / K;
    }
    return y;
}

Tensor fc_forward(const Layer& l, const Tensor& x) {
    require(static_cast<int>(x.numel()) == l.in_dim,
            "fc " + l.name + ": expected " + std::to_string(l.in_dim) + " inputs, got " +
                x.shape_str());
    Tensor y({l.out_dim});
    const int D = l.in_dim, C = l.out_dim;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        double acc = l.b[c];
        for (int d = 0; d < D; ++d) acc += x[d] * l.w[static_cast<size_t>(d) * C + c];
        y[c] = acc;
    }
    return y;
}

Tensor softmax(const Tensor& x) {
    Tensor p(x.shape);
    double m = x[0];
    for (double v : x.data) m = std::max(m, v);
    double z = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) {
        p[i] = std::exp(x[i] - m);
        z += p[i];
    }
    for (double& v : p.data) v /= z;
    return p;
}

}  // namespace

Tensor layer_forward(const Layer& layer, const Tensor& input, Mode mode, Rng* rng,
                     LayerCache& cache) {
    cache.input = input;
    cache.has_forward = true;
    switch (layer.kind) {
        case LayerKind::Conv2d:
            return conv2d_forward(layer, input);
        case LayerKind::Relu: {
            Tensor y(input.shape);
            for (size_t i = 0; i < input.numel(); ++i) y[i] = input[i] > 0.0 ? input[i] : 0.0;
            return y;
        }
        case LayerKind::MaxPool2d:
            return maxpool_forward(layer, input, cache);
        case LayerKind::AvgPool1d:
            return avgpool1d_forward(layer, input);
        case LayerKind::Fc:
            return fc_forward(layer, input);
        case LayerKind::Dropout: {
            if (!(layer.rate >= 0.0 && layer.rate < 1.0))
                throw ParamError("dropout: rate must be in [0,1)");
            if (mode == Mode::Eval) {
                cache.mask.assign(input.numel(), 1.0);
                return input;
            }
            if (rng == nullptr) throw StateError("dropout: train-mode forward needs an rng");
            const double keep = 1.0 - layer.rate;
            cache.mask.resize(input.numel());
            Tensor y(input.shape);
            for (size_t i = 0; i < input.numel(); ++i) {
                cache.mask[i] = rng->uniform() < layer.rate ? 0.0 : 1.0 / keep;
                y[i] = input[i] * cache.mask[i];
            }
            return y;
        }
        case LayerKind::DepthConcat: {
            Tensor y({static_cast<int>(input.numel())}, input.data);
            return y;
        }
        case LayerKind::SoftmaxXent: {
            require(input.rank() == 1, "softmax_xent: input must be a vector, got " +
                                           input.shape_str());
            cache.probs = softmax(input);
            return cache.probs;
        }
    }
    throw StateError("layer_forward: unknown layer kind");
}

double xent_loss(LayerCache& cache, int label) {
    if (!cache.has_forward || cache.probs.numel() == 0)
        throw StateError("xent_loss: no softmax forward cached");
    if (label < 0 || label >= static_cast<int>(cache.probs.numel()))
        throw ParamError("xent_loss: label out of range");
    cache.label = label;
    // log-sum-exp form of -log softmax(x)[label], stable for extreme logits
    const Tensor& x = cache.input;
    double m = x[0];
    for (double v : x.data) m = std::max(m, v);
    double z = 0.0;
    for (double v : x.data) z += std::exp(v - m);
    return std::log(z) + m - x[label];
}

LayerGrads layer_backward(const Layer& layer, const LayerCache& cache, const Tensor& upstream) {
    if (!cache.has_forward) throw StateError("layer_backward: no forward state cached");
    LayerGrads g;
    const Tensor& x = cache.input;
    switch (layer.kind) {
        case LayerKind::Conv2d:
            return conv2d_backward(layer, x, upstream);
        case LayerKind::Relu: {
            g.gx = Tensor(x.shape);
            for (size_t i = 0; i < x.numel(); ++i) g.gx[i] = x[i] > 0.0 ? upstream[i] : 0.0;
            return g;
        }
        case LayerKind::MaxPool2d: {
            g.gx = Tensor(x.shape);
            if (cache.argmax.size() != upstream.numel())
                throw StateError("maxpool2d backward: cached argmax does not match upstream");
            for (size_t i = 0; i < upstream.numel(); ++i) g.gx[cache.argmax[i]] += upstream[i];
            return g;
        }
        case LayerKind::AvgPool1d: {
            const int D = static_cast<int>(x.numel());
            const int K = layer.kernel, S = layer.stride;
            const int Do = static_cast<int>(upstream.numel());
            g.gx = Tensor(x.shape);
            for (int d = 0; d < D; ++d) {
                double acc = 0.0;
                for (int i = 0; i < Do; ++i) {
                    if (d >= i * S && d < i * S + K) acc += upstream[i];
                }
                g.gx[d] = acc / K;
            }
            return g;
        }
        case LayerKind::Fc: {
            const int D = layer.in_dim, C = layer.out_dim;
            g.gx = Tensor(x.shape);
            g.gw = Tensor(layer.w.shape);
            g.gb = Tensor(layer.b.shape);
            for (int d = 0; d < D; ++d) {
                double acc = 0.0;
                for (int c = 0; c < C; ++c) acc += upstream[c] * layer.w[static_cast<size_t>(d) * C + c];
                g.gx.data[d] = acc;
            }
            for (int d = 0; d < D; ++d)
                for (int c = 0; c < C; ++c) g.gw[static_cast<size_t>(d) * C + c] = x[d] * upstream[c];
            for (int c = 0; c < C; ++c) g.gb[c] = upstream[c];
            return g;
        }
        case LayerKind::Dropout: {
            if (cache.mask.size() != x.numel())
                throw StateError("dropout backward: no mask from a matching forward call");
            g.gx = Tensor(x.shape);
            for (size_t i = 0; i < x.numel(); ++i) g.gx[i] = upstream[i] * cache.mask[i];
            return g;
        }
        case LayerKind::DepthConcat: {
            g.gx = Tensor(x.shape, upstream.data);
            return g;
        }
        case LayerKind::SoftmaxXent: {
            if (cache.label < 0) throw StateError("softmax_xent backward: call xent_loss first");
            g.gx = cache.probs;
            g.gx.data[cache.label] -= 1.0;
            return g;
        }
    }
    throw StateError("layer_backward: unknown layer kind");
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ParamError("concat: no parts");
    size_t total = 0;
    for (const Tensor& p : parts) total += p.numel();
    Tensor y({static_cast<int>(total)});
    size_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data.begin(), p.data.end(), y.data.begin() + off);
        off += p.numel();
    }
    return y;
}

std::vector<Tensor> concat_backward(const Tensor& upstream, const std::vector<int>& sizes) {
    size_t total = 0;
    for (int s : sizes) total += static_cast<size_t>(s);
    if (total != upstream.numel())
        throw ShapeError("concat_backward: part sizes do not sum to upstream length");
    std::vector<Tensor> parts;
    size_t off = 0;
    for (int s : sizes) {
        Tensor p({s});
        std::copy(upstream.data.begin() + off, upstream.data.begin() + off + s, p.data.begin());
        off += s;
        parts.push_back(std::move(p));
    }
    return parts;
}

bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace handbio::nn
