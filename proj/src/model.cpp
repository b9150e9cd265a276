#include "handbio/model.hpp"

#include <algorithm>
#include <cmath>

#include "handbio/error.hpp"

namespace handbio::nn {

TwoStreamConfig TwoStreamConfig::paper() {
    TwoStreamConfig c;
    c.preset = "paper";
    c.input_size = 224;
    c.stream1_convs = {
        {96, 11, 4, 0, 3, 2}, {256, 5, 1, 2, 3, 2}, {384, 3, 1, 1, 0, 0},
        {384, 3, 1, 1, 0, 0}, {256, 3, 1, 1, 3, 2},
    };
    c.stream2_convs = c.stream1_convs;
    c.trunk_fc = {4096, 4096};
    c.stream1_new_fc = {2048, 531};
    c.stream2_new_fc = {2048, 2048, 531};
    c.fusion_fc_out = 1062;
    c.avgpool_kernel = 2;
    c.avgpool_stride = 2;
    c.dropout_rate = 0.5;
    return c;
}

TwoStreamConfig TwoStreamConfig::desk() {
    TwoStreamConfig c;
    c.preset = "desk";
    c.input_size = 32;
    c.stream1_convs = {
        {8, 5, 2, 0, 3, 2},
        {16, 3, 1, 1, 2, 2},
    };
    c.stream2_convs = c.stream1_convs;
    c.trunk_fc = {64};
    c.stream1_new_fc = {32, 16};
    c.stream2_new_fc = {32, 32, 16};
    c.fusion_fc_out = 32;
    c.avgpool_kernel = 2;
    c.avgpool_stride = 2;
    c.dropout_rate = 0.15;
    return c;
}

int TwoStreamConfig::conv_spatial(const std::vector<ConvSpec>& convs, int input_size) {
    int s = input_size;
    for (const ConvSpec& cs : convs) {
        s = (s + 2 * cs.pad - cs.kernel) / cs.stride + 1;
        if (s < 1) throw ConfigError("conv stack shrinks input below 1 pixel");
        if (cs.pool_kernel > 0) {
            s = (s - cs.pool_kernel) / cs.pool_stride + 1;
            if (s < 1) throw ConfigError("pooling shrinks input below 1 pixel");
        }
    }
    return s;
}

int TwoStreamConfig::conv_flatten(const std::vector<ConvSpec>& convs, int input_size) {
    return convs.back().out_channels * conv_spatial(convs, input_size) *
           conv_spatial(convs, input_size);
}

namespace {

void check_fc_chain(const std::vector<int>& dims, int in_dim, const std::string& what) {
    int prev = in_dim;
    for (int d : dims) {
        if (d < 1) throw ConfigError(what + ": fc dim must be positive");
        if (d > prev)
            throw ConfigError(what + ": fc layers must not grow the dimension (" +
                              std::to_string(prev) + " -> " + std::to_string(d) + ")");
        prev = d;
    }
}

}  // namespace

void TwoStreamConfig::validate() const {
    if (input_size < 1) throw ConfigError("input_size must be positive");
    if (stream1_convs.empty() || stream2_convs.empty())
        throw ConfigError("each stream needs at least one conv layer");
    if (stream1_new_fc.empty() || stream2_new_fc.empty())
        throw ConfigError("each stream needs at least one new fc layer");
    for (const auto* convs : {&stream1_convs, &stream2_convs}) {
        for (const ConvSpec& cs : *convs) {
            if (cs.out_channels < 1 || cs.kernel < 1 || cs.stride < 1 || cs.pad < 0)
                throw ConfigError("bad conv spec");
            if (cs.pool_kernel > 0 && cs.pool_stride < 1) throw ConfigError("bad pool spec");
        }
    }
    const int f1 = conv_flatten(stream1_convs, input_size);
    const int f2 = conv_flatten(stream2_convs, input_size);
    check_fc_chain(trunk_fc, f1, "stream1 trunk");
    check_fc_chain(trunk_fc, f2, "stream2 trunk");
    const int t1 = trunk_fc.empty() ? f1 : trunk_fc.back();
    const int t2 = trunk_fc.empty() ? f2 : trunk_fc.back();
    check_fc_chain(stream1_new_fc, t1, "stream1 new fc chain");
    check_fc_chain(stream2_new_fc, t2, "stream2 new fc chain");
    const int fusion_in = stream1_new_fc.back() + stream2_new_fc.back();
    if (fusion_fc_out < 1 || fusion_fc_out > fusion_in)
        throw ConfigError("fusion_fc_out must lie in [1, " + std::to_string(fusion_in) + "]");
    if (avgpool_kernel < 1 || avgpool_stride < 1 || pooled_dim() < 2)
        throw ConfigError("average pooling leaves fewer than 2 values for the head");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ConfigError("dropout_rate must be in [0,1)");
}

Tensor luma_init_conv1(const Tensor& rgb_weights) {
    if (rgb_weights.rank() != 4 || rgb_weights.shape[1] != 3)
        throw ShapeError("luma_init_conv1: weights must be (out,3,k,k), got " +
                         rgb_weights.shape_str());
    const int O = rgb_weights.shape[0], K1 = rgb_weights.shape[2], K2 = rgb_weights.shape[3];
    Tensor out({O, 1, K1, K2});
    const size_t plane = static_cast<size_t>(K1) * K2;
    for (int o = 0; o < O; ++o) {
        const double* r = rgb_weights.data.data() + (static_cast<size_t>(o) * 3 + 0) * plane;
        const double* g = rgb_weights.data.data() + (static_cast<size_t>(o) * 3 + 1) * plane;
        const double* b = rgb_weights.data.data() + (static_cast<size_t>(o) * 3 + 2) * plane;
        double* dst = out.data.data() + static_cast<size_t>(o) * plane;
        for (size_t i = 0; i < plane; ++i) dst[i] = 0.2989 * r[i] + 0.5870 * g[i] + 0.1140 * b[i];
    }
    return out;
}

namespace {

std::vector<Layer> build_stream(const TwoStreamConfig& cfg, const std::vector<ConvSpec>& convs,
                                const std::vector<int>& new_fc, int in_channels,
                                const std::string& prefix, Rng& rng) {
    std::vector<Layer> chain;
    int ch = in_channels;
    for (size_t i = 0; i < convs.size(); ++i) {
        const ConvSpec& cs = convs[i];
        chain.push_back(make_conv2d(prefix + "_conv" + std::to_string(i + 1), ch, cs.out_channels,
                                    cs.kernel, cs.stride, cs.pad, false));
        chain.push_back(make_relu());
        if (cs.pool_kernel > 0) chain.push_back(make_maxpool2d(cs.pool_kernel, cs.pool_stride));
        ch = cs.out_channels;
    }
    int dim = TwoStreamConfig::conv_flatten(convs, cfg.input_size);
    int fc_idx = static_cast<int>(convs.size()) + 1;
    for (int d : cfg.trunk_fc) {
        chain.push_back(make_fc(prefix + "_fc" + std::to_string(fc_idx++), dim, d, false));
        chain.push_back(make_relu());
        chain.push_back(make_dropout(cfg.dropout_rate));
        dim = d;
    }
    for (size_t i = 0; i < new_fc.size(); ++i) {
        chain.push_back(make_fc(prefix + "_fc" + std::to_string(fc_idx++), dim, new_fc[i], true));
        dim = new_fc[i];
        if (i + 1 < new_fc.size()) {  // the tap fc keeps no activation and no dropout
            chain.push_back(make_relu());
            chain.push_back(make_dropout(cfg.dropout_rate));
        }
    }
    for (Layer& l : chain) init_params(l, rng);
    return chain;
}

// Mirror the loaded-group weights of stream 1 into stream 2; a 3-channel to
// 1-channel conv1 goes through the luma combination, identically shaped
// layers are copied, anything else keeps its own initialization.
void mirror_loaded_group(const std::vector<Layer>& s1, std::vector<Layer>& s2) {
    std::vector<const Layer*> src;
    for (const Layer& l : s1) {
        if (l.has_params() && !l.new_group) src.push_back(&l);
    }
    size_t k = 0;
    for (Layer& l : s2) {
        if (!l.has_params() || l.new_group) continue;
        if (k >= src.size()) break;
        const Layer& from = *src[k++];
        if (from.kind != l.kind) continue;
        if (from.w.same_shape(l.w)) {
            l.w = from.w;
            l.b = from.b;
        } else if (l.kind == LayerKind::Conv2d && from.in_channels == 3 && l.in_channels == 1 &&
                   from.out_channels == l.out_channels && from.kernel == l.kernel) {
            l.w = luma_init_conv1(from.w);
            l.b = from.b;
        }
    }
}

}  // namespace

TwoStreamModel build_two_stream(const TwoStreamConfig& config, uint64_t seed) {
    config.validate();
    TwoStreamModel m;
    m.config = config;
    Rng rng(seed);
    m.stream1 = build_stream(config, config.stream1_convs, config.stream1_new_fc, 3, "s1", rng);
    m.stream2 = build_stream(config, config.stream2_convs, config.stream2_new_fc, 1, "s2", rng);
    mirror_loaded_group(m.stream1, m.stream2);
    const int fusion_in = config.stream1_tap_dim() + config.stream2_tap_dim();
    m.fusion.push_back(make_fc("fusion_fc", fusion_in, config.fusion_fc_out, true));
    m.fusion.push_back(make_relu());
    m.fusion.push_back(make_avgpool1d(config.avgpool_kernel, config.avgpool_stride));
    m.fusion.push_back(make_fc("head_fc", config.pooled_dim(), 2, true));
    m.fusion.push_back(make_softmax_xent());
    for (Layer& l : m.fusion) init_params(l, rng);
    m.initialized = true;
    return m;
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({img.channels, img.height, img.width});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t[(static_cast<size_t>(c) * img.height + y) * img.width + x] = img.at(y, x, c);
    return t;
}

Tensor chain_forward(const std::vector<Layer>& chain, const Tensor& x, Mode mode, Rng* rng,
                     std::vector<LayerCache>& caches) {
    caches.assign(chain.size(), LayerCache{});
    Tensor cur = x;
    for (size_t i = 0; i < chain.size(); ++i) cur = layer_forward(chain[i], cur, mode, rng, caches[i]);
    return cur;
}

Tensor chain_backward(const std::vector<Layer>& chain, const std::vector<LayerCache>& caches,
                      const Tensor& upstream, std::vector<LayerGrads>& grads) {
    if (caches.size() != chain.size())
        throw StateError("chain_backward: cache count does not match chain");
    grads.assign(chain.size(), LayerGrads{});
    Tensor g = upstream;
    for (size_t i = chain.size(); i-- > 0;) {
        grads[i] = layer_backward(chain[i], caches[i], g);
        g = std::move(grads[i].gx);
        grads[i].gx = Tensor{};
    }
    return g;
}

Tensor model_forward(const TwoStreamModel& m, const Tensor& x1, const Tensor& x2, Mode mode,
                     Rng* rng, ModelCaches& caches, FeatureTaps* taps) {
    if (!m.initialized) throw StateError("model: build or load it before running a forward pass");
    Tensor t1 = chain_forward(m.stream1, x1, mode, rng, caches.s1);
    Tensor t2 = chain_forward(m.stream2, x2, mode, rng, caches.s2);
    Tensor cur = concat({t1, t2});
    caches.fus.assign(m.fusion.size(), LayerCache{});
    Tensor fusion_tap;
    for (size_t i = 0; i < m.fusion.size(); ++i) {
        cur = layer_forward(m.fusion[i], cur, mode, rng, caches.fus[i]);
        if (i == 0) fusion_tap = cur;
    }
    if (taps != nullptr) {
        taps->stream1_tap = std::move(t1);
        taps->stream2_tap = std::move(t2);
        taps->fusion_tap = std::move(fusion_tap);
    }
    return cur;
}

double model_backward(const TwoStreamModel& m, ModelCaches& caches, int label, ModelGrads& grads) {
    if (caches.fus.empty()) throw StateError("model_backward: run a forward pass first");
    const double loss = xent_loss(caches.fus.back(), label);
    Tensor g = chain_backward(m.fusion, caches.fus, Tensor{}, grads.fus);
    auto parts = concat_backward(
        g, {m.config.stream1_tap_dim(), m.config.stream2_tap_dim()});
    chain_backward(m.stream1, caches.s1, parts[0], grads.s1);
    chain_backward(m.stream2, caches.s2, parts[1], grads.s2);
    return loss;
}

namespace {

void accumulate_grads(std::vector<LayerGrads>& into, const std::vector<LayerGrads>& from) {
    if (into.empty()) {
        into = from;
        return;
    }
    if (into.size() != from.size()) throw ShapeError("gradient accumulation: chain size mismatch");
    for (size_t i = 0; i < into.size(); ++i) {
        for (size_t k = 0; k < from[i].gw.numel(); ++k) into[i].gw.data[k] += from[i].gw[k];
        for (size_t k = 0; k < from[i].gb.numel(); ++k) into[i].gb.data[k] += from[i].gb[k];
    }
}

}  // namespace

void ModelGrads::accumulate(const ModelGrads& other) {
    accumulate_grads(s1, other.s1);
    accumulate_grads(s2, other.s2);
    accumulate_grads(fus, other.fus);
}

Tensor FeatureTaps::concatenated() const {
    return concat({stream1_tap, stream2_tap, fusion_tap});
}

FeatureTaps forward_features(const TwoStreamModel& m, const Image& low, const Image& high) {
    low.require_channels(3, "stream-1 input");
    high.require_channels(1, "stream-2 input");
    ModelCaches caches;
    FeatureTaps taps;
    model_forward(m, image_to_tensor(low), image_to_tensor(high), Mode::Eval, nullptr, caches,
                  &taps);
    return taps;
}

GenderPrediction predict_gender(const TwoStreamModel& m, const Image& low, const Image& high) {
    low.require_channels(3, "stream-1 input");
    high.require_channels(1, "stream-2 input");
    ModelCaches caches;
    Tensor probs = model_forward(m, image_to_tensor(low), image_to_tensor(high), Mode::Eval,
                                 nullptr, caches, nullptr);
    GenderPrediction p;
    p.probs = probs;
    p.cls = probs[1] > probs[0] ? 1 : 0;
    return p;
}

namespace {

template <typename ModelT, typename LayerPtr>
std::vector<std::pair<std::string, LayerPtr>> collect_params(ModelT& m) {
    std::vector<std::pair<std::string, LayerPtr>> out;
    for (auto* chain : {&m.stream1, &m.stream2, &m.fusion}) {
        for (auto& l : *chain) {
            if (l.has_params()) out.emplace_back(l.name, &l);
        }
    }
    return out;
}

}  // namespace

std::vector<std::pair<std::string, Layer*>> param_layers(TwoStreamModel& m) {
    return collect_params<TwoStreamModel, Layer*>(m);
}

std::vector<std::pair<std::string, const Layer*>> param_layers(const TwoStreamModel& m) {
    return collect_params<const TwoStreamModel, const Layer*>(m);
}

}  // namespace handbio::nn
