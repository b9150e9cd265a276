#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "handbio/image.hpp"
#include "handbio/layers.hpp"

namespace handbio::nn {

// Gender class indices used across the library: 0 = male, 1 = female.

struct ConvSpec {
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    int pool_kernel = 0;  // 0 disables pooling after this conv
    int pool_stride = 0;
};

struct TwoStreamConfig {
    std::string preset = "desk";
    int input_size = 32;
    std::vector<ConvSpec> stream1_convs;
    std::vector<ConvSpec> stream2_convs;
    std::vector<int> trunk_fc;        // loaded-group fc dims, shared by both streams
    std::vector<int> stream1_new_fc;  // new-group fc dims, last entry is the tap
    std::vector<int> stream2_new_fc;
    int fusion_fc_out = 32;
    int avgpool_kernel = 2;
    int avgpool_stride = 2;
    double dropout_rate = 0.5;

    static TwoStreamConfig paper();
    static TwoStreamConfig desk();

    void validate() const;
    // Spatial size after the conv stack, then flattened length.
    static int conv_spatial(const std::vector<ConvSpec>& convs, int input_size);
    static int conv_flatten(const std::vector<ConvSpec>& convs, int input_size);
    int stream1_tap_dim() const { return stream1_new_fc.back(); }
    int stream2_tap_dim() const { return stream2_new_fc.back(); }
    int pooled_dim() const { return (fusion_fc_out - avgpool_kernel) / avgpool_stride + 1; }
};

// stream1 and stream2 each end at their tap fc (no activation after it);
// fusion = [fusion fc, relu, avgpool1d, head fc, softmax] on the depth
// concatenation of the two taps.
struct TwoStreamModel {
    TwoStreamConfig config;
    std::vector<Layer> stream1, stream2, fusion;
    bool initialized = false;
};

struct ModelCaches {
    std::vector<LayerCache> s1, s2, fus;
};

struct ModelGrads {
    std::vector<LayerGrads> s1, s2, fus;
    void accumulate(const ModelGrads& other);
};

struct FeatureTaps {
    Tensor stream1_tap;  // last fc of stream 1
    Tensor stream2_tap;  // last fc of stream 2
    Tensor fusion_tap;   // fusion fc output
    Tensor concatenated() const;
};

struct GenderPrediction {
    int cls = -1;  // 0 = male, 1 = female
    Tensor probs;
};

// Collapses the channel axis of (O,3,k,k) conv weights to (O,1,k,k) with the
// luma coefficients 0.2989, 0.5870, 0.1140.
Tensor luma_init_conv1(const Tensor& rgb_weights);

TwoStreamModel build_two_stream(const TwoStreamConfig& config, uint64_t seed);

// Interleaved HxWxC image -> planar (C,H,W) tensor.
Tensor image_to_tensor(const Image& img);

// Sequential execution of a layer chain. `caches` is resized to match.
Tensor chain_forward(const std::vector<Layer>& chain, const Tensor& x, Mode mode, Rng* rng,
                     std::vector<LayerCache>& caches);
// Returns the gradient at the chain input; grads[i] receives layer i's grads.
Tensor chain_backward(const std::vector<Layer>& chain, const std::vector<LayerCache>& caches,
                      const Tensor& upstream, std::vector<LayerGrads>& grads);

// Full forward pass; returns softmax probabilities over the two classes.
Tensor model_forward(const TwoStreamModel& m, const Tensor& x1, const Tensor& x2, Mode mode,
                     Rng* rng, ModelCaches& caches, FeatureTaps* taps = nullptr);

// Cross-entropy loss at `label` plus full backward; fills `grads` (overwrite).
double model_backward(const TwoStreamModel& m, ModelCaches& caches, int label, ModelGrads& grads);

FeatureTaps forward_features(const TwoStreamModel& m, const Image& low, const Image& high);
GenderPrediction predict_gender(const TwoStreamModel& m, const Image& low, const Image& high);

// All parameter-carrying layers, stable order, for optimizers and serialization.
std::vector<std::pair<std::string, Layer*>> param_layers(TwoStreamModel& m);
std::vector<std::pair<std::string, const Layer*>> param_layers(const TwoStreamModel& m);

}  // namespace handbio::nn
