#pragma once

#include <string>
#include <vector>

#include "handbio/rng.hpp"
#include "handbio/tensor.hpp"

namespace handbio::nn {

enum class LayerKind {
    Conv2d,
    Relu,
    MaxPool2d,
    AvgPool1d,
    Fc,
    Dropout,
    DepthConcat,
    SoftmaxXent,
};

enum class Mode { Train, Eval };

// One node of the fixed layer set. Parameter tensors live inline; layers
// without parameters keep w and b empty.
struct Layer {
    LayerKind kind = LayerKind::Relu;
    std::string name;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    int in_dim = 0;
    int out_dim = 0;
    double rate = 0.0;
    bool new_group = false;  // trained at the new-layer learning rate
    Tensor w, b;

    bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Fc; }
};

// Per-call state captured by forward and consumed by backward.
struct LayerCache {
    Tensor input;
    std::vector<int32_t> argmax;  // maxpool: flat input index of each winner
    std::vector<double> mask;     // dropout: keep/scale factor per element
    Tensor probs;                 // softmax output
    int label = -1;               // set by xent_loss, used by softmax backward
    bool has_forward = false;
};

struct LayerGrads {
    Tensor gx, gw, gb;
};

Layer make_conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int pad, bool new_group = false);
Layer make_fc(std::string name, int in_dim, int out_dim, bool new_group = false);
Layer make_relu();
Layer make_maxpool2d(int kernel, int stride);
Layer make_avgpool1d(int kernel, int stride);
Layer make_dropout(double rate);
Layer make_depth_concat();
Layer make_softmax_xent();

// Kaiming fan-in initialization: w ~ N(0, 2/fan_in), b = 0.
void init_params(Layer& layer, Rng& rng);

// Dropout in train mode draws its mask from `rng` and requires it non-null.
Tensor layer_forward(const Layer& layer, const Tensor& input, Mode mode, Rng* rng,
                     LayerCache& cache);

// `upstream` must match the forward output shape. SoftmaxXent ignores it and
// differentiates the cross-entropy at cache.label directly.
LayerGrads layer_backward(const Layer& layer, const LayerCache& cache, const Tensor& upstream);

// Cross-entropy of the cached softmax call; records the label for backward.
double xent_loss(LayerCache& cache, int label);

Tensor concat(const std::vector<Tensor>& parts);
std::vector<Tensor> concat_backward(const Tensor& upstream, const std::vector<int>& sizes);

bool all_finite(const Tensor& t);

}  // namespace handbio::nn
