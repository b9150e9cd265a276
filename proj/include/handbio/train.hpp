#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "handbio/model.hpp"

namespace handbio::nn {

struct TrainHyper {
    double lr_pretrained = 1e-4;  // conv stacks and trunk fc layers
    double lr_new = 0.002;        // new fc layers, fusion, head
    double momentum = 0.9;
    int batch = 32;
    int epochs_stage1 = 20;
    int epochs_joint = 9;
    uint64_t seed = 0;
    double convergence_tol = 1e-4;  // stop when relative loss improvement drops below

    // The defaults above assume a pretrained backbone; the desk preset trains
    // from random weights and needs hotter rates and a smaller batch.
    static TrainHyper desk();

    void validate() const;
};

struct GenderSample {
    Tensor low;   // 3-channel input for stream 1
    Tensor high;  // 1-channel detail input for stream 2
    int label = -1;
};

struct TrainLogEntry {
    std::string phase;  // stage1_s1, stage1_s2, joint
    int epoch = 0;
    std::string split;  // train
    double loss = 0.0;
    double accuracy = 0.0;
};

using TrainLog = std::vector<TrainLogEntry>;

// Trains one stream in place against a temporary fc(tap -> 2) + softmax head;
// the head is discarded. `which` selects the stream input (1 = low, 2 = high).
void train_stage1(std::vector<Layer>& stream, int which, const std::vector<GenderSample>& data,
                  const TrainHyper& hyper, TrainLog& log);

// End-to-end training of the full model, starting from the current weights.
void train_joint(TwoStreamModel& model, const std::vector<GenderSample>& data,
                 const TrainHyper& hyper, TrainLog& log);

// Stage 1 on both streams, then joint training.
void train_two_stage(TwoStreamModel& model, const std::vector<GenderSample>& data,
                     const TrainHyper& hyper, TrainLog& log);

void write_train_log_csv(const TrainLog& log, const std::string& path);

}  // namespace handbio::nn
