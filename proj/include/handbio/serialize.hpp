#pragma once

#include <string>
#include <vector>

#include "handbio/model.hpp"
#include "handbio/svm.hpp"
#include "handbio/tensor.hpp"

namespace handbio::io {

// Weights container: "HBWT", u32 version, u32 entry count, then per entry
// u16 name length, name bytes, u8 dtype (0 = f32, 1 = f64, 2 = raw bytes),
// u8 rank, u32 shape[rank], little-endian payload. Model files default to
// f64 so a save/load round trip reproduces forward passes bit-for-bit.
struct NamedTensor {
    std::string name;
    Tensor tensor;          // dtype 0/1 entries
    std::string bytes;      // dtype 2 entries
    bool is_bytes = false;
};

void write_weights(const std::string& path, const std::vector<NamedTensor>& entries,
                   bool as_f32 = false);
std::vector<NamedTensor> read_weights(const std::string& path);

// Full model: every parameter tensor plus a __config__ entry holding the
// architecture as JSON.
void save_model(const std::string& path, const nn::TwoStreamModel& m);
nn::TwoStreamModel load_model(const std::string& path);

std::string config_to_json(const nn::TwoStreamConfig& c);
nn::TwoStreamConfig config_from_json(const std::string& text);

// SVM banks: "HBSV", u32 version, kernel spec, c_box, scaler, class list,
// then per class (platt A/B, bias, support-vector matrix, coefficients).
void save_bank(const std::string& path, const svm::SvmBank& bank);
svm::SvmBank load_bank(const std::string& path);

// Calibrated binary SVM: "HBCS", u32 version, scaler, one model block.
void save_calibrated(const std::string& path, const svm::CalibratedSvm& model);
svm::CalibratedSvm load_calibrated(const std::string& path);

}  // namespace handbio::io
