#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "handbio/dataset.hpp"
#include "handbio/imgproc.hpp"
#include "handbio/lbp.hpp"
#include "handbio/metrics.hpp"
#include "handbio/model.hpp"
#include "handbio/splits.hpp"
#include "handbio/svm.hpp"
#include "handbio/train.hpp"

namespace handbio::exp {

// Image access abstraction: experiments run identically on a disk corpus or
// on an in-memory synthetic one.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual Image load(const std::string& path) const = 0;
};

class FileSource final : public ImageSource {
public:
    Image load(const std::string& path) const override;
};

class MemorySource final : public ImageSource {
public:
    MemorySource() = default;
    explicit MemorySource(const data::SynthCorpus& corpus);
    void add(const std::string& path, Image image);
    Image load(const std::string& path) const override;

private:
    std::map<std::string, Image> images_;
};

// Preprocessing results are memoized in memory and, when a cache directory
// is given, persisted as plane containers keyed by a content hash of the
// raw pixels and the preprocessing parameters.
class Preprocessor {
public:
    Preprocessor(const ImageSource& source, const img::PreprocessParams& params,
                 std::string cache_dir = "");

    const img::PreprocessResult& get(const std::string& path);
    void warm(const std::vector<std::string>& paths);
    // Ensures the entry exists and returns the backing cache file ("" when
    // no cache directory is configured).
    std::string materialize(const std::string& path);
    const img::PreprocessParams& params() const { return params_; }

private:
    const ImageSource* source_;
    img::PreprocessParams params_;
    std::string cache_dir_;
    std::map<std::string, img::PreprocessResult> cache_;
};

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL);

struct ExperimentConfig {
    nn::TwoStreamConfig model = nn::TwoStreamConfig::desk();
    nn::TrainHyper hyper;
    img::PreprocessParams prep;  // out_size is forced to model.input_size
    eval::GenderSplitSpec gender_split;
    eval::IdSplitSpec id_split;
    lbp::LbpParams lbp;
    svm::Kernel gender_kernel = svm::Kernel::linear();
    double gender_c = 1.0;
    svm::OvaOptions ova;  // identification banks (degree-2 kernel default)
};

// ---------------------------------------------------------------- gender --

struct GenderRepeat {
    uint64_t seed = 0;
    double accuracy = 0.0;
    eval::Confusion confusion;
};

struct GenderResult {
    std::string method;  // cnn | svm_on_features
    data::Side side = data::Side::Dorsal;
    std::vector<GenderRepeat> repeats;
    double mean_accuracy = 0.0;
};

nn::GenderSample make_gender_sample(const img::PreprocessResult& pre, int label);

// Trains the two-stream model on the split's training images (one seed
// drives split choice, weight init and batch order).
nn::TwoStreamModel train_gender_model(const data::Dataset& ds, Preprocessor& prep,
                                      const eval::GenderSplit& split,
                                      const ExperimentConfig& cfg, uint64_t seed,
                                      nn::TrainLog& log);

// Held-out evaluation of a trained model on the split's test images; the
// svm_on_features method fits its calibrated SVM on the split's training
// features first.
GenderRepeat eval_gender_model(const nn::TwoStreamModel& model, const data::Dataset& ds,
                               Preprocessor& prep, const eval::GenderSplit& split,
                               const std::string& method, const ExperimentConfig& cfg);

GenderResult run_gender_experiment(const data::Dataset& ds, Preprocessor& prep,
                                   const std::string& method, data::Side side,
                                   const std::vector<uint64_t>& seeds,
                                   const ExperimentConfig& cfg);

// -------------------------------------------------------- identification --

enum class ViewKind { S1Tap, S2Tap, FusionTap, Lbp, CnnConcat };

// A score view: one feature extractor feeding one one-vs-all bank. Views
// are named after the producing layer (s1_fc9, s2_fc10, fusion at full
// scale) plus the texture view lbp; the single_svm variant uses the single
// view cnn_concat over the concatenated taps.
struct ViewSpec {
    ViewKind kind = ViewKind::CnnConcat;
    std::string name;
};

std::vector<ViewSpec> ensemble_views(const nn::TwoStreamModel& m);
std::vector<ViewSpec> single_svm_views();

std::vector<double> extract_view(const ViewSpec& view, const nn::FeatureTaps& taps,
                                 const Image& detail_luma, const lbp::LbpParams& lbp);

struct IdModel {
    nn::TwoStreamModel cnn;
    std::vector<ViewSpec> views;
    std::vector<svm::SvmBank> banks;  // aligned with views
};

IdModel train_id_model(const data::Dataset& ds, Preprocessor& prep, const eval::IdSplit& split,
                       const std::string& fusion, const ExperimentConfig& cfg, uint64_t seed,
                       nn::TrainLog& log);

struct TrialScores {
    std::vector<double> genuine;      // -inf when the image was assigned to another class
    std::vector<double> genuine_raw;  // true-class score regardless of assignment
    std::vector<double> impostor;
};

struct IdEvalResult {
    double top1 = 0.0;
    std::map<std::string, double> view_top1;    // per view plus "fused"
    std::map<std::string, TrialScores> trials;  // per view plus "fused"
};

IdEvalResult eval_id_model(const IdModel& model, const data::Dataset& ds, Preprocessor& prep,
                           const std::vector<size_t>& test_indices,
                           const ExperimentConfig& cfg);

struct IdRepeat {
    uint64_t seed = 0;
    double top1 = 0.0;
};

struct IdResult {
    data::Side side = data::Side::Dorsal;
    int n_subjects = 0;
    std::string fusion;  // single_svm | ensemble
    std::string column;  // accuracy-table header cell, e.g. "(80-P)"
    std::vector<IdRepeat> repeats;
    double mean_top1 = 0.0;
    std::map<std::string, double> mean_view_top1;
    std::string sweep_target = "fused";
    std::map<std::string, eval::ErrorReport> reports;  // per view plus "fused"
};

std::string id_column_label(int n_subjects, data::Side side);

// FAR/FRR on the default sweep, EER and ROC/AUC for every score view.
std::map<std::string, eval::ErrorReport> reports_from_trials(
    const std::map<std::string, TrialScores>& trials);

IdResult run_id_experiment(const data::Dataset& ds, Preprocessor& prep, int n_subjects,
                           data::Side side, const std::string& fusion,
                           const std::vector<uint64_t>& seeds, const ExperimentConfig& cfg);

// ------------------------------------------------------------- reporting --

std::string format_double(double v);

void write_gender_report(const GenderResult& r, const std::string& dir);
void write_id_report(const IdResult& r, const std::string& dir);

// summary.json: means, EER/AUC of the sweep target, seeds, config hash.
void write_gender_summary(const GenderResult& r, const std::vector<uint64_t>& seeds,
                          uint64_t config_hash, const std::string& path);
void write_id_summary(const IdResult& r, const std::vector<uint64_t>& seeds,
                      uint64_t config_hash, const std::string& path);

}  // namespace handbio::exp
