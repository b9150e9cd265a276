#include "handbio/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "handbio/error.hpp"
#include "handbio/image_io.hpp"

namespace handbio::exp {

namespace fs = std::filesystem;

Image FileSource::load(const std::string& path) const { return io::read_image(path); }

MemorySource::MemorySource(const data::SynthCorpus& corpus) {
    for (size_t i = 0; i < corpus.dataset.records.size(); ++i) {
        images_.emplace(corpus.dataset.records[i].image_path, corpus.images[i]);
    }
}

void MemorySource::add(const std::string& path, Image image) {
    images_[path] = std::move(image);
}

Image MemorySource::load(const std::string& path) const {
    auto it = images_.find(path);
    if (it == images_.end()) throw DataError("no such image in memory source: " + path);
    return it->second;
}

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

uint64_t content_hash(const Image& image, const img::PreprocessParams& p) {
    uint64_t h = fnv1a(image.data.data(), image.data.size() * sizeof(double));
    const int dims[3] = {image.height, image.width, image.channels};
    h = fnv1a(dims, sizeof dims, h);
    const double vals[4] = {static_cast<double>(p.guided.radius), p.guided.regularization,
                            p.epsilon, static_cast<double>(p.out_size)};
    return fnv1a(vals, sizeof vals, h);
}

std::string hex16(uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

int gender_label(const data::HandRecord& r) {
    return r.gender == data::Gender::Female ? 1 : 0;
}

std::vector<double> to_vector(const Tensor& t) { return {t.data.begin(), t.data.end()}; }

}  // namespace

Preprocessor::Preprocessor(const ImageSource& source, const img::PreprocessParams& params,
                           std::string cache_dir)
    : source_(&source), params_(params), cache_dir_(std::move(cache_dir)) {
    params_.guided.validate();
    if (params_.out_size < 2) throw ParamError("preprocess out_size must be >= 2");
    if (!cache_dir_.empty()) fs::create_directories(cache_dir_);
}

const img::PreprocessResult& Preprocessor::get(const std::string& path) {
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    materialize(path);
    return cache_.at(path);
}

std::string Preprocessor::materialize(const std::string& path) {
    if (cache_dir_.empty()) {
        if (!cache_.count(path)) {
            cache_.emplace(path, img::preprocess(source_->load(path), params_));
        }
        return "";
    }
    // Cached planes are float32; results always pass through the container
    // so cached and fresh runs see identical values.
    Image raw = source_->load(path);
    const std::string file = cache_dir_ + "/" + hex16(content_hash(raw, params_)) + ".hbpf";
    if (cache_.count(path)) return file;
    if (!fs::exists(file)) {
        img::PreprocessResult fresh = img::preprocess(raw, params_);
        io::write_planes(file, {fresh.low, fresh.high, fresh.detail_luma});
    }
    std::vector<Image> planes = io::read_planes(file);
    if (planes.size() != 3) throw IoError("corrupt plane cache entry: " + file);
    img::PreprocessResult res;
    res.low = std::move(planes[0]);
    res.high = std::move(planes[1]);
    res.detail_luma = std::move(planes[2]);
    cache_.emplace(path, std::move(res));
    return file;
}

void Preprocessor::warm(const std::vector<std::string>& paths) {
    for (const auto& p : paths) get(p);
}

// ---------------------------------------------------------------- gender --

nn::GenderSample make_gender_sample(const img::PreprocessResult& pre, int label) {
    nn::GenderSample s;
    s.low = nn::image_to_tensor(pre.low);
    s.high = nn::image_to_tensor(pre.high);
    s.label = label;
    return s;
}

nn::TwoStreamModel train_gender_model(const data::Dataset& ds, Preprocessor& prep,
                                      const eval::GenderSplit& split,
                                      const ExperimentConfig& cfg, uint64_t seed,
                                      nn::TrainLog& log) {
    std::vector<nn::GenderSample> train;
    train.reserve(split.train.size());
    for (size_t idx : split.train) {
        const auto& rec = ds.records[idx];
        train.push_back(make_gender_sample(prep.get(rec.image_path), gender_label(rec)));
    }
    nn::TwoStreamModel model = nn::build_two_stream(cfg.model, seed);
    nn::TrainHyper hyper = cfg.hyper;
    hyper.seed = seed;
    nn::train_two_stage(model, train, hyper, log);
    return model;
}

namespace {

svm::DataMatrix stack_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw DataError("no feature rows");
    svm::DataMatrix x(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ShapeError("ragged feature rows");
        std::copy(rows[i].begin(), rows[i].end(), x.row(static_cast<int>(i)));
    }
    return x;
}

}  // namespace

GenderRepeat eval_gender_model(const nn::TwoStreamModel& model, const data::Dataset& ds,
                               Preprocessor& prep, const eval::GenderSplit& split,
                               const std::string& method, const ExperimentConfig& cfg) {
    if (method != "cnn" && method != "svm_on_features") {
        throw ParamError("unknown gender method '" + method +
                         "' (expected cnn or svm_on_features)");
    }
    std::vector<int> preds, labels;
    if (method == "cnn") {
        for (size_t idx : split.test) {
            const auto& rec = ds.records[idx];
            const auto& pre = prep.get(rec.image_path);
            preds.push_back(nn::predict_gender(model, pre.low, pre.high).cls);
            labels.push_back(gender_label(rec));
        }
    } else {
        auto features = [&](size_t idx) {
            const auto& pre = prep.get(ds.records[idx].image_path);
            return to_vector(nn::forward_features(model, pre.low, pre.high).concatenated());
        };
        std::vector<std::vector<double>> rows;
        std::vector<int> y;
        for (size_t idx : split.train) {
            rows.push_back(features(idx));
            y.push_back(gender_label(ds.records[idx]));
        }
        svm::CalibratedSvm cls = svm::train_calibrated_binary(stack_rows(rows), y,
                                                              cfg.gender_kernel, cfg.gender_c);
        for (size_t idx : split.test) {
            preds.push_back(svm::predict_calibrated(cls, features(idx)));
            labels.push_back(gender_label(ds.records[idx]));
        }
    }

    GenderRepeat rep;
    rep.seed = split.seed;
    rep.accuracy = eval::accuracy(preds, labels);
    rep.confusion = eval::confusion(preds, labels);
    return rep;
}

namespace {

GenderRepeat run_gender_repeat(const data::Dataset& ds, Preprocessor& prep,
                               const std::string& method, data::Side side, uint64_t seed,
                               int repeat, const ExperimentConfig& cfg) {
    eval::GenderSplit split = eval::make_gender_split(ds, side, seed, cfg.gender_split);
    split.repeat_index = repeat;
    nn::TrainLog log;
    nn::TwoStreamModel model = train_gender_model(ds, prep, split, cfg, seed, log);
    return eval_gender_model(model, ds, prep, split, method, cfg);
}

}  // namespace

GenderResult run_gender_experiment(const data::Dataset& ds, Preprocessor& prep,
                                   const std::string& method, data::Side side,
                                   const std::vector<uint64_t>& seeds,
                                   const ExperimentConfig& cfg) {
    if (method != "cnn" && method != "svm_on_features") {
        throw ParamError("unknown gender method '" + method +
                         "' (expected cnn or svm_on_features)");
    }
    if (seeds.empty()) throw ParamError("gender experiment needs at least one seed");

    GenderResult out;
    out.method = method;
    out.side = side;
    double sum = 0.0;
    for (size_t r = 0; r < seeds.size(); ++r) {
        try {
            out.repeats.push_back(
                run_gender_repeat(ds, prep, method, side, seeds[r], static_cast<int>(r), cfg));
        } catch (const Error& e) {
            throw Error("gender repeat " + std::to_string(r) + " (seed " +
                        std::to_string(seeds[r]) + ") failed: " + e.what());
        }
        sum += out.repeats.back().accuracy;
    }
    out.mean_accuracy = sum / static_cast<double>(out.repeats.size());
    return out;
}

// -------------------------------------------------------- identification --

std::vector<ViewSpec> ensemble_views(const nn::TwoStreamModel& m) {
    if (!m.initialized) throw StateError("model not initialized");
    return {{ViewKind::S1Tap, m.stream1.back().name},
            {ViewKind::S2Tap, m.stream2.back().name},
            {ViewKind::FusionTap, "fusion"},
            {ViewKind::Lbp, "lbp"}};
}

std::vector<ViewSpec> single_svm_views() { return {{ViewKind::CnnConcat, "cnn_concat"}}; }

std::vector<double> extract_view(const ViewSpec& view, const nn::FeatureTaps& taps,
                                 const Image& detail_luma, const lbp::LbpParams& params) {
    switch (view.kind) {
        case ViewKind::S1Tap: return to_vector(taps.stream1_tap);
        case ViewKind::S2Tap: return to_vector(taps.stream2_tap);
        case ViewKind::FusionTap: return to_vector(taps.fusion_tap);
        case ViewKind::Lbp: return lbp::lbp_histogram(detail_luma, params).values;
        case ViewKind::CnnConcat: return to_vector(taps.concatenated());
    }
    throw ParamError("unknown view kind");
}

IdModel train_id_model(const data::Dataset& ds, Preprocessor& prep, const eval::IdSplit& split,
                       const std::string& fusion, const ExperimentConfig& cfg, uint64_t seed,
                       nn::TrainLog& log) {
    if (fusion != "single_svm" && fusion != "ensemble") {
        throw ParamError("unknown fusion mode '" + fusion +
                         "' (expected single_svm or ensemble)");
    }

    IdModel out;
    std::vector<nn::GenderSample> train;
    std::vector<int> subjects;
    train.reserve(split.train.size());
    for (size_t idx : split.train) {
        const auto& rec = ds.records[idx];
        train.push_back(make_gender_sample(prep.get(rec.image_path), gender_label(rec)));
        subjects.push_back(rec.subject_id);
    }
    out.cnn = nn::build_two_stream(cfg.model, seed);
    nn::TrainHyper hyper = cfg.hyper;
    hyper.seed = seed;
    nn::train_two_stage(out.cnn, train, hyper, log);

    std::vector<nn::FeatureTaps> taps(split.train.size());
    for (size_t k = 0; k < split.train.size(); ++k) {
        const auto& pre = prep.get(ds.records[split.train[k]].image_path);
        taps[k] = nn::forward_features(out.cnn, pre.low, pre.high);
    }

    out.views = fusion == "ensemble" ? ensemble_views(out.cnn) : single_svm_views();
    for (const auto& view : out.views) {
        std::vector<std::vector<double>> rows;
        rows.reserve(split.train.size());
        for (size_t k = 0; k < split.train.size(); ++k) {
            const auto& pre = prep.get(ds.records[split.train[k]].image_path);
            rows.push_back(extract_view(view, taps[k], pre.detail_luma, cfg.lbp));
        }
        out.banks.push_back(svm::train_one_vs_all(stack_rows(rows), subjects, cfg.ova));
    }
    return out;
}

namespace {

bool record_trials(TrialScores& t, const std::vector<double>& scores, int true_idx) {
    const int am = svm::sum_rule_fuse({scores}).argmax;
    t.genuine_raw.push_back(scores[true_idx]);
    t.genuine.push_back(am == true_idx ? scores[true_idx]
                                       : -std::numeric_limits<double>::infinity());
    for (size_t c = 0; c < scores.size(); ++c) {
        if (static_cast<int>(c) != true_idx) t.impostor.push_back(scores[c]);
    }
    return am == true_idx;
}

}  // namespace

IdEvalResult eval_id_model(const IdModel& model, const data::Dataset& ds, Preprocessor& prep,
                           const std::vector<size_t>& test_indices,
                           const ExperimentConfig& cfg) {
    if (model.banks.empty() || model.banks.size() != model.views.size()) {
        throw StateError("identification model has no trained banks");
    }
    const auto& classes = model.banks[0].classes;
    for (const auto& bank : model.banks) {
        if (bank.classes != classes) throw ConfigError("score views disagree on the class list");
    }

    IdEvalResult out;
    for (const auto& view : model.views) out.trials[view.name];
    out.trials["fused"];

    std::map<std::string, int> view_correct;
    int correct = 0;
    for (size_t idx : test_indices) {
        const auto& rec = ds.records[idx];
        const auto& pre = prep.get(rec.image_path);
        nn::FeatureTaps taps = nn::forward_features(model.cnn, pre.low, pre.high);

        auto pos = std::find(classes.begin(), classes.end(), rec.subject_id);
        if (pos == classes.end()) {
            throw DataError("test subject " + std::to_string(rec.subject_id) +
                            " is not enrolled");
        }
        const int true_idx = static_cast<int>(pos - classes.begin());

        std::vector<std::vector<double>> per_view;
        per_view.reserve(model.views.size());
        for (size_t v = 0; v < model.views.size(); ++v) {
            auto f = extract_view(model.views[v], taps, pre.detail_luma, cfg.lbp);
            per_view.push_back(svm::bank_log_posteriors(model.banks[v], f));
            if (record_trials(out.trials[model.views[v].name], per_view.back(), true_idx))
                ++view_correct[model.views[v].name];
        }
        svm::FusedScores fused = svm::sum_rule_fuse(per_view);
        if (record_trials(out.trials["fused"], fused.scores, true_idx)) ++view_correct["fused"];
        if (fused.argmax == true_idx) ++correct;
    }
    const double denom = test_indices.empty() ? 1.0 : static_cast<double>(test_indices.size());
    out.top1 = static_cast<double>(correct) / denom;
    for (const auto& [name, t] : out.trials)
        out.view_top1[name] = static_cast<double>(view_correct[name]) / denom;
    return out;
}

std::string id_column_label(int n_subjects, data::Side side) {
    return "(" + std::to_string(n_subjects) + "-" +
           (side == data::Side::Palmar ? "P" : "D") + ")";
}

IdResult run_id_experiment(const data::Dataset& ds, Preprocessor& prep, int n_subjects,
                           data::Side side, const std::string& fusion,
                           const std::vector<uint64_t>& seeds, const ExperimentConfig& cfg) {
    if (seeds.empty()) throw ParamError("identification experiment needs at least one seed");

    IdResult out;
    out.side = side;
    out.n_subjects = n_subjects;
    out.fusion = fusion;
    out.column = id_column_label(n_subjects, side);

    std::map<std::string, TrialScores> pooled;
    std::map<std::string, double> view_sum;
    double sum = 0.0;
    for (size_t r = 0; r < seeds.size(); ++r) {
        try {
            eval::IdSplit split = eval::make_id_split(ds, side, n_subjects, seeds[r],
                                                      cfg.id_split);
            split.repeat_index = static_cast<int>(r);
            nn::TrainLog log;
            IdModel model = train_id_model(ds, prep, split, fusion, cfg, seeds[r], log);
            IdEvalResult ev = eval_id_model(model, ds, prep, split.test, cfg);
            out.repeats.push_back({seeds[r], ev.top1});
            sum += ev.top1;
            for (const auto& [name, v] : ev.view_top1) view_sum[name] += v;
            for (const auto& [name, t] : ev.trials) {
                TrialScores& p = pooled[name];
                p.genuine.insert(p.genuine.end(), t.genuine.begin(), t.genuine.end());
                p.genuine_raw.insert(p.genuine_raw.end(), t.genuine_raw.begin(),
                                     t.genuine_raw.end());
                p.impostor.insert(p.impostor.end(), t.impostor.begin(), t.impostor.end());
            }
        } catch (const Error& e) {
            throw Error("identification repeat " + std::to_string(r) + " (seed " +
                        std::to_string(seeds[r]) + ") failed: " + e.what());
        }
    }
    out.mean_top1 = sum / static_cast<double>(out.repeats.size());
    for (const auto& [name, v] : view_sum)
        out.mean_view_top1[name] = v / static_cast<double>(out.repeats.size());
    out.reports = reports_from_trials(pooled);
    return out;
}

std::map<std::string, eval::ErrorReport> reports_from_trials(
    const std::map<std::string, TrialScores>& trials) {
    std::map<std::string, eval::ErrorReport> out;
    for (const auto& [name, t] : trials) {
        eval::ErrorReport report =
            eval::far_frr(t.genuine, t.impostor, eval::ThresholdSweep::default_grid());
        eval::eer(report);
        eval::roc_auc(t.genuine_raw, t.impostor, report);
        out.emplace(name, std::move(report));
    }
    return out;
}

// ------------------------------------------------------------- reporting --

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void write_gender_report(const GenderResult& r, const std::string& dir) {
    fs::create_directories(dir);
    {
        auto out = open_out(dir + "/accuracy.csv");
        out << "repeat,seed,accuracy\n";
        for (size_t i = 0; i < r.repeats.size(); ++i) {
            out << i << ',' << r.repeats[i].seed << ','
                << format_double(r.repeats[i].accuracy) << '\n';
        }
        out << "mean,," << format_double(r.mean_accuracy) << '\n';
    }
    {
        auto out = open_out(dir + "/confusion.csv");
        out << "repeat,predicted,male,female\n";
        const char* names[2] = {"male", "female"};
        for (size_t i = 0; i < r.repeats.size(); ++i) {
            const auto& c = r.repeats[i].confusion;
            for (int p = 0; p < c.k; ++p) {
                out << i << ',' << names[p];
                for (int t = 0; t < c.k; ++t) out << ',' << format_double(c.rate(p, t));
                out << '\n';
            }
        }
    }
}

void write_id_report(const IdResult& r, const std::string& dir) {
    fs::create_directories(dir);
    {
        auto out = open_out(dir + "/accuracy.csv");
        out << "repeat,seed," << r.column << '\n';
        for (size_t i = 0; i < r.repeats.size(); ++i) {
            out << i << ',' << r.repeats[i].seed << ','
                << format_double(r.repeats[i].top1) << '\n';
        }
        out << "mean,," << format_double(r.mean_top1) << '\n';
    }
    {
        auto out = open_out(dir + "/far_frr.csv");
        out << "view,threshold,far,frr\n";
        for (const auto& [name, rep] : r.reports) {
            for (size_t i = 0; i < rep.thresholds.size(); ++i) {
                out << name << ',' << format_double(rep.thresholds[i]) << ','
                    << format_double(rep.far[i]) << ',' << format_double(rep.frr[i]) << '\n';
            }
        }
    }
    {
        auto out = open_out(dir + "/roc.csv");
        out << "view,fpr,tpr\n";
        for (const auto& [name, rep] : r.reports) {
            for (size_t i = 0; i < rep.roc_fpr.size(); ++i) {
                out << name << ',' << format_double(rep.roc_fpr[i]) << ','
                    << format_double(rep.roc_tpr[i]) << '\n';
            }
        }
    }
}

void write_gender_summary(const GenderResult& r, const std::vector<uint64_t>& seeds,
                          uint64_t config_hash, const std::string& path) {
    nlohmann::json j;
    j["experiment"] = "gender";
    j["method"] = r.method;
    j["side"] = data::to_string(r.side);
    j["seeds"] = seeds;
    j["mean_accuracy"] = r.mean_accuracy;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& rep : r.repeats) per.push_back(rep.accuracy);
    j["per_repeat_accuracy"] = per;
    j["config_hash"] = hex16(config_hash);
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

void write_id_summary(const IdResult& r, const std::vector<uint64_t>& seeds,
                      uint64_t config_hash, const std::string& path) {
    nlohmann::json j;
    j["experiment"] = "identification";
    j["fusion"] = r.fusion;
    j["side"] = data::to_string(r.side);
    j["n_subjects"] = r.n_subjects;
    j["column"] = r.column;
    j["seeds"] = seeds;
    j["mean_top1"] = r.mean_top1;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& rep : r.repeats) per.push_back(rep.top1);
    j["per_repeat_top1"] = per;
    j["sweep_target"] = r.sweep_target;
    nlohmann::json views;
    for (const auto& [name, rep] : r.reports) {
        views[name] = {{"eer", rep.eer},
                       {"eer_threshold", rep.eer_threshold},
                       {"eer_extrapolated", rep.eer_extrapolated},
                       {"auc", rep.auc}};
        auto it = r.mean_view_top1.find(name);
        if (it != r.mean_view_top1.end()) views[name]["top1"] = it->second;
    }
    j["views"] = views;
    j["config_hash"] = hex16(config_hash);
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

}  // namespace handbio::exp
