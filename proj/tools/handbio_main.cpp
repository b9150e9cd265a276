#include <fcntl.h>
#include <omp.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "handbio/dataset.hpp"
#include "handbio/error.hpp"
#include "handbio/experiments.hpp"
#include "handbio/image_io.hpp"
#include "handbio/serialize.hpp"
#include "handbio/splits.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
namespace hb = handbio;

namespace {

// ------------------------------------------------------------ run config --

struct RunConfig {
    std::string command;
    std::string preset = "desk";
    std::string data, csv, out, model_dir, cache;
    hb::data::Side side = hb::data::Side::Dorsal;
    std::string method = "cnn";        // cnn | svm_on_features
    std::string fusion = "ensemble";   // ensemble | single_svm
    int subjects = 20;
    bool force = false;
    bool overwrite = false;
    bool svg = false;
    std::vector<uint64_t> seeds{1};
    std::string gender_kernel = "linear", id_kernel = "poly2";
    hb::exp::ExperimentConfig exp;
    hb::data::SynthParams synth;
};

hb::svm::Kernel kernel_from_name(const std::string& name) {
    if (name == "linear") return hb::svm::Kernel::linear();
    if (name == "poly2") return hb::svm::Kernel::poly2();
    throw hb::ConfigError("unknown kernel '" + name + "' (expected linear or poly2)");
}

void apply_preset(RunConfig& c, const std::string& name) {
    c.preset = name;
    if (name == "paper") {
        c.exp.model = hb::nn::TwoStreamConfig::paper();
        c.exp.hyper = hb::nn::TrainHyper{};
        c.exp.gender_split = {1000, 500};
        c.exp.prep.guided.radius = 10;
        c.subjects = 80;
    } else if (name == "desk") {
        c.exp.model = hb::nn::TwoStreamConfig::desk();
        c.exp.hyper = hb::nn::TrainHyper::desk();
        c.exp.gender_split = {120, 60};
        c.exp.prep.guided.radius = 4;
        c.exp.lbp.radius = 3;
        c.subjects = 20;
    } else {
        throw hb::ConfigError("unknown preset '" + name + "' (expected paper or desk)");
    }
    c.exp.prep.out_size = c.exp.model.input_size;
    c.synth.seed = 1;
}

std::vector<uint64_t> parse_seeds(const std::string& text) {
    std::vector<uint64_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        try {
            out.push_back(std::stoull(part));
        } catch (const std::exception&) {
            throw hb::ConfigError("bad seed value '" + part + "' in --seeds");
        }
    }
    if (out.empty()) throw hb::ConfigError("--seeds needs at least one value");
    return out;
}

json snapshot(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["preset"] = c.preset;
    j["data"] = c.data;
    j["csv"] = c.csv;
    j["out"] = c.out;
    j["model"] = c.model_dir;
    j["cache"] = c.cache;
    j["side"] = hb::data::to_string(c.side);
    j["method"] = c.method;
    j["fusion"] = c.fusion;
    j["subjects"] = c.subjects;
    j["force"] = c.force;
    j["svg"] = c.svg;
    j["seeds"] = c.seeds;
    j["network"] = json::parse(hb::io::config_to_json(c.exp.model));
    j["hyper"] = {{"lr_pretrained", c.exp.hyper.lr_pretrained},
                  {"lr_new", c.exp.hyper.lr_new},
                  {"momentum", c.exp.hyper.momentum},
                  {"batch", c.exp.hyper.batch},
                  {"epochs_stage1", c.exp.hyper.epochs_stage1},
                  {"epochs_joint", c.exp.hyper.epochs_joint},
                  {"convergence_tol", c.exp.hyper.convergence_tol}};
    j["prep"] = {{"radius", c.exp.prep.guided.radius},
                 {"regularization", c.exp.prep.guided.regularization},
                 {"epsilon", c.exp.prep.epsilon}};
    j["gender_split"] = {{"train_per_gender", c.exp.gender_split.train_per_gender},
                         {"test_per_gender", c.exp.gender_split.test_per_gender}};
    j["id_split"] = {{"train_per_subject", c.exp.id_split.train_per_subject},
                     {"test_per_subject", c.exp.id_split.test_per_subject}};
    j["svm"] = {{"gender_kernel", c.gender_kernel},
                {"gender_c", c.exp.gender_c},
                {"id_kernel", c.id_kernel},
                {"id_c", c.exp.ova.c_box},
                {"tol", c.exp.ova.tol},
                {"max_passes", c.exp.ova.max_passes},
                {"calib_folds", c.exp.ova.calib_folds}};
    j["lbp"] = {{"radius", c.exp.lbp.radius}, {"uniform", c.exp.lbp.uniform}};
    j["synth"] = {{"n_subjects", c.synth.n_subjects},
                  {"images_per_subject", c.synth.images_per_subject},
                  {"gender_signal", c.synth.gender_signal},
                  {"subject_signal", c.synth.subject_signal},
                  {"image_size", c.synth.image_size},
                  {"accessory_fraction", c.synth.accessory_fraction},
                  {"dorsal", c.synth.dorsal},
                  {"palmar", c.synth.palmar},
                  {"seed", c.synth.seed}};
    return j;
}

void merge_json(RunConfig& c, const json& j) {
    auto get = [&](const char* key, auto& target) {
        if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
    };
    get("data", c.data);
    get("csv", c.csv);
    get("model", c.model_dir);
    get("cache", c.cache);
    if (j.contains("side")) c.side = hb::data::side_from_string(j.at("side").get<std::string>());
    get("method", c.method);
    get("fusion", c.fusion);
    get("subjects", c.subjects);
    get("force", c.force);
    get("svg", c.svg);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (j.contains("network")) c.exp.model = hb::io::config_from_json(j.at("network").dump());
    if (j.contains("hyper")) {
        const json& h = j.at("hyper");
        auto& hy = c.exp.hyper;
        if (h.contains("lr_pretrained")) hy.lr_pretrained = h.at("lr_pretrained");
        if (h.contains("lr_new")) hy.lr_new = h.at("lr_new");
        if (h.contains("momentum")) hy.momentum = h.at("momentum");
        if (h.contains("batch")) hy.batch = h.at("batch");
        if (h.contains("epochs_stage1")) hy.epochs_stage1 = h.at("epochs_stage1");
        if (h.contains("epochs_joint")) hy.epochs_joint = h.at("epochs_joint");
        if (h.contains("convergence_tol")) hy.convergence_tol = h.at("convergence_tol");
    }
    if (j.contains("prep")) {
        const json& p = j.at("prep");
        if (p.contains("radius")) c.exp.prep.guided.radius = p.at("radius");
        if (p.contains("regularization")) c.exp.prep.guided.regularization = p.at("regularization");
        if (p.contains("epsilon")) c.exp.prep.epsilon = p.at("epsilon");
    }
    if (j.contains("gender_split")) {
        const json& g = j.at("gender_split");
        if (g.contains("train_per_gender"))
            c.exp.gender_split.train_per_gender = g.at("train_per_gender");
        if (g.contains("test_per_gender"))
            c.exp.gender_split.test_per_gender = g.at("test_per_gender");
    }
    if (j.contains("id_split")) {
        const json& g = j.at("id_split");
        if (g.contains("train_per_subject"))
            c.exp.id_split.train_per_subject = g.at("train_per_subject");
        if (g.contains("test_per_subject"))
            c.exp.id_split.test_per_subject = g.at("test_per_subject");
    }
    if (j.contains("svm")) {
        const json& s = j.at("svm");
        if (s.contains("gender_kernel")) c.gender_kernel = s.at("gender_kernel");
        if (s.contains("gender_c")) c.exp.gender_c = s.at("gender_c");
        if (s.contains("id_kernel")) c.id_kernel = s.at("id_kernel");
        if (s.contains("id_c")) c.exp.ova.c_box = s.at("id_c");
        if (s.contains("tol")) c.exp.ova.tol = s.at("tol");
        if (s.contains("max_passes")) c.exp.ova.max_passes = s.at("max_passes");
        if (s.contains("calib_folds")) c.exp.ova.calib_folds = s.at("calib_folds");
    }
    if (j.contains("lbp")) {
        const json& l = j.at("lbp");
        if (l.contains("radius")) c.exp.lbp.radius = l.at("radius");
        if (l.contains("uniform")) c.exp.lbp.uniform = l.at("uniform");
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        auto& sp = c.synth;
        if (s.contains("n_subjects")) sp.n_subjects = s.at("n_subjects");
        if (s.contains("images_per_subject")) sp.images_per_subject = s.at("images_per_subject");
        if (s.contains("gender_signal")) sp.gender_signal = s.at("gender_signal");
        if (s.contains("subject_signal")) sp.subject_signal = s.at("subject_signal");
        if (s.contains("image_size")) sp.image_size = s.at("image_size");
        if (s.contains("accessory_fraction")) sp.accessory_fraction = s.at("accessory_fraction");
        if (s.contains("dorsal")) sp.dorsal = s.at("dorsal");
        if (s.contains("palmar")) sp.palmar = s.at("palmar");
        if (s.contains("seed")) sp.seed = s.at("seed");
    }
}

// --------------------------------------------------------- cli plumbing  --

struct Staged {
    std::string config_path, preset, side, data, csv, out, model_dir, cache;
    std::string method, fusion, seeds_str, sides = "dorsal";
    int subjects = 0;
    bool overwrite = false, force = false, svg = false;
    int n_subjects = 0, images_per_subject = 0, image_size = 0;
    double gender_signal = 0, subject_signal = 0, accessory_fraction = 0;
};

RunConfig build_config(const Staged& s, CLI::App* sub, const std::string& command) {
    json file;
    if (!s.config_path.empty()) {
        std::ifstream in(s.config_path);
        if (!in) throw hb::ConfigError("cannot read config file " + s.config_path);
        try {
            in >> file;
        } catch (const json::exception& e) {
            throw hb::ConfigError("bad config JSON in " + s.config_path + ": " + e.what());
        }
    }

    RunConfig c;
    c.command = command;
    std::string preset = "desk";
    if (file.contains("preset")) preset = file.at("preset").get<std::string>();
    if (sub->count("--preset")) preset = s.preset;
    apply_preset(c, preset);
    if (!file.empty()) merge_json(c, file);

    auto passed = [&](const char* flag) {
        const CLI::Option* o = sub->get_option_no_throw(flag);
        return o != nullptr && o->count() > 0;
    };
    if (passed("--side")) c.side = hb::data::side_from_string(s.side);
    if (passed("--data")) c.data = s.data;
    if (passed("--csv")) c.csv = s.csv;
    if (passed("--model")) c.model_dir = s.model_dir;
    if (passed("--cache")) c.cache = s.cache;
    if (passed("--method")) c.method = s.method;
    if (passed("--fusion")) c.fusion = s.fusion;
    if (passed("--subjects")) c.subjects = s.subjects;
    if (passed("--force")) c.force = true;
    if (passed("--svg")) c.svg = true;
    if (passed("--overwrite")) c.overwrite = true;
    if (passed("--seeds")) {
        c.seeds = parse_seeds(s.seeds_str);
        c.synth.seed = c.seeds[0];
    }
    if (command == "synth") {
        if (passed("--n-subjects")) c.synth.n_subjects = s.n_subjects;
        if (passed("--images-per-subject")) c.synth.images_per_subject = s.images_per_subject;
        if (passed("--image-size")) c.synth.image_size = s.image_size;
        if (passed("--gender-signal")) c.synth.gender_signal = s.gender_signal;
        if (passed("--subject-signal")) c.synth.subject_signal = s.subject_signal;
        if (passed("--accessory-fraction")) c.synth.accessory_fraction = s.accessory_fraction;
        if (passed("--sides")) {
            if (s.sides == "dorsal") {
                c.synth.dorsal = true;
                c.synth.palmar = false;
            } else if (s.sides == "palmar") {
                c.synth.dorsal = false;
                c.synth.palmar = true;
            } else if (s.sides == "both") {
                c.synth.dorsal = c.synth.palmar = true;
            } else {
                throw hb::ConfigError("--sides must be dorsal, palmar or both");
            }
        }
    }
    c.out = s.out;

    c.exp.prep.out_size = c.exp.model.input_size;
    c.exp.gender_kernel = kernel_from_name(c.gender_kernel);
    c.exp.ova.kernel = kernel_from_name(c.id_kernel);
    c.exp.id_split.allow_nonstandard_counts = c.force;
    return c;
}

void prepare_out(const RunConfig& c) {
    if (c.out.empty()) throw hb::ConfigError("--out is required");
    fs::path p(c.out);
    if (fs::exists(p)) {
        bool has_results = false;
        for (const auto& entry : fs::directory_iterator(p)) {
            if (entry.path().filename() != ".lock") has_results = true;
        }
        if (has_results && !c.overwrite) {
            throw hb::ConfigError("output directory " + c.out +
                                  " already has results (pass --overwrite to replace them)");
        }
    } else {
        fs::create_directories(p);
    }
}

// One command at a time per output directory.
struct DirLock {
    std::string path;
    int fd = -1;

    explicit DirLock(const std::string& dir) : path(dir + "/.lock") {
        fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw hb::ConfigError("lockfile " + path +
                                  " exists; another command may be running in this "
                                  "directory (delete the file if it is stale)");
        }
    }
    ~DirLock() {
        if (fd >= 0) {
            ::close(fd);
            ::unlink(path.c_str());
        }
    }
};

uint64_t write_snapshot(const RunConfig& c) {
    json j = snapshot(c);
    std::ofstream out(c.out + "/config.json", std::ios::binary);
    if (!out) throw hb::IoError("cannot write " + c.out + "/config.json");
    std::string text = j.dump(2);
    out << text << '\n';
    return hb::exp::fnv1a(text.data(), text.size());
}

hb::data::Dataset load_data(const RunConfig& c) {
    if (c.data.empty()) throw hb::ConfigError("--data (corpus directory) is required");
    std::string csv = c.csv.empty() ? c.data + "/metadata.csv" : c.csv;
    return hb::data::load_metadata(csv, c.data);
}

json read_run_json(const std::string& dir, const char* producing_command) {
    std::string path = dir + "/config.json";
    std::ifstream in(path);
    if (!in) {
        throw hb::ConfigError("no run config at " + path + "; produce the model with " +
                              std::string(producing_command) + " first");
    }
    json j;
    in >> j;
    return j;
}

// Rebuilds the configuration a training run was performed with.
RunConfig config_from_run(const json& snap, const RunConfig& cli) {
    RunConfig c;
    c.command = cli.command;
    apply_preset(c, snap.value("preset", "desk"));
    merge_json(c, snap);
    if (!cli.data.empty()) c.data = cli.data;
    if (!cli.csv.empty()) c.csv = cli.csv;
    if (!cli.cache.empty()) c.cache = cli.cache;
    c.exp.prep.out_size = c.exp.model.input_size;
    c.exp.gender_kernel = kernel_from_name(c.gender_kernel);
    c.exp.ova.kernel = kernel_from_name(c.id_kernel);
    c.exp.id_split.allow_nonstandard_counts = true;  // the split was already accepted once
    return c;
}

const char* view_kind_name(hb::exp::ViewKind k) {
    switch (k) {
        case hb::exp::ViewKind::S1Tap: return "s1_tap";
        case hb::exp::ViewKind::S2Tap: return "s2_tap";
        case hb::exp::ViewKind::FusionTap: return "fusion_tap";
        case hb::exp::ViewKind::Lbp: return "lbp";
        case hb::exp::ViewKind::CnnConcat: return "cnn_concat";
    }
    return "cnn_concat";
}

hb::exp::ViewKind view_kind_from_name(const std::string& s) {
    if (s == "s1_tap") return hb::exp::ViewKind::S1Tap;
    if (s == "s2_tap") return hb::exp::ViewKind::S2Tap;
    if (s == "fusion_tap") return hb::exp::ViewKind::FusionTap;
    if (s == "lbp") return hb::exp::ViewKind::Lbp;
    if (s == "cnn_concat") return hb::exp::ViewKind::CnnConcat;
    throw hb::ConfigError("unknown view kind '" + s + "' in views.json");
}

void write_split_csv(const hb::data::Dataset& ds, const std::vector<size_t>& train,
                     const std::vector<size_t>& test, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw hb::IoError("cannot write " + path);
    out << "role,image_path\n";
    for (size_t i : train) out << "train," << ds.records[i].image_path << '\n';
    for (size_t i : test) out << "test," << ds.records[i].image_path << '\n';
}

void write_roc_svg(const std::map<std::string, hb::eval::ErrorReport>& reports,
                   const std::string& path) {
    const int size = 480, margin = 50, plot = size - 2 * margin;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw hb::IoError("cannot write " + path);
    auto px = [&](double fpr) { return margin + fpr * plot; };
    auto py = [&](double tpr) { return size - margin - tpr * plot; };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\""
        << size << "\">\n";
    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot
        << "\" height=\"" << plot << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\""
        << py(1) << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4\"/>\n";
    out << "<text x=\"" << size / 2 << "\" y=\"" << size - 12
        << "\" text-anchor=\"middle\" font-size=\"13\">false positive rate</text>\n";
    out << "<text x=\"14\" y=\"" << size / 2 << "\" text-anchor=\"middle\" font-size=\"13\""
        << " transform=\"rotate(-90 14 " << size / 2 << ")\">true positive rate</text>\n";
    int i = 0;
    for (const auto& [name, rep] : reports) {
        const char* color = colors[i % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t k = 0; k < rep.roc_fpr.size(); ++k) {
            out << px(rep.roc_fpr[k]) << ',' << py(rep.roc_tpr[k]) << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << margin + 8 << "\" y=\"" << margin + 16 + 14 * i
            << "\" font-size=\"12\" fill=\"" << color << "\">" << name
            << " (auc " << hb::exp::format_double(rep.auc) << ")</text>\n";
        ++i;
    }
    out << "</svg>\n";
}

// ---------------------------------------------------------------- commands

int cmd_synth(const RunConfig& c) {
    prepare_out(c);
    DirLock lock(c.out);
    write_snapshot(c);
    hb::data::SynthCorpus corpus = hb::data::synth_dataset(c.synth);
    hb::data::write_synth_corpus(corpus, c.out);
    std::cout << "synth: wrote " << corpus.images.size() << " images and metadata.csv to "
              << c.out << '\n';
    return 0;
}

int cmd_preprocess(const RunConfig& c) {
    hb::data::Dataset ds = load_data(c);
    prepare_out(c);
    DirLock lock(c.out);
    write_snapshot(c);
    hb::exp::FileSource source;
    hb::exp::Preprocessor prep(source, c.exp.prep, c.out + "/planes");
    std::ofstream index(c.out + "/planes_index.csv", std::ios::binary);
    if (!index) throw hb::IoError("cannot write " + c.out + "/planes_index.csv");
    index << "image_path,plane_file\n";
    for (const auto& rec : ds.records) {
        std::string file = prep.materialize(rec.image_path);
        index << rec.image_path << ',' << fs::path(file).filename().string() << '\n';
    }
    std::cout << "preprocess: cached " << ds.records.size() << " images under " << c.out
              << "/planes\n";
    return 0;
}

int cmd_train_gender(const RunConfig& c) {
    hb::data::Dataset ds = load_data(c);
    prepare_out(c);
    DirLock lock(c.out);
    write_snapshot(c);
    hb::eval::GenderSplit split =
        hb::eval::make_gender_split(ds, c.side, c.seeds[0], c.exp.gender_split);
    hb::exp::FileSource source;
    hb::exp::Preprocessor prep(source, c.exp.prep, c.cache);
    hb::nn::TrainLog log;
    hb::nn::TwoStreamModel model =
        hb::exp::train_gender_model(ds, prep, split, c.exp, c.seeds[0], log);
    hb::io::save_model(c.out + "/model.hbwt", model);
    hb::nn::write_train_log_csv(log, c.out + "/train_log.csv");
    write_split_csv(ds, split.train, split.test, c.out + "/split.csv");
    std::cout << "train-gender: model saved to " << c.out << "/model.hbwt ("
              << split.train.size() << " training images)\n";
    return 0;
}

int cmd_eval_gender(const RunConfig& c) {
    prepare_out(c);
    DirLock lock(c.out);
    uint64_t config_hash = write_snapshot(c);

    hb::exp::GenderResult result;
    std::vector<uint64_t> seeds;
    if (!c.model_dir.empty()) {
        std::string mfile = c.model_dir + "/model.hbwt";
        if (!fs::exists(mfile)) {
            throw hb::ConfigError("no trained model at " + mfile +
                                  "; produce it with train-gender first");
        }
        json snap = read_run_json(c.model_dir, "train-gender");
        RunConfig run = config_from_run(snap, c);
        hb::data::Dataset ds = load_data(run);
        hb::eval::GenderSplit split =
            hb::eval::make_gender_split(ds, run.side, run.seeds[0], run.exp.gender_split);
        hb::nn::TwoStreamModel model = hb::io::load_model(mfile);
        hb::exp::FileSource source;
        hb::exp::Preprocessor prep(source, run.exp.prep, run.cache);
        result.method = c.method;
        result.side = run.side;
        result.repeats.push_back(
            hb::exp::eval_gender_model(model, ds, prep, split, c.method, run.exp));
        result.mean_accuracy = result.repeats[0].accuracy;
        seeds = {run.seeds[0]};
    } else {
        hb::data::Dataset ds = load_data(c);
        hb::exp::FileSource source;
        hb::exp::Preprocessor prep(source, c.exp.prep, c.cache);
        result = hb::exp::run_gender_experiment(ds, prep, c.method, c.side, c.seeds, c.exp);
        seeds = c.seeds;
    }
    hb::exp::write_gender_report(result, c.out);
    hb::exp::write_gender_summary(result, seeds, config_hash, c.out + "/summary.json");
    std::cout << "eval-gender: mean accuracy "
              << hb::exp::format_double(result.mean_accuracy) << " (" << result.method
              << ", " << hb::data::to_string(result.side) << ")\n";
    return 0;
}

int cmd_train_id(const RunConfig& c) {
    hb::data::Dataset ds = load_data(c);
    prepare_out(c);
    DirLock lock(c.out);
    write_snapshot(c);
    hb::eval::IdSplit split =
        hb::eval::make_id_split(ds, c.side, c.subjects, c.seeds[0], c.exp.id_split);
    hb::exp::FileSource source;
    hb::exp::Preprocessor prep(source, c.exp.prep, c.cache);
    hb::nn::TrainLog log;
    hb::exp::IdModel model =
        hb::exp::train_id_model(ds, prep, split, c.fusion, c.exp, c.seeds[0], log);
    hb::io::save_model(c.out + "/cnn.hbwt", model.cnn);
    json views = json::array();
    for (size_t v = 0; v < model.views.size(); ++v) {
        views.push_back({{"kind", view_kind_name(model.views[v].kind)},
                         {"name", model.views[v].name}});
        hb::io::save_bank(c.out + "/bank_" + model.views[v].name + ".hbsv", model.banks[v]);
    }
    {
        std::ofstream out(c.out + "/views.json", std::ios::binary);
        if (!out) throw hb::IoError("cannot write " + c.out + "/views.json");
        out << views.dump(2) << '\n';
    }
    hb::nn::write_train_log_csv(log, c.out + "/train_log.csv");
    write_split_csv(ds, split.train, split.test, c.out + "/split.csv");
    std::cout << "train-id: saved cnn.hbwt and " << model.views.size() << " bank files to "
              << c.out << '\n';
    return 0;
}

int cmd_eval_id(const RunConfig& c) {
    prepare_out(c);
    DirLock lock(c.out);
    uint64_t config_hash = write_snapshot(c);

    hb::exp::IdResult result;
    std::vector<uint64_t> seeds;
    if (!c.model_dir.empty()) {
        std::string cnn_file = c.model_dir + "/cnn.hbwt";
        std::string views_file = c.model_dir + "/views.json";
        if (!fs::exists(cnn_file) || !fs::exists(views_file)) {
            throw hb::ConfigError("no trained identification model in " + c.model_dir +
                                  " (expected cnn.hbwt and views.json); produce them with "
                                  "train-id first");
        }
        json snap = read_run_json(c.model_dir, "train-id");
        RunConfig run = config_from_run(snap, c);
        hb::data::Dataset ds = load_data(run);
        hb::eval::IdSplit split = hb::eval::make_id_split(ds, run.side, run.subjects,
                                                          run.seeds[0], run.exp.id_split);
        hb::exp::IdModel model;
        model.cnn = hb::io::load_model(cnn_file);
        json views;
        {
            std::ifstream in(views_file);
            in >> views;
        }
        for (const auto& v : views) {
            hb::exp::ViewSpec spec;
            spec.kind = view_kind_from_name(v.at("kind").get<std::string>());
            spec.name = v.at("name").get<std::string>();
            std::string bank_file = c.model_dir + "/bank_" + spec.name + ".hbsv";
            if (!fs::exists(bank_file)) {
                throw hb::ConfigError("missing " + bank_file +
                                      "; produce it with train-id first");
            }
            model.views.push_back(spec);
            model.banks.push_back(hb::io::load_bank(bank_file));
        }
        hb::exp::FileSource source;
        hb::exp::Preprocessor prep(source, run.exp.prep, run.cache);
        hb::exp::IdEvalResult ev = hb::exp::eval_id_model(model, ds, prep, split.test, run.exp);
        result.side = run.side;
        result.n_subjects = run.subjects;
        result.fusion = run.fusion;
        result.column = hb::exp::id_column_label(run.subjects, run.side);
        result.repeats.push_back({run.seeds[0], ev.top1});
        result.mean_top1 = ev.top1;
        result.mean_view_top1 = ev.view_top1;
        result.reports = hb::exp::reports_from_trials(ev.trials);
        seeds = {run.seeds[0]};
    } else {
        hb::data::Dataset ds = load_data(c);
        hb::exp::FileSource source;
        hb::exp::Preprocessor prep(source, c.exp.prep, c.cache);
        result = hb::exp::run_id_experiment(ds, prep, c.subjects, c.side, c.fusion, c.seeds,
                                            c.exp);
        seeds = c.seeds;
    }
    hb::exp::write_id_report(result, c.out);
    hb::exp::write_id_summary(result, seeds, config_hash, c.out + "/summary.json");
    if (c.svg) write_roc_svg(result.reports, c.out + "/roc.svg");
    std::cout << "eval-id: mean top-1 " << hb::exp::format_double(result.mean_top1) << ' '
              << result.column << " fusion=" << result.fusion << '\n';
    return 0;
}

// ----------------------------------------------------------------- errors

std::string error_kind(const hb::Error& e) {
    if (dynamic_cast<const hb::ShapeError*>(&e)) return "shape";
    if (dynamic_cast<const hb::ParamError*>(&e)) return "param";
    if (dynamic_cast<const hb::DataError*>(&e)) return "data";
    if (dynamic_cast<const hb::StateError*>(&e)) return "state";
    if (dynamic_cast<const hb::CapacityError*>(&e)) return "capacity";
    if (dynamic_cast<const hb::ConfigError*>(&e)) return "config";
    if (dynamic_cast<const hb::IoError*>(&e)) return "io";
    if (dynamic_cast<const hb::TrainError*>(&e)) return "train";
    return "error";
}

int fail(const std::string& kind, const std::string& message, const std::string& out_dir) {
    json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << j.dump() << '\n';
    if (!out_dir.empty() && fs::exists(out_dir)) {
        std::ofstream f(out_dir + "/error.json", std::ios::binary);
        if (f) f << j.dump(2) << '\n';
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("HANDBIO_THREADS")) {
        int n = std::atoi(threads);
        if (n > 0) omp_set_num_threads(n);
    }

    CLI::App app{"Hand-image biometrics: guided-filter preprocessing, two-stream gender CNN, "
                 "SVM ensemble identification"};
    app.require_subcommand(1);

    Staged s;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", s.config_path, "JSON config snapshot to start from");
        sub->add_option("--preset", s.preset, "model scale preset: paper|desk");
        sub->add_option("--side", s.side, "hand side: dorsal|palmar");
        sub->add_option("--seeds", s.seeds_str, "comma-separated seed list");
        sub->add_option("--out", s.out, "output directory")->required();
        sub->add_flag("--overwrite", s.overwrite, "replace existing outputs");
        return sub;
    };
    auto add_data = [&](CLI::App* sub) {
        sub->add_option("--data", s.data, "corpus directory (images + metadata.csv)");
        sub->add_option("--csv", s.csv, "metadata CSV path (default <data>/metadata.csv)");
        sub->add_option("--cache", s.cache, "plane cache directory");
        return sub;
    };

    CLI::App* synth = add_common(app.add_subcommand("synth", "generate a synthetic corpus"));
    synth->add_option("--n-subjects", s.n_subjects, "number of subjects");
    synth->add_option("--images-per-subject", s.images_per_subject, "images per subject per side");
    synth->add_option("--image-size", s.image_size, "square image size in pixels");
    synth->add_option("--gender-signal", s.gender_signal, "shape cue strength in [0,1]");
    synth->add_option("--subject-signal", s.subject_signal, "texture cue strength in [0,1]");
    synth->add_option("--accessory-fraction", s.accessory_fraction, "fraction flagged as accessories");
    synth->add_option("--sides", s.sides, "generated sides: dorsal|palmar|both");

    CLI::App* preprocess =
        add_data(add_common(app.add_subcommand("preprocess", "cache preprocessed planes")));

    CLI::App* train_gender = add_data(
        add_common(app.add_subcommand("train-gender", "train the two-stream gender model")));

    CLI::App* eval_gender = add_data(add_common(
        app.add_subcommand("eval-gender", "evaluate gender recognition (model or repeats)")));
    eval_gender->add_option("--model", s.model_dir, "train-gender output directory");
    eval_gender->add_option("--method", s.method, "cnn|svm_on_features");

    CLI::App* train_id = add_data(
        add_common(app.add_subcommand("train-id", "train identification SVM banks")));
    train_id->add_option("--subjects", s.subjects, "enrolled subject count");
    train_id->add_option("--fusion", s.fusion, "ensemble|single_svm");
    train_id->add_flag("--force", s.force, "allow nonstandard subject counts");

    CLI::App* eval_id = add_data(add_common(
        app.add_subcommand("eval-id", "evaluate identification (model or repeats)")));
    eval_id->add_option("--model", s.model_dir, "train-id output directory");
    eval_id->add_option("--subjects", s.subjects, "enrolled subject count");
    eval_id->add_option("--fusion", s.fusion, "ensemble|single_svm");
    eval_id->add_flag("--force", s.force, "allow nonstandard subject counts");
    eval_id->add_flag("--svg", s.svg, "also render the ROC curves as SVG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    std::string out_dir;
    try {
        RunConfig c = build_config(s, sub, command);
        out_dir = c.out;
        if (command == "synth") return cmd_synth(c);
        if (command == "preprocess") return cmd_preprocess(c);
        if (command == "train-gender") return cmd_train_gender(c);
        if (command == "eval-gender") return cmd_eval_gender(c);
        if (command == "train-id") return cmd_train_id(c);
        if (command == "eval-id") return cmd_eval_id(c);
        (void)preprocess;
        (void)train_gender;
        throw hb::ConfigError("unknown command " + command);
    } catch (const hb::Error& e) {
        return fail(error_kind(e), e.what(), out_dir);
    } catch (const std::exception& e) {
        return fail("error", e.what(), out_dir);
    }
}
