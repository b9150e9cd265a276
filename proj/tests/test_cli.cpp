#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

// Cases run in declaration order and build on each other through ws().

namespace {

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const std::string base =
        (fs::temp_directory_path() / ("hb_cli_io_" + std::to_string(counter++))).string();
    const std::string cmd =
        std::string(HB_CLI_PATH) + " " + args + " >" + base + ".out 2>" + base + ".err";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(base + ".out");
    r.err = slurp(base + ".err");
    return r;
}

const std::string& ws() {
    static const std::string dir = [] {
        const std::string d = (fs::temp_directory_path() / "hb_cli_ws").string();
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string corpus() { return ws() + "/corpus"; }

// Small split sizes and epoch caps so every training in this file stays fast.
std::string small_config() {
    const std::string path = ws() + "/config.json";
    if (!fs::exists(path)) {
        json j;
        j["gender_split"] = {{"train_per_gender", 30}, {"test_per_gender", 10}};
        j["id_split"] = {{"train_per_subject", 4}, {"test_per_subject", 2}};
        j["hyper"] = {{"epochs_stage1", 3}, {"epochs_joint", 3}, {"batch", 8}};
        std::ofstream out(path);
        out << j.dump(2);
    }
    return path;
}

json error_json(const RunResult& r) {
    REQUIRE_FALSE(r.err.empty());
    return json::parse(r.err);
}

}  // namespace

TEST_CASE("synth writes a corpus and respects the overwrite guard") {
    RunResult r = run_cli("synth --out " + corpus() +
                          " --n-subjects 10 --images-per-subject 10 --image-size 32 --seeds 3");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("wrote 100 images") != std::string::npos);
    CHECK(fs::exists(corpus() + "/metadata.csv"));
    CHECK(fs::exists(corpus() + "/config.json"));
    CHECK(fs::exists(corpus() + "/hand_000000.png"));
    CHECK(fs::exists(corpus() + "/hand_000099.png"));
    CHECK_FALSE(fs::exists(corpus() + "/.lock"));  // released on success

    r = run_cli("synth --out " + corpus() + " --n-subjects 10 --seeds 3");
    CHECK(r.code == 1);
    CHECK(error_json(r)["error"]["kind"] == "config");
    CHECK(r.err.find("--overwrite") != std::string::npos);

    r = run_cli("synth --out " + corpus() +
                " --n-subjects 10 --images-per-subject 10 --image-size 32 --seeds 3 --overwrite");
    CHECK(r.code == 0);
}

TEST_CASE("lockfile blocks a second command in the same directory") {
    const std::string dir = ws() + "/locked";
    fs::create_directories(dir);
    std::ofstream(dir + "/.lock") << "";

    RunResult r = run_cli("synth --out " + dir + " --n-subjects 2 --images-per-subject 2");
    CHECK(r.code == 1);
    const json e = error_json(r);
    CHECK(e["error"]["kind"] == "config");
    CHECK(e["error"]["message"].get<std::string>().find("lockfile") != std::string::npos);
    CHECK(fs::exists(dir + "/.lock"));  // a failed takeover must not release it

    fs::remove(dir + "/.lock");
    r = run_cli("synth --out " + dir + " --n-subjects 2 --images-per-subject 2 --image-size 16");
    CHECK(r.code == 0);
    CHECK_FALSE(fs::exists(dir + "/.lock"));
}

TEST_CASE("argument validation") {
    SUBCASE("--out is required") {
        const RunResult r = run_cli("synth --n-subjects 2");
        CHECK(r.code != 0);
        CHECK(r.err.find("--out") != std::string::npos);
    }
    SUBCASE("bad seed list") {
        const RunResult r = run_cli("synth --out " + ws() + "/x1 --seeds 1,x");
        CHECK(r.code == 1);
        CHECK(error_json(r)["error"]["message"].get<std::string>().find("bad seed value") !=
              std::string::npos);
    }
    SUBCASE("unknown preset") {
        const RunResult r = run_cli("synth --out " + ws() + "/x2 --preset huge");
        CHECK(r.code == 1);
        CHECK(error_json(r)["error"]["message"].get<std::string>().find("unknown preset") !=
              std::string::npos);
    }
    SUBCASE("unknown sides") {
        const RunResult r = run_cli("synth --out " + ws() + "/x3 --sides sideways");
        CHECK(r.code == 1);
        CHECK(error_json(r)["error"]["kind"] == "config");
    }
    SUBCASE("eval-gender needs a corpus in repeats mode") {
        const RunResult r = run_cli("eval-gender --out " + ws() + "/x4");
        CHECK(r.code == 1);
        CHECK(error_json(r)["error"]["message"].get<std::string>().find("--data") !=
              std::string::npos);
    }
    SUBCASE("unknown gender method fails before any training") {
        const RunResult r = run_cli("eval-gender --data " + corpus() + " --method bogus --out " +
                                    ws() + "/x5 --config " + small_config());
        CHECK(r.code == 1);
        const json e = error_json(r);
        CHECK(e["error"]["kind"] == "param");
        CHECK(e["error"]["message"].get<std::string>().find("unknown gender method") !=
              std::string::npos);
    }
}

TEST_CASE("gender training and evaluation flow") {
    const std::string train_dir = ws() + "/gtrain";
    RunResult r = run_cli("train-gender --data " + corpus() + " --out " + train_dir +
                          " --config " + small_config() + " --seeds 5");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(train_dir + "/model.hbwt"));
    CHECK(fs::exists(train_dir + "/config.json"));

    const std::string log = slurp(train_dir + "/train_log.csv");
    CHECK(log.rfind("phase,epoch,split,loss,accuracy", 0) == 0);
    CHECK(log.find("stage1_s1") != std::string::npos);
    CHECK(log.find("joint") != std::string::npos);

    const std::string split = slurp(train_dir + "/split.csv");
    size_t train_rows = 0, test_rows = 0;
    {
        std::istringstream ss(split);
        std::string line;
        std::getline(ss, line);
        CHECK(line == "role,image_path");
        while (std::getline(ss, line)) {
            train_rows += line.rfind("train,", 0) == 0;
            test_rows += line.rfind("test,", 0) == 0;
        }
    }
    CHECK(train_rows == 60);
    CHECK(test_rows == 20);

    // Evaluate the saved model without retraining.
    const std::string eval_dir = ws() + "/geval";
    const RunResult e = run_cli("eval-gender --model " + train_dir + " --out " + eval_dir);
    REQUIRE(e.code == 0);
    CHECK(e.out.find("eval-gender: mean accuracy") != std::string::npos);
    CHECK(fs::exists(eval_dir + "/accuracy.csv"));
    CHECK(fs::exists(eval_dir + "/confusion.csv"));

    const json s = json::parse(slurp(eval_dir + "/summary.json"));
    CHECK(s["experiment"] == "gender");
    CHECK(s["method"] == "cnn");
    CHECK(s["seeds"] == json::array({5}));
    const double acc = s["mean_accuracy"].get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(s["per_repeat_accuracy"].size() == 1);

    const std::string acc_csv = slurp(eval_dir + "/accuracy.csv");
    CHECK(acc_csv.rfind("repeat,seed,accuracy", 0) == 0);
    CHECK(acc_csv.find("\nmean,,") != std::string::npos);

    // The svm_on_features method reuses the same saved model.
    const std::string eval_svm = ws() + "/geval_svm";
    const RunResult e2 = run_cli("eval-gender --model " + train_dir +
                                 " --method svm_on_features --out " + eval_svm);
    REQUIRE(e2.code == 0);
    const json s2 = json::parse(slurp(eval_svm + "/summary.json"));
    CHECK(s2["method"] == "svm_on_features");
}

TEST_CASE("eval-gender without a trained model names the producing command") {
    const std::string empty = ws() + "/not_a_model";
    fs::create_directories(empty);
    const std::string out = ws() + "/geval_missing";
    const RunResult r = run_cli("eval-gender --model " + empty + " --data " + corpus() +
                                " --out " + out);
    CHECK(r.code == 1);
    const json e = error_json(r);
    CHECK(e["error"]["kind"] == "config");
    CHECK(e["error"]["message"].get<std::string>().find("train-gender") != std::string::npos);
    // The failure is also recorded next to the (empty) outputs.
    const json file_err = json::parse(slurp(out + "/error.json"));
    CHECK(file_err["error"]["message"] == e["error"]["message"]);
    CHECK_FALSE(fs::exists(out + "/.lock"));
}

TEST_CASE("identification training and evaluation flow") {
    const std::string train_dir = ws() + "/idtrain";

    // Nonstandard subject counts need --force.
    RunResult r = run_cli("train-id --data " + corpus() + " --out " + ws() +
                          "/idtrain_noforce --config " + small_config() +
                          " --subjects 8 --seeds 7");
    CHECK(r.code == 1);
    {
        const json e = error_json(r);
        CHECK(e["error"]["kind"] == "param");
        CHECK(e["error"]["message"].get<std::string>().find("standard sizes") !=
              std::string::npos);
    }

    r = run_cli("train-id --data " + corpus() + " --out " + train_dir + " --config " +
                small_config() + " --subjects 8 --force --seeds 7");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(train_dir + "/cnn.hbwt"));
    CHECK(fs::exists(train_dir + "/train_log.csv"));

    const json views = json::parse(slurp(train_dir + "/views.json"));
    REQUIRE(views.size() == 4);
    std::set<std::string> kinds, names;
    for (const auto& v : views) {
        kinds.insert(v["kind"].get<std::string>());
        names.insert(v["name"].get<std::string>());
        CHECK(fs::exists(train_dir + "/bank_" + v["name"].get<std::string>() + ".hbsv"));
    }
    CHECK(kinds == std::set<std::string>{"s1_tap", "s2_tap", "fusion_tap", "lbp"});
    CHECK(names.count("fusion") == 1);
    CHECK(names.count("lbp") == 1);

    // eval-id reports per-view metrics and renders svg.
    const std::string eval_dir = ws() + "/ideval";
    const RunResult e = run_cli("eval-id --model " + train_dir + " --out " + eval_dir + " --svg");
    REQUIRE(e.code == 0);
    CHECK(e.out.find("eval-id: mean top-1") != std::string::npos);

    const json s = json::parse(slurp(eval_dir + "/summary.json"));
    CHECK(s["experiment"] == "identification");
    CHECK(s["n_subjects"] == 8);
    CHECK(s["column"] == "(8-D)");
    CHECK(s["fusion"] == "ensemble");
    const double top1 = s["mean_top1"].get<double>();
    CHECK(top1 >= 0.0);
    CHECK(top1 <= 1.0);
    REQUIRE(s["views"].contains("fused"));
    for (const std::string name : {"fused", "fusion", "lbp"}) {
        const json& v = s["views"][name];
        CHECK(v.contains("eer"));
        CHECK(v.contains("auc"));
        CHECK(v["auc"].get<double>() >= 0.0);
        CHECK(v["auc"].get<double>() <= 1.0);
    }
    CHECK(s["views"]["fused"].contains("top1"));

    const std::string acc_csv = slurp(eval_dir + "/accuracy.csv");
    CHECK(acc_csv.rfind("repeat,seed,(8-D)", 0) == 0);
    CHECK(slurp(eval_dir + "/far_frr.csv").rfind("view,threshold,far,frr", 0) == 0);
    CHECK(slurp(eval_dir + "/roc.csv").rfind("view,fpr,tpr", 0) == 0);
    const std::string svg = slurp(eval_dir + "/roc.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("polyline") != std::string::npos);

    // A model directory with a bank file missing is reported.
    const std::string broken = ws() + "/idtrain_broken";
    fs::remove_all(broken);
    fs::create_directories(broken);
    for (const auto& entry : fs::directory_iterator(train_dir)) {
        fs::copy(entry.path(), broken + "/" + entry.path().filename().string());
    }
    fs::remove(broken + "/bank_lbp.hbsv");
    const RunResult b = run_cli("eval-id --model " + broken + " --out " + ws() + "/ideval_broken");
    CHECK(b.code == 1);
    CHECK(error_json(b)["error"]["message"].get<std::string>().find("train-id") !=
          std::string::npos);
}

TEST_CASE("single_svm fusion trains one bank over concatenated taps") {
    const std::string train_dir = ws() + "/idtrain_single";
    RunResult r = run_cli("train-id --data " + corpus() + " --out " + train_dir + " --config " +
                          small_config() + " --subjects 8 --force --fusion single_svm --seeds 7");
    REQUIRE(r.code == 0);
    const json views = json::parse(slurp(train_dir + "/views.json"));
    REQUIRE(views.size() == 1);
    CHECK(views[0]["kind"] == "cnn_concat");
    CHECK(fs::exists(train_dir + "/bank_cnn_concat.hbsv"));

    const std::string eval_dir = ws() + "/ideval_single";
    const RunResult e = run_cli("eval-id --model " + train_dir + " --out " + eval_dir);
    REQUIRE(e.code == 0);
    const json s = json::parse(slurp(eval_dir + "/summary.json"));
    CHECK(s["fusion"] == "single_svm");
    CHECK(s["views"].contains("cnn_concat"));
    CHECK(s["views"].contains("fused"));
}

TEST_CASE("config snapshot reruns reproduce result files byte for byte") {
    const std::string out = ws() + "/ge_repeat";
    RunResult r = run_cli("eval-gender --data " + corpus() + " --out " + out + " --config " +
                          small_config() + " --seeds 11");
    REQUIRE(r.code == 0);

    const std::string acc1 = slurp(out + "/accuracy.csv");
    const std::string conf1 = slurp(out + "/confusion.csv");
    const std::string sum1 = slurp(out + "/summary.json");
    const std::string cfg1 = slurp(out + "/config.json");
    REQUIRE_FALSE(acc1.empty());

    // A second run into the same directory needs --overwrite.
    const RunResult guard = run_cli("eval-gender --config " + out + "/config.json --out " + out);
    CHECK(guard.code == 1);
    CHECK(error_json(guard)["error"]["message"].get<std::string>().find("--overwrite") !=
          std::string::npos);

    // Rerun from the snapshot alone.
    const RunResult e =
        run_cli("eval-gender --config " + out + "/config.json --out " + out + " --overwrite");
    REQUIRE(e.code == 0);
    CHECK(slurp(out + "/accuracy.csv") == acc1);
    CHECK(slurp(out + "/confusion.csv") == conf1);
    CHECK(slurp(out + "/summary.json") == sum1);
    CHECK(slurp(out + "/config.json") == cfg1);
}
