#include "handbio/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "handbio/error.hpp"

namespace handbio::nn {

TrainHyper TrainHyper::desk() {
    TrainHyper h;
    h.lr_pretrained = 0.005;
    h.lr_new = 0.015;
    h.batch = 24;
    return h;
}

void TrainHyper::validate() const {
    if (lr_pretrained <= 0.0 || lr_new <= 0.0) throw ParamError("learning rates must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ParamError("momentum must be in [0,1)");
    if (batch < 1) throw ParamError("batch must be >= 1");
    if (epochs_stage1 < 1 || epochs_joint < 1) throw ParamError("epoch caps must be >= 1");
    if (convergence_tol < 0.0) throw ParamError("convergence_tol must be >= 0");
}

namespace {

// Per-sample gradient sets, one vector<LayerGrads> per trained chain.
using GradSet = std::vector<std::vector<LayerGrads>>;

struct StepResult {
    double loss = 0.0;
    int correct = 0;
};

struct ChainVel {
    std::vector<Tensor> vw, vb;
};

void add_grads(std::vector<LayerGrads>& into, const std::vector<LayerGrads>& from) {
    if (into.size() != from.size()) throw ShapeError("gradient accumulation: size mismatch");
    for (size_t i = 0; i < into.size(); ++i) {
        for (size_t k = 0; k < from[i].gw.numel(); ++k) into[i].gw.data[k] += from[i].gw[k];
        for (size_t k = 0; k < from[i].gb.numel(); ++k) into[i].gb.data[k] += from[i].gb[k];
    }
}

void sgd_update(std::vector<Layer>& chain, const std::vector<LayerGrads>& grads, ChainVel& vel,
                const TrainHyper& h, double inv_batch) {
    if (vel.vw.size() != chain.size()) {
        vel.vw.assign(chain.size(), Tensor{});
        vel.vb.assign(chain.size(), Tensor{});
    }
    for (size_t i = 0; i < chain.size(); ++i) {
        Layer& l = chain[i];
        if (!l.has_params() || grads[i].gw.numel() == 0) continue;
        if (vel.vw[i].numel() == 0) {
            vel.vw[i] = Tensor(l.w.shape);
            vel.vb[i] = Tensor(l.b.shape);
        }
        const double lr = l.new_group ? h.lr_new : h.lr_pretrained;
        for (size_t k = 0; k < l.w.numel(); ++k) {
            double& v = vel.vw[i].data[k];
            v = h.momentum * v + grads[i].gw[k] * inv_batch;
            l.w.data[k] -= lr * v;
        }
        for (size_t k = 0; k < l.b.numel(); ++k) {
            double& v = vel.vb[i].data[k];
            v = h.momentum * v + grads[i].gb[k] * inv_batch;
            l.b.data[k] -= lr * v;
        }
    }
}

// Epoch/batch/convergence driver shared by both stages. `step` runs one
// sample (thread-safe: it only reads the chains) and fills its gradient set;
// samples are accumulated in batch order so results do not depend on the
// thread count.
template <typename StepFn>
void run_training(std::vector<std::vector<Layer>*> chains, size_t n, const TrainHyper& hyper,
                  int max_epochs, uint64_t phase_tag, const std::string& phase_name, StepFn step,
                  TrainLog& log) {
    std::vector<ChainVel> vel(chains.size());
    Rng shuffle_rng = Rng(hyper.seed).fork(0xd1ce ^ phase_tag);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    double prev_loss = 0.0;
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double total_loss = 0.0;
        long correct = 0;
        for (size_t start = 0; start < n; start += hyper.batch) {
            const size_t bend = std::min(n, start + hyper.batch);
            const long long bs = static_cast<long long>(bend - start);
            std::vector<GradSet> grads(bs);
            std::vector<StepResult> results(bs);
#pragma omp parallel for schedule(static)
            for (long long k = 0; k < bs; ++k) {
                const uint64_t tag = (static_cast<uint64_t>(epoch) << 40) ^
                                     (static_cast<uint64_t>(start) << 12) ^
                                     static_cast<uint64_t>(k);
                Rng rng = Rng(hyper.seed).fork(phase_tag).fork(tag);
                results[k] = step(order[start + k], rng, grads[k]);
            }
            GradSet total = std::move(grads[0]);
            for (long long k = 1; k < bs; ++k)
                for (size_t ci = 0; ci < total.size(); ++ci) add_grads(total[ci], grads[k][ci]);
            double batch_loss = 0.0;
            for (long long k = 0; k < bs; ++k) {
                batch_loss += results[k].loss;
                correct += results[k].correct;
            }
            if (!std::isfinite(batch_loss))
                throw TrainError(phase_name + ": loss diverged at epoch " +
                                 std::to_string(epoch + 1));
            total_loss += batch_loss;
            for (size_t ci = 0; ci < chains.size(); ++ci)
                sgd_update(*chains[ci], total[ci], vel[ci], hyper, 1.0 / static_cast<double>(bs));
        }
        const double mean_loss = total_loss / static_cast<double>(n);
        log.push_back({phase_name, epoch + 1, "train", mean_loss,
                       static_cast<double>(correct) / static_cast<double>(n)});
        if (epoch > 0) {
            const double rel =
                (prev_loss - mean_loss) / std::max(std::abs(prev_loss), 1e-300);
            if (rel < hyper.convergence_tol) break;
        }
        prev_loss = mean_loss;
    }
}

void check_data(const std::vector<GenderSample>& data, const std::string& what) {
    if (data.empty()) throw DataError(what + ": empty training set");
    for (const GenderSample& s : data) {
        if (s.label != 0 && s.label != 1) throw DataError(what + ": labels must be 0 or 1");
    }
}

}  // namespace

void train_stage1(std::vector<Layer>& stream, int which, const std::vector<GenderSample>& data,
                  const TrainHyper& hyper, TrainLog& log) {
    hyper.validate();
    if (which != 1 && which != 2) throw ParamError("train_stage1: which must be 1 or 2");
    check_data(data, "train_stage1");
    int tap = 0;
    for (const Layer& l : stream) {
        if (l.kind == LayerKind::Fc) tap = l.out_dim;
    }
    if (tap == 0) throw StateError("train_stage1: stream has no fc layer");

    std::vector<Layer> head;
    head.push_back(make_fc("stage1_head", tap, 2, true));
    head.push_back(make_softmax_xent());
    Rng init_rng = Rng(hyper.seed).fork(0x51a6e + which);
    init_params(head[0], init_rng);

    auto step = [&](size_t idx, Rng& rng, GradSet& g) -> StepResult {
        const GenderSample& s = data[idx];
        const Tensor& x = which == 1 ? s.low : s.high;
        std::vector<LayerCache> sc, hc;
        Tensor tap_out = chain_forward(stream, x, Mode::Train, &rng, sc);
        Tensor probs = chain_forward(head, tap_out, Mode::Train, &rng, hc);
        const double loss = xent_loss(hc.back(), s.label);
        g.resize(2);
        Tensor gtap = chain_backward(head, hc, Tensor{}, g[1]);
        chain_backward(stream, sc, gtap, g[0]);
        const int pred = probs[1] > probs[0] ? 1 : 0;
        return {loss, pred == s.label ? 1 : 0};
    };
    run_training({&stream, &head}, data.size(), hyper, hyper.epochs_stage1,
                 static_cast<uint64_t>(which), which == 1 ? "stage1_s1" : "stage1_s2", step, log);
}

void train_joint(TwoStreamModel& model, const std::vector<GenderSample>& data,
                 const TrainHyper& hyper, TrainLog& log) {
    hyper.validate();
    if (!model.initialized) throw StateError("train_joint: model not initialized");
    check_data(data, "train_joint");
    auto step = [&](size_t idx, Rng& rng, GradSet& g) -> StepResult {
        const GenderSample& s = data[idx];
        ModelCaches caches;
        Tensor probs = model_forward(model, s.low, s.high, Mode::Train, &rng, caches);
        ModelGrads mg;
        const double loss = model_backward(model, caches, s.label, mg);
        g.resize(3);
        g[0] = std::move(mg.s1);
        g[1] = std::move(mg.s2);
        g[2] = std::move(mg.fus);
        const int pred = probs[1] > probs[0] ? 1 : 0;
        return {loss, pred == s.label ? 1 : 0};
    };
    run_training({&model.stream1, &model.stream2, &model.fusion}, data.size(), hyper,
                 hyper.epochs_joint, 3, "joint", step, log);
}

void train_two_stage(TwoStreamModel& model, const std::vector<GenderSample>& data,
                     const TrainHyper& hyper, TrainLog& log) {
    train_stage1(model.stream1, 1, data, hyper, log);
    train_stage1(model.stream2, 2, data, hyper, log);
    train_joint(model, data, hyper, log);
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write training log: " + path);
    out << "phase,epoch,split,loss,accuracy\n";
    char buf[64];
    for (const TrainLogEntry& e : log) {
        out << e.phase << ',' << e.epoch << ',' << e.split << ',';
        std::snprintf(buf, sizeof buf, "%.9g", e.loss);
        out << buf << ',';
        std::snprintf(buf, sizeof buf, "%.9g", e.accuracy);
        out << buf << '\n';
    }
    if (!out.flush()) throw IoError("failed writing training log: " + path);
}

}  // namespace handbio::nn
