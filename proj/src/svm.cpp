#include "handbio/svm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "handbio/error.hpp"

namespace handbio::svm {

void Kernel::validate() const {
    if (kind == Kind::Polynomial && degree < 1)
        throw ParamError("polynomial kernel degree must be >= 1");
    if (!std::isfinite(scale) || !std::isfinite(offset))
        throw ParamError("kernel scale/offset must be finite");
}

double kernel_eval(const Kernel& k, const double* a, const double* b, int dim) {
    double dot = 0.0;
    for (int i = 0; i < dim; ++i) dot += a[i] * b[i];
    if (k.kind == Kernel::Kind::Linear) return dot;
    const double base = k.scale * dot + k.offset;
    double r = 1.0;
    for (int i = 0; i < k.degree; ++i) r *= base;
    return r;
}

Scaler Scaler::fit(const DataMatrix& x) {
    if (x.rows < 1) throw DataError("scaler: empty matrix");
    Scaler s;
    s.mean.assign(x.cols, 0.0);
    s.scale.assign(x.cols, 1.0);
    for (int i = 0; i < x.rows; ++i) {
        const double* r = x.row(i);
        for (int j = 0; j < x.cols; ++j) s.mean[j] += r[j];
    }
    for (double& m : s.mean) m /= x.rows;
    std::vector<double> var(x.cols, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        const double* r = x.row(i);
        for (int j = 0; j < x.cols; ++j) {
            const double d = r[j] - s.mean[j];
            var[j] += d * d;
        }
    }
    for (int j = 0; j < x.cols; ++j) {
        const double sd = std::sqrt(var[j] / x.rows);
        s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

std::vector<double> Scaler::transform(const double* x, int dim) const {
    if (dim != static_cast<int>(mean.size()))
        throw ShapeError("scaler: expected " + std::to_string(mean.size()) + " features, got " +
                         std::to_string(dim));
    std::vector<double> out(dim);
    for (int j = 0; j < dim; ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
}

DataMatrix Scaler::transform(const DataMatrix& x) const {
    DataMatrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        auto r = transform(x.row(i), x.cols);
        std::copy(r.begin(), r.end(), out.row(i));
    }
    return out;
}

namespace {

void check_training_input(const DataMatrix& x, const std::vector<int>& y) {
    if (x.rows < 2) throw DataError("svm: need at least 2 training points");
    if (y.size() != static_cast<size_t>(x.rows))
        throw ShapeError("svm: label count does not match rows");
    bool pos = false, neg = false;
    for (int v : y) {
        if (v == 1) pos = true;
        else if (v == -1) neg = true;
        else throw ParamError("svm: labels must be +1 or -1");
    }
    if (!pos || !neg) throw DataError("svm: training labels are single-class");
    for (double v : x.data) {
        if (!std::isfinite(v)) throw DataError("svm: non-finite feature value");
    }
}

}  // namespace

SvmModel train_binary(const DataMatrix& x, const std::vector<int>& y, const Kernel& kernel,
                      double c_box, double tol, int max_passes) {
    kernel.validate();
    check_training_input(x, y);
    if (c_box <= 0.0) throw ParamError("svm: c_box must be > 0");
    if (tol <= 0.0) throw ParamError("svm: tol must be > 0");
    const int n = x.rows, d = x.cols;

    const bool cache = static_cast<size_t>(n) * n <= (size_t{1} << 24);
    std::vector<double> kmat;
    if (cache) {
        kmat.resize(static_cast<size_t>(n) * n);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                kmat[static_cast<size_t>(i) * n + j] = kernel_eval(kernel, x.row(i), x.row(j), d);
    }
    std::vector<double> kdiag(n);
    for (int i = 0; i < n; ++i)
        kdiag[i] = cache ? kmat[static_cast<size_t>(i) * n + i]
                         : kernel_eval(kernel, x.row(i), x.row(i), d);

    std::vector<double> alpha(n, 0.0), f(n, 0.0), krow;
    for (int pass = 0; pass < max_passes; ++pass) {
        for (int i = 0; i < n; ++i) {
            if (kdiag[i] < 1e-12) continue;
            const double delta = (1.0 - y[i] * f[i]) / kdiag[i];
            const double anew = std::clamp(alpha[i] + delta, 0.0, c_box);
            const double change = anew - alpha[i];
            if (change == 0.0) continue;
            alpha[i] = anew;
            const double* row;
            if (cache) {
                row = kmat.data() + static_cast<size_t>(i) * n;
            } else {
                krow.resize(n);
                for (int j = 0; j < n; ++j) krow[j] = kernel_eval(kernel, x.row(i), x.row(j), d);
                row = krow.data();
            }
            const double cy = change * y[i];
            for (int j = 0; j < n; ++j) f[j] += cy * row[j];
        }
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            const double margin = y[i] * f[i];
            double viol;
            if (alpha[i] <= 0.0) viol = std::max(0.0, 1.0 - margin);
            else if (alpha[i] >= c_box) viol = std::max(0.0, margin - 1.0);
            else viol = std::abs(1.0 - margin);
            worst = std::max(worst, viol);
        }
        if (worst < tol) break;
    }

    SvmModel m;
    m.kernel = kernel;
    m.c_box = c_box;
    std::vector<int> sv_idx;
    for (int i = 0; i < n; ++i) {
        if (alpha[i] > 1e-12) sv_idx.push_back(i);
    }
    m.support_vectors = DataMatrix(static_cast<int>(sv_idx.size()), d);
    m.coeffs.resize(sv_idx.size());
    for (size_t k = 0; k < sv_idx.size(); ++k) {
        const int i = sv_idx[k];
        std::copy(x.row(i), x.row(i) + d, m.support_vectors.row(static_cast<int>(k)));
        m.coeffs[k] = alpha[i] * y[i];
    }
    // Bias from on-margin (free) support vectors; with the bias-free dual
    // they satisfy y_i f_i = 1, so this lands near zero. If every alpha sits
    // on a bound, fall back to averaging over all support vectors.
    double bsum = 0.0;
    int bcount = 0;
    for (int i : sv_idx) {
        if (alpha[i] < c_box * (1.0 - 1e-8)) {
            bsum += y[i] - f[i];
            ++bcount;
        }
    }
    if (bcount == 0) {
        for (int i : sv_idx) {
            bsum += y[i] - f[i];
            ++bcount;
        }
    }
    m.bias = bcount > 0 ? bsum / bcount : 0.0;
    return m;
}

double decision_value(const SvmModel& model, const double* x, int dim) {
    if (dim != model.support_vectors.cols)
        throw ShapeError("svm: expected " + std::to_string(model.support_vectors.cols) +
                         " features, got " + std::to_string(dim));
    double acc = model.bias;
    for (int k = 0; k < model.support_vectors.rows; ++k)
        acc += model.coeffs[k] * kernel_eval(model.kernel, model.support_vectors.row(k), x, dim);
    return acc;
}

double decision_value(const SvmModel& model, const std::vector<double>& x) {
    return decision_value(model, x.data(), static_cast<int>(x.size()));
}

std::pair<double, double> platt_fit_values(const std::vector<double>& f,
                                           const std::vector<int>& y) {
    const size_t n = f.size();
    if (n == 0 || y.size() != n) throw ShapeError("platt: value/label count mismatch");
    double prior1 = 0, prior0 = 0;
    for (int v : y) {
        if (v == 1) ++prior1;
        else if (v == -1) ++prior0;
        else throw ParamError("platt: labels must be +1 or -1");
    }
    if (prior1 == 0 || prior0 == 0) throw DataError("platt: holdout labels are single-class");

    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);
    std::vector<double> t(n);
    for (size_t i = 0; i < n; ++i) t[i] = y[i] == 1 ? hi : lo;

    auto objective = [&](double a, double b) {
        double val = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double z = a * f[i] + b;
            if (z >= 0) val += t[i] * z + std::log1p(std::exp(-z));
            else val += (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return val;
    };

    double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double fval = objective(a, b);
    const double sigma = 1e-12;
    for (int it = 0; it < 100; ++it) {
        double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double z = a * f[i] + b;
            double p, q;
            if (z >= 0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += f[i] * f[i] * d2;
            h22 += d2;
            h21 += f[i] * d2;
            const double d1 = t[i] - p;
            g1 += f[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        bool moved = false;
        while (step >= 1e-10) {
            const double na = a + step * da, nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if (!moved) break;
    }
    return {a, b};
}

void platt_fit(SvmModel& model, const DataMatrix& x_holdout, const std::vector<int>& y_holdout) {
    if (x_holdout.rows < 1 || y_holdout.size() != static_cast<size_t>(x_holdout.rows))
        throw ShapeError("platt: holdout size mismatch");
    std::vector<double> f(x_holdout.rows);
    for (int i = 0; i < x_holdout.rows; ++i)
        f[i] = decision_value(model, x_holdout.row(i), x_holdout.cols);
    auto [a, b] = platt_fit_values(f, y_holdout);
    model.platt_a = a;
    model.platt_b = b;
    model.platt_fitted = true;
}

namespace {

// log(1/(1+exp(z))), stable for both signs.
double log_sigmoid_of_neg(double z) {
    if (z > 0) return -z - std::log1p(std::exp(-z));
    return -std::log1p(std::exp(z));
}

}  // namespace

double log_posterior(const SvmModel& model, const double* x, int dim) {
    if (!model.platt_fitted) throw StateError("svm: log_posterior before Platt calibration");
    const double z = model.platt_a * decision_value(model, x, dim) + model.platt_b;
    return log_sigmoid_of_neg(z);
}

double log_posterior(const SvmModel& model, const std::vector<double>& x) {
    return log_posterior(model, x.data(), static_cast<int>(x.size()));
}

namespace {

// Deterministic stratified fold split, then per-fold holdout decision values
// pooled into one Platt fit.
std::pair<double, double> cross_fit_platt(const DataMatrix& xs, const std::vector<int>& y,
                                          const Kernel& kernel, double c_box, double tol,
                                          int max_passes, int folds) {
    const int n = xs.rows;
    std::vector<int> fold(n);
    int cp = 0, cn = 0;
    for (int i = 0; i < n; ++i) fold[i] = (y[i] == 1 ? cp++ : cn++) % folds;
    std::vector<double> fvals(n, 0.0);
    for (int k = 0; k < folds; ++k) {
        std::vector<int> hold;
        std::vector<int> train;
        for (int i = 0; i < n; ++i) (fold[i] == k ? hold : train).push_back(i);
        if (hold.empty()) continue;
        DataMatrix xt(static_cast<int>(train.size()), xs.cols);
        std::vector<int> yt(train.size());
        for (size_t r = 0; r < train.size(); ++r) {
            std::copy(xs.row(train[r]), xs.row(train[r]) + xs.cols,
                      xt.row(static_cast<int>(r)));
            yt[r] = y[train[r]];
        }
        SvmModel m = train_binary(xt, yt, kernel, c_box, tol, max_passes);
        for (int i : hold) fvals[i] = decision_value(m, xs.row(i), xs.cols);
    }
    return platt_fit_values(fvals, y);
}

}  // namespace

SvmBank train_one_vs_all(const DataMatrix& x, const std::vector<int>& labels,
                         const OvaOptions& opt) {
    if (labels.size() != static_cast<size_t>(x.rows))
        throw ShapeError("train_one_vs_all: label count does not match rows");
    std::set<int> uniq(labels.begin(), labels.end());
    if (uniq.size() < 2) throw DataError("train_one_vs_all: need at least 2 subjects");
    SvmBank bank;
    bank.kernel = opt.kernel;
    bank.c_box = opt.c_box;
    bank.classes.assign(uniq.begin(), uniq.end());
    for (int c : bank.classes) {
        const long count = std::count(labels.begin(), labels.end(), c);
        if (count < 2)
            throw DataError("train_one_vs_all: subject " + std::to_string(c) +
                            " has only " + std::to_string(count) + " example");
    }
    bank.scaler = Scaler::fit(x);
    DataMatrix xs = bank.scaler.transform(x);
    const int nc = static_cast<int>(bank.classes.size());
    bank.models.resize(nc);
    std::string error;
#pragma omp parallel for schedule(dynamic)
    for (int ci = 0; ci < nc; ++ci) {
        try {
            std::vector<int> y(labels.size());
            for (size_t i = 0; i < labels.size(); ++i)
                y[i] = labels[i] == bank.classes[ci] ? 1 : -1;
            auto [a, b] = cross_fit_platt(xs, y, opt.kernel, opt.c_box, opt.tol, opt.max_passes,
                                          opt.calib_folds);
            SvmModel m = train_binary(xs, y, opt.kernel, opt.c_box, opt.tol, opt.max_passes);
            m.platt_a = a;
            m.platt_b = b;
            m.platt_fitted = true;
            bank.models[ci] = std::move(m);
        } catch (const std::exception& e) {
#pragma omp critical
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw DataError(error);
    return bank;
}

std::vector<double> bank_log_posteriors(const SvmBank& bank, const std::vector<double>& x) {
    if (bank.models.empty()) throw StateError("svm bank: empty model bank");
    auto xs = bank.scaler.transform(x.data(), static_cast<int>(x.size()));
    std::vector<double> scores(bank.models.size());
    for (size_t i = 0; i < bank.models.size(); ++i) scores[i] = log_posterior(bank.models[i], xs);
    return scores;
}

CalibratedSvm train_calibrated_binary(const DataMatrix& x, const std::vector<int>& y01,
                                      const Kernel& kernel, double c_box, double tol,
                                      int max_passes, int calib_folds) {
    if (y01.size() != static_cast<size_t>(x.rows))
        throw ShapeError("train_calibrated_binary: label count does not match rows");
    std::vector<int> y(y01.size());
    for (size_t i = 0; i < y01.size(); ++i) {
        if (y01[i] != 0 && y01[i] != 1)
            throw ParamError("train_calibrated_binary: labels must be 0 or 1");
        y[i] = y01[i] == 1 ? 1 : -1;
    }
    CalibratedSvm out;
    out.scaler = Scaler::fit(x);
    DataMatrix xs = out.scaler.transform(x);
    auto [a, b] = cross_fit_platt(xs, y, kernel, c_box, tol, max_passes, calib_folds);
    out.model = train_binary(xs, y, kernel, c_box, tol, max_passes);
    out.model.platt_a = a;
    out.model.platt_b = b;
    out.model.platt_fitted = true;
    return out;
}

int predict_calibrated(const CalibratedSvm& svm, const std::vector<double>& x) {
    auto xs = svm.scaler.transform(x.data(), static_cast<int>(x.size()));
    return decision_value(svm.model, xs) > 0.0 ? 1 : 0;
}

FusedScores sum_rule_fuse(const std::vector<std::vector<double>>& per_view_scores) {
    if (per_view_scores.empty()) throw ConfigError("sum_rule_fuse: no views");
    const size_t nc = per_view_scores[0].size();
    if (nc == 0) throw ConfigError("sum_rule_fuse: empty score vectors");
    for (const auto& v : per_view_scores) {
        if (v.size() != nc) throw ConfigError("sum_rule_fuse: views disagree on class count");
    }
    FusedScores out;
    out.scores.assign(nc, 0.0);
    for (const auto& v : per_view_scores)
        for (size_t c = 0; c < nc; ++c) out.scores[c] += v[c];
    out.argmax = 0;
    for (size_t c = 1; c < nc; ++c) {
        if (out.scores[c] > out.scores[out.argmax]) out.argmax = static_cast<int>(c);
    }
    return out;
}

AcceptDecision threshold_accept(const std::vector<double>& scores, double t) {
    if (scores.empty()) throw ConfigError("threshold_accept: empty score vector");
    AcceptDecision d;
    d.cls = 0;
    for (size_t c = 1; c < scores.size(); ++c) {
        if (scores[c] > scores[d.cls]) d.cls = static_cast<int>(c);
    }
    d.accepted = scores[d.cls] > t;
    return d;
}

}  // namespace handbio::svm
