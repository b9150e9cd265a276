#pragma once

#include <string>
#include <utility>
#include <vector>

namespace handbio::svm {

struct Kernel {
    enum class Kind { Linear, Polynomial };
    Kind kind = Kind::Linear;
    int degree = 2;
    double scale = 1.0;
    double offset = 1.0;

    static Kernel linear() { return Kernel{}; }
    static Kernel poly2() { return Kernel{Kind::Polynomial, 2, 1.0, 1.0}; }
    void validate() const;
};

double kernel_eval(const Kernel& k, const double* a, const double* b, int dim);

// Row-major feature matrix.
struct DataMatrix {
    int rows = 0, cols = 0;
    std::vector<double> data;

    DataMatrix() = default;
    DataMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
    double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
};

struct SvmModel {
    Kernel kernel;
    double c_box = 1.0;
    DataMatrix support_vectors;
    std::vector<double> coeffs;  // alpha_i * y_i per support vector
    double bias = 0.0;
    double platt_a = 0.0, platt_b = 0.0;
    bool platt_fitted = false;
};

// Per-dimension standardization (zero mean, unit variance on the fit split).
struct Scaler {
    std::vector<double> mean, scale;

    static Scaler fit(const DataMatrix& x);
    std::vector<double> transform(const double* x, int dim) const;
    DataMatrix transform(const DataMatrix& x) const;
};

// Dual coordinate ascent over single data points with clipping to
// [0, c_box]; stops when the largest KKT violation falls below tol.
SvmModel train_binary(const DataMatrix& x, const std::vector<int>& y, const Kernel& kernel,
                      double c_box, double tol = 1e-3, int max_passes = 10000);

double decision_value(const SvmModel& model, const double* x, int dim);
double decision_value(const SvmModel& model, const std::vector<double>& x);

// Sigmoid parameters (A, B) for p(y=+1|f) = 1/(1+exp(A f + B)), fitted by
// regularized maximum likelihood with Newton steps.
std::pair<double, double> platt_fit_values(const std::vector<double>& f,
                                           const std::vector<int>& y);
void platt_fit(SvmModel& model, const DataMatrix& x_holdout, const std::vector<int>& y_holdout);

double log_posterior(const SvmModel& model, const double* x, int dim);
double log_posterior(const SvmModel& model, const std::vector<double>& x);

struct OvaOptions {
    Kernel kernel = Kernel::poly2();
    double c_box = 1.0;
    double tol = 1e-3;
    int max_passes = 10000;
    int calib_folds = 3;
};

// One-against-all bank over subject labels; every binary model is
// Platt-calibrated by cross-fitting on the training split.
struct SvmBank {
    Kernel kernel;
    double c_box = 1.0;
    Scaler scaler;
    std::vector<int> classes;     // ascending subject ids
    std::vector<SvmModel> models; // aligned with classes
};

SvmBank train_one_vs_all(const DataMatrix& x, const std::vector<int>& labels,
                         const OvaOptions& opt);

// Per-class log-posteriors for a raw (unscaled) feature vector.
std::vector<double> bank_log_posteriors(const SvmBank& bank, const std::vector<double>& x);

// Calibrated binary classifier (gender path); y takes values 0/1.
struct CalibratedSvm {
    Scaler scaler;
    SvmModel model;
};

CalibratedSvm train_calibrated_binary(const DataMatrix& x, const std::vector<int>& y01,
                                      const Kernel& kernel, double c_box, double tol = 1e-3,
                                      int max_passes = 10000, int calib_folds = 3);

// Predicted class by decision sign: 1 when f(x) > 0, else 0.
int predict_calibrated(const CalibratedSvm& svm, const std::vector<double>& x);

struct FusedScores {
    std::vector<double> scores;
    int argmax = -1;  // ties resolved toward the lowest class index
};

FusedScores sum_rule_fuse(const std::vector<std::vector<double>>& per_view_scores);

struct AcceptDecision {
    bool accepted = false;
    int cls = -1;  // argmax index, valid also for rejections
};

// Accepts the argmax class iff its score strictly exceeds t.
AcceptDecision threshold_accept(const std::vector<double>& scores, double t);

}  // namespace handbio::svm
