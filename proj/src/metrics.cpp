#include "handbio/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

#include "handbio/error.hpp"

namespace handbio::eval {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw ShapeError("accuracy: prediction/label count mismatch");
    if (predictions.empty()) throw DataError("accuracy: empty input");
    size_t correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

Confusion confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw ShapeError("confusion: prediction/label count mismatch");
    if (predictions.empty()) throw DataError("confusion: empty input");
    int k = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] < 0 || labels[i] < 0)
            throw ParamError("confusion: classes must be non-negative");
        k = std::max({k, predictions[i] + 1, labels[i] + 1});
    }
    Confusion c;
    c.k = k;
    c.counts.assign(static_cast<size_t>(k) * k, 0);
    for (size_t i = 0; i < predictions.size(); ++i)
        ++c.counts[static_cast<size_t>(predictions[i]) * k + labels[i]];
    c.normalized.assign(c.counts.size(), 0.0);
    for (int p = 0; p < k; ++p) {
        long row = 0;
        for (int t = 0; t < k; ++t) row += c.counts[static_cast<size_t>(p) * k + t];
        if (row == 0) continue;
        for (int t = 0; t < k; ++t)
            c.normalized[static_cast<size_t>(p) * k + t] =
                static_cast<double>(c.counts[static_cast<size_t>(p) * k + t]) / row;
    }
    return c;
}

ThresholdSweep ThresholdSweep::default_grid() {
    ThresholdSweep s;
    const double start = std::log(0.9);
    for (int k = 0; k <= 10; ++k) s.thresholds.push_back(start + 0.01 * k);
    s.thresholds.push_back(0.0);
    return s;
}

ThresholdSweep ThresholdSweep::custom(std::vector<double> t) {
    if (t.empty()) throw ParamError("threshold sweep: empty grid");
    for (size_t i = 1; i < t.size(); ++i) {
        if (!(t[i] > t[i - 1])) throw ParamError("threshold sweep: grid must be strictly increasing");
    }
    ThresholdSweep s;
    s.thresholds = std::move(t);
    return s;
}

ErrorReport far_frr(const std::vector<double>& genuine_trials,
                    const std::vector<double>& impostor_trials, const ThresholdSweep& sweep) {
    if (genuine_trials.empty()) throw DataError("far_frr: no genuine trials");
    if (impostor_trials.empty()) throw DataError("far_frr: no impostor trials");
    for (double v : genuine_trials) {
        if (std::isnan(v)) throw DataError("far_frr: NaN genuine score");
    }
    for (double v : impostor_trials) {
        if (std::isnan(v)) throw DataError("far_frr: NaN impostor score");
    }
    ErrorReport r;
    r.thresholds = sweep.thresholds;
    r.far.reserve(r.thresholds.size());
    r.frr.reserve(r.thresholds.size());
    for (double t : r.thresholds) {
        size_t fa = 0, fr = 0;
        for (double v : impostor_trials) {
            if (v > t) ++fa;
        }
        for (double v : genuine_trials) {
            if (!(v > t)) ++fr;
        }
        r.far.push_back(static_cast<double>(fa) / static_cast<double>(impostor_trials.size()));
        r.frr.push_back(static_cast<double>(fr) / static_cast<double>(genuine_trials.size()));
    }
    return r;
}

std::pair<double, double> eer(ErrorReport& report) {
    const size_t n = report.thresholds.size();
    if (n == 0 || report.far.size() != n || report.frr.size() != n)
        throw StateError("eer: report has no FAR/FRR sweep");
    for (size_t i = 0; i + 1 < n; ++i) {
        const double d0 = report.far[i] - report.frr[i];
        const double d1 = report.far[i + 1] - report.frr[i + 1];
        if (d0 == 0.0) {
            report.eer = report.far[i];
            report.eer_threshold = report.thresholds[i];
            report.eer_extrapolated = false;
            return {report.eer, report.eer_threshold};
        }
        if ((d0 > 0.0 && d1 <= 0.0) || (d0 < 0.0 && d1 >= 0.0)) {
            const double alpha = d0 / (d0 - d1);
            const double far_x = report.far[i] + alpha * (report.far[i + 1] - report.far[i]);
            const double frr_x = report.frr[i] + alpha * (report.frr[i + 1] - report.frr[i]);
            report.eer = 0.5 * (far_x + frr_x);
            report.eer_threshold =
                report.thresholds[i] + alpha * (report.thresholds[i + 1] - report.thresholds[i]);
            report.eer_extrapolated = false;
            return {report.eer, report.eer_threshold};
        }
    }
    const double dback = report.far.back() - report.frr.back();
    if (dback == 0.0) {
        report.eer = report.far.back();
        report.eer_threshold = report.thresholds.back();
        report.eer_extrapolated = false;
        return {report.eer, report.eer_threshold};
    }
    const size_t pick =
        std::abs(report.far.front() - report.frr.front()) <= std::abs(dback) ? 0 : n - 1;
    report.eer = 0.5 * (report.far[pick] + report.frr[pick]);
    report.eer_threshold = report.thresholds[pick];
    report.eer_extrapolated = true;
    return {report.eer, report.eer_threshold};
}

void roc_auc(const std::vector<double>& genuine_scores,
             const std::vector<double>& impostor_scores, ErrorReport& report) {
    if (genuine_scores.empty()) throw DataError("roc_auc: no genuine scores");
    if (impostor_scores.empty()) throw DataError("roc_auc: no impostor scores");
    for (double v : genuine_scores) {
        if (!std::isfinite(v)) throw DataError("roc_auc: non-finite genuine score");
    }
    for (double v : impostor_scores) {
        if (!std::isfinite(v)) throw DataError("roc_auc: non-finite impostor score");
    }
    // genuine/impostor counts per distinct score, walked from high to low
    std::map<double, std::pair<int64_t, int64_t>, std::greater<double>> by_score;
    for (double v : genuine_scores) ++by_score[v].first;
    for (double v : impostor_scores) ++by_score[v].second;

    const int64_t ng = static_cast<int64_t>(genuine_scores.size());
    const int64_t ni = static_cast<int64_t>(impostor_scores.size());
    int64_t cg = 0, ci = 0;
    int64_t area_units = 0;  // in units of 1/(2*ng*ni): 2 per won pair, 1 per tie
    report.roc_fpr.assign(1, 0.0);
    report.roc_tpr.assign(1, 0.0);
    for (const auto& [score, counts] : by_score) {
        const auto [g, i] = counts;
        area_units += i * (2 * cg + g);
        cg += g;
        ci += i;
        report.roc_fpr.push_back(static_cast<double>(ci) / static_cast<double>(ni));
        report.roc_tpr.push_back(static_cast<double>(cg) / static_cast<double>(ng));
    }
    report.auc = static_cast<double>(area_units) / (2.0 * static_cast<double>(ng) *
                                                    static_cast<double>(ni));
}

}  // namespace handbio::eval
