#pragma once

#include <utility>
#include <vector>

namespace handbio::eval {

// Fraction of positions where predictions agree with labels.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Rows = predicted class, columns = true class; `normalized` rows sum to 1
// (all-zero rows are left as zeros).
struct Confusion {
    int k = 0;
    std::vector<long> counts;       // k*k, row-major
    std::vector<double> normalized; // k*k, row-major
    long at(int predicted, int truth) const { return counts[static_cast<size_t>(predicted) * k + truth]; }
    double rate(int predicted, int truth) const {
        return normalized[static_cast<size_t>(predicted) * k + truth];
    }
};

Confusion confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

struct ThresholdSweep {
    std::vector<double> thresholds;

    // log(0.9) to log(1) in 0.01 steps: the 11 in-range points plus the
    // exact endpoint 0.
    static ThresholdSweep default_grid();
    static ThresholdSweep custom(std::vector<double> t);
};

struct ErrorReport {
    std::vector<double> thresholds, far, frr;
    double eer = 0.0;
    double eer_threshold = 0.0;
    bool eer_extrapolated = false;
    std::vector<double> roc_fpr, roc_tpr;
    double auc = 0.0;
};

// Acceptance rule: a trial passes at threshold t iff score > t. Genuine
// trials that were assigned to the wrong subject should be encoded by the
// caller as -infinity so they count as rejected at every threshold.
ErrorReport far_frr(const std::vector<double>& genuine_trials,
                    const std::vector<double>& impostor_trials, const ThresholdSweep& sweep);

// Equal error rate by linear interpolation at the FAR-FRR sign change; when
// the sweep never crosses, the closest grid endpoint is returned and flagged.
std::pair<double, double> eer(ErrorReport& report);

// ROC over thresholds at every distinct score plus endpoints (0,0), (1,1).
// The AUC is accumulated in exact integer pair-count units, so it equals the
// Mann-Whitney statistic (ties at half weight) bit-for-bit.
void roc_auc(const std::vector<double>& genuine_scores,
             const std::vector<double>& impostor_scores, ErrorReport& report);

}  // namespace handbio::eval
