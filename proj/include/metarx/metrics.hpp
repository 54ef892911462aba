#pragma once

#include <vector>

namespace metarx {

// Per-bin calibration data over the left-open bins ((m-1)/M, m/M] plus the
// bin-weighted accuracy/confidence gap (ECE).
struct CalibrationReport {
    int bins = 10;                  // M
    std::vector<long> bin_counts;   // |B_m|
    std::vector<double> bin_acc;    // acc(B_m); 0 for empty bins
    std::vector<double> bin_conf;   // conf(B_m); 0 for empty bins
    double ece = 0.0;
    long n = 0;
};

double ser(const std::vector<int>& preds, const std::vector<int>& truth);

double mse(const std::vector<double>& pred_means, const std::vector<double>& truth);

// Confidence exactly 0 is assigned to the first bin.
CalibrationReport calibration_report(const std::vector<double>& confidences,
                                     const std::vector<bool>& correct, int bins);

}  // namespace metarx
