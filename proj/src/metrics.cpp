#include "metarx/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace metarx {

double ser(const std::vector<int>& preds, const std::vector<int>& truth) {
    if (preds.size() != truth.size() || preds.empty())
        throw std::invalid_argument("ser: length mismatch or empty input");
    long errors = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) errors += preds[i] != truth[i];
    return static_cast<double>(errors) / static_cast<double>(preds.size());
}

double mse(const std::vector<double>& pred_means, const std::vector<double>& truth) {
    if (pred_means.size() != truth.size() || pred_means.empty())
        throw std::invalid_argument("mse: length mismatch or empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred_means.size(); ++i) {
        const double d = pred_means[i] - truth[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred_means.size());
}

CalibrationReport calibration_report(const std::vector<double>& confidences,
                                     const std::vector<bool>& correct, int bins) {
    if (bins < 1) throw std::invalid_argument("calibration_report: M must be >= 1");
    if (confidences.size() != correct.size())
        throw std::invalid_argument("calibration_report: length mismatch");
    CalibrationReport rep;
    rep.bins = bins;
    rep.n = static_cast<long>(confidences.size());
    rep.bin_counts.assign(static_cast<std::size_t>(bins), 0);
    rep.bin_acc.assign(static_cast<std::size_t>(bins), 0.0);
    rep.bin_conf.assign(static_cast<std::size_t>(bins), 0.0);
    std::vector<long> hits(static_cast<std::size_t>(bins), 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double p = confidences[i];
        if (p < 0.0 || p > 1.0)
            throw std::invalid_argument("calibration_report: confidence outside [0,1]");
        // bin m covers ((m-1)/M, m/M]; confidence 0 joins bin 1
        int m = static_cast<int>(std::ceil(p * bins)) - 1;
        if (m < 0) m = 0;
        if (m >= bins) m = bins - 1;
        rep.bin_counts[static_cast<std::size_t>(m)] += 1;
        hits[static_cast<std::size_t>(m)] += correct[i] ? 1 : 0;
        rep.bin_conf[static_cast<std::size_t>(m)] += p;
    }
    double ece = 0.0;
    for (int m = 0; m < bins; ++m) {
        const long c = rep.bin_counts[static_cast<std::size_t>(m)];
        if (c == 0) continue;
        rep.bin_acc[static_cast<std::size_t>(m)] =
            static_cast<double>(hits[static_cast<std::size_t>(m)]) / static_cast<double>(c);
        rep.bin_conf[static_cast<std::size_t>(m)] /= static_cast<double>(c);
        ece += static_cast<double>(c) *
               std::abs(rep.bin_acc[static_cast<std::size_t>(m)] -
                        rep.bin_conf[static_cast<std::size_t>(m)]);
    }
    rep.ece = rep.n > 0 ? ece / static_cast<double>(rep.n) : 0.0;
    return rep;
}

}  // namespace metarx
