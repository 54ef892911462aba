#pragma once

#include "metarx/adaptation.hpp"

namespace metarx {

// Single-frame learning with no meta-knowledge: GD from a random
// initialization on the frame's own pilots.
struct ConventionalOptions {
    double eta = 0.1;
    int steps = 200;        // I_star
    double init_std = 0.1;
    std::uint64_t seed = 0;
};

ModelParams conventional_learn(const std::vector<Sample>& pilots, const TaskModel& task,
                               const ConventionalOptions& opt);

// Scalar LMMSE channel estimate from pilots followed by ML demodulation over
// the nominal constellation (I/Q imbalance is not modeled).
struct LmmseDecision {
    int pred_idx;
    double confidence;  // normalized likelihood of the argmax point
};

std::vector<LmmseDecision> lmmse_ml_demod(const std::vector<Sample>& pilots,
                                          const std::vector<Eigen::Vector2d>& payload_y,
                                          double snr, const Constellation& constellation);

std::complex<double> lmmse_channel_estimate(const std::vector<Sample>& pilots, double snr,
                                            const Constellation& constellation);

}  // namespace metarx
