#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "metarx/adaptation.hpp"

namespace metarx {

inline std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t hash_hyperparams(const Hyperparams& xi) {
    std::uint64_t h = fnv1a64(xi.nu.data(), sizeof(double) * static_cast<std::size_t>(xi.nu.size()));
    h = fnv1a64(xi.rho.data(), sizeof(double) * static_cast<std::size_t>(xi.rho.size()), h);
    return h;
}

struct MetaTrainConfig {
    Hyperparams::Kind mode = Hyperparams::Kind::Freq;
    int batch = 16;        // B; values >= t (or <= 0) mean full batch
    int inner_steps = 2;   // I
    double eta = 0.1;      // frame-specific rate
    double kappa = 1e-3;   // meta rate
    int r_train = 100;     // ensemble size for meta-training estimates
    double kl_coeff = 0.1;
    int meta_iters = 200;  // I_meta
    std::uint64_t seed = 0;
    bool first_order = false;
    bool resplit = true;   // Bayes: random tr/te re-split per meta-iteration
    double init_nu_std = 0.1;  // stddev of the nu initialization draw
    double grad_clip = 10.0;   // max norm of the averaged meta-gradient; 0 disables
};

struct MetaTraceRow {
    int iter = 0;
    double meta_loss = 0.0;
    std::uint64_t xi_hash = 0;
    double wall_ms = 0.0;
};
using MetaTrace = std::vector<MetaTraceRow>;

// nu entries i.i.d. N(0, init_nu_std^2); rho entries log(0.1) (Bayes only).
Hyperparams init_hyperparams(Hyperparams::Kind kind, const TaskModel& task, std::uint64_t seed,
                             double init_nu_std);

// MAML-style meta-training of the GD initialization; inner adaptations are
// recorded on tape so the meta-update carries exact second-order terms.
std::pair<Hyperparams, MetaTrace> freq_meta_train(const std::vector<FrameDataset>& frames,
                                                  const TaskModel& task,
                                                  const MetaTrainConfig& cfg,
                                                  std::optional<Hyperparams> initial = {});

// Empirical-Bayes meta-training of the Gaussian prior.
std::pair<Hyperparams, MetaTrace> bayes_meta_train(const std::vector<FrameDataset>& frames,
                                                   const TaskModel& task,
                                                   const MetaTrainConfig& cfg,
                                                   std::optional<Hyperparams> initial = {});

struct MetaTestConfig {
    Hyperparams::Kind mode = Hyperparams::Kind::Freq;
    BurninOptions burnin;
    int r_test = 100;
    std::uint64_t seed = 0;
};

struct DemodPrediction {
    int frame_id, sample_id, truth_idx, pred_idx;
    double confidence;
};

struct EqPrediction {
    int frame_id, sample_id;
    double truth, pred_mean;
};

struct MetaTestResult {
    std::vector<DemodPrediction> demod;
    std::vector<EqPrediction> eq;
};

// Adapts to each frame's pilots with the burn-in schedule, then predicts
// every payload symbol (point predictions for Freq, R-sample ensembles for
// Bayes).
MetaTestResult meta_test_eval(const Hyperparams& xi, const std::vector<FrameDataset>& frames,
                              const TaskModel& task, const MetaTestConfig& cfg);

}  // namespace metarx
