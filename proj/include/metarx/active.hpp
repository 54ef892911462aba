#pragma once

#include "metarx/meta.hpp"

namespace metarx {

// Score of a model parameter vector under the mixture of per-frame
// variational posteriors: s_t(phi) = -log((1/t) sum_tau q(phi | nu_tau, rho_tau)).
// High where no posterior places mass, i.e. where the model space is
// unexplored.
double score(const Eigen::VectorXd& phi, const std::vector<VariationalParams>& posts);

// Analytic gradient of `score` (used by the projected-ascent refinement).
Eigen::VectorXd score_grad(const Eigen::VectorXd& phi,
                           const std::vector<VariationalParams>& posts);

struct SelectOptions {
    int n_radius = 64;
    int n_angle = 256;
    int refine_steps = 50;
    double refine_step_size = 0.05;
};

// argmax of `score` over the unit disk (2-parameter equalizer model):
// polar grid search followed by projected gradient-ascent refinement.
// Grid ties break toward the smallest angle, then the smallest radius.
Eigen::Vector2d select_next_param(const std::vector<VariationalParams>& posts,
                                  const SelectOptions& opt = {});

// Minimum-norm channel state that makes `phi` the loss minimizer:
// c = phi / ||phi||^2, so that phi^T c = 1.
EqChannelState invert_channel_equalizer(const Eigen::Vector2d& phi);

// SGD fallback for channel inversion when no analytic solution is wired up:
// stochastically minimizes E_{x,z}[-log p(x | y, phi)] over c.
EqChannelState invert_channel_sgd(const Eigen::Vector2d& phi, double snr, double beta,
                                  RngStream& rng, int steps = 2000, double lr = 5e-3);

struct ActiveConfig {
    int t_init = 3;
    int budget = 10;
    bool active = true;  // false: passive baseline, channel states from the prior
    double snr = 4.0;    // linear
    int n_tr = 4;
    int n_te = 4;
    std::uint64_t seed = 0;
    MetaTrainConfig meta;        // per-round Bayesian meta-training settings
    SelectOptions select;
    MetaTestConfig eval;         // snapshot evaluation settings
};

struct AcquisitionRound {
    int t = 0;  // frames available when the round ran
    Eigen::Vector2d c_next;
    Eigen::Vector2d phi_next;
    double score_value = 0.0;  // NaN for passive rounds
    double meta_test_mse = 0.0;
};

struct ActiveResult {
    Hyperparams xi;                          // trained on all budget frames
    std::vector<AcquisitionRound> history;   // one row per acquisition
    std::vector<double> mse_curve;           // t = t_init .. budget
    std::vector<FrameDataset> frames;
};

// Alternates meta-training (hyperparameters re-initialized each round with a
// fresh derived seed), posterior re-adaptation, scoring, channel inversion,
// and data generation until `budget` frames exist. `eval_frames` is the
// fixed meta-test set used for the per-round loss snapshots.
ActiveResult active_loop(const ActiveConfig& cfg, const TaskModel& task,
                         const std::vector<FrameDataset>& eval_frames);

}  // namespace metarx
