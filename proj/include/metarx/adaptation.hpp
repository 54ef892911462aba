#pragma once

#include "metarx/variational.hpp"

namespace metarx {

using ad::Tape;
using ad::Var;

// Posterior parameters held as tape nodes (differentiable adaptation result).
struct VarPosterior {
    Vec<Var> nu;
    Vec<Var> rho;
};

// ---- graph mode: the adaptation is recorded on `tape` so meta-gradients
// ---- w.r.t. the initialization/prior are exact (second order included).

// I full-batch GD steps on the training log-loss starting from `init`.
// With first_order set, per-step gradients are detached (inner curvature
// terms are dropped from any outer derivative).
Vec<Var> freq_adapt_graph(Tape& tape, std::span<const Var> init,
                          const std::vector<Sample>& train, const TaskModel& task, double eta,
                          int steps, bool first_order = false);

// N^tr * Lhat(q) + kl_coeff * KL(q || p), with Lhat the R-sample
// reparametrized estimate of the expected training log-loss.
Var free_energy_graph(Tape& tape, const std::vector<Sample>& train, const TaskModel& task,
                      std::span<const Var> q_nu, std::span<const Var> q_rho,
                      std::span<const Var> p_nu, std::span<const Var> p_rho, int ensemble,
                      RngStream& rng, double kl_coeff);

// I steps of q <- q - (eta/N^tr) grad F_hat from q(0) = prior; fresh noise
// draws per step, shared across that step's forward/backward.
VarPosterior bayes_adapt_graph(Tape& tape, std::span<const Var> prior_nu,
                               std::span<const Var> prior_rho, const std::vector<Sample>& train,
                               const TaskModel& task, double eta, int steps, int ensemble,
                               RngStream& rng, double kl_coeff, bool first_order = false);

// ---- value mode: same arithmetic on per-step scratch tapes; results are
// ---- plain numbers (used at meta-test time and for baselines).

ModelParams freq_adapt(const std::vector<Sample>& train, const Eigen::VectorXd& init,
                       const TaskModel& task, double eta, int steps);

double free_energy_estimate(const std::vector<Sample>& train, const VariationalParams& q,
                            const VariationalParams& prior, const TaskModel& task, int ensemble,
                            RngStream& rng, double kl_coeff);

VariationalParams bayes_adapt(const std::vector<Sample>& train, const VariationalParams& prior,
                              const TaskModel& task, double eta, int steps, int ensemble,
                              RngStream& rng, double kl_coeff);

// Two-phase meta-test adaptation: (i) `steps` updates at rate eta on a
// seeded random subset of n_tr pilots; (ii) steps_star - steps updates at
// 5% of eta on all pilots.
struct BurninOptions {
    double eta = 0.1;
    int steps = 2;        // I
    int steps_star = 200; // I_star
    int n_tr = 4;         // phase (i) subset size
    int ensemble = 100;   // Bayes only
    double kl_coeff = 0.1;
};

struct AdaptedModel {
    Hyperparams::Kind kind = Hyperparams::Kind::Freq;
    ModelParams point;             // Freq
    VariationalParams posterior;   // Bayes
};

AdaptedModel metatest_adapt_burnin(const std::vector<Sample>& pilots, const Hyperparams& xi,
                                   const TaskModel& task, const BurninOptions& opt,
                                   RngStream& rng);

}  // namespace metarx
