#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace metarx {

// Resolved experiment configuration. Keys mirror the standard parameter
// table symbols: snr_db, eta, kappa, n_tr, n_te, n_star_tr, n_star_te, I,
// I_star, I_meta, R, beta, t_init, B, kl_coeff, M_bins.
struct ExperimentConfig {
    std::string experiment = "demod_ser_vs_t";
    std::string profile = "desk";  // desk | paper

    double snr_db = 18.0;
    double eta = 0.1;
    double kappa = 1e-3;
    int n_tr = 4;
    int n_te = 3000;
    int n_star_tr = 8;
    int n_star_te = 4000;
    int inner_steps = 2;         // I
    int inner_steps_star = 200;  // I_star
    int meta_iters = 200;        // I_meta
    int ensemble = 100;          // R
    int r_train = 100;           // training-side ensemble (defaults to R)
    int r_test = 100;            // inference-side ensemble (defaults to R)
    double beta = 150.0;
    int t_init = 3;
    int batch = 16;  // B; 0 means full batch
    double kl_coeff = 0.1;
    int bins = 10;  // M

    std::uint64_t master_seed = 0;
    int seeds = 5;  // repetitions
    std::vector<int> t_grid = {2, 4, 8, 16};
    int meta_test_frames = 50;
    int budget = 10;  // frame budget for active acquisition

    double snr_linear() const;
    bool is_demod_family() const;

    // Table III column for the experiment family, then profile deltas,
    // then explicit overrides.
    static ExperimentConfig resolve(const std::string& experiment, const std::string& profile,
                                    std::uint64_t master_seed,
                                    const std::map<std::string, std::string>& overrides = {});

    std::string to_json(const std::map<std::string, std::string>& overrides = {}) const;
    std::string content_hash() const;
};

std::vector<std::string> known_experiments();

}  // namespace metarx
