#pragma once

#include <filesystem>

#include "metarx/active.hpp"
#include "metarx/config.hpp"
#include "metarx/metrics.hpp"

namespace metarx {

// One scheme's metrics on one (t, seed) grid point of the demodulation
// curve experiments.
struct DemodCurvePoint {
    int t = 0;
    int seed = 0;
    std::string scheme;  // freq | bayes | conventional | lmmse
    double ser = 0.0;
    double ece = 0.0;
};

struct DemodCurveResult {
    std::vector<DemodCurvePoint> points;
    // reliability data aggregated over seeds at the largest t
    std::vector<double> freq_conf, bayes_conf;
    std::vector<bool> freq_correct, bayes_correct;
};

// Shared pipeline behind demod_ser_vs_t / demod_ece_vs_t / demod_reliability:
// generate frames, meta-train both modes, meta-test, run both baselines.
DemodCurveResult run_demod_curve(const ExperimentConfig& cfg);

struct ActiveCurveResult {
    // [mode][seed] -> mse per round t = t_init..budget
    std::vector<std::vector<std::vector<double>>> mse;  // mode 0 = active, 1 = passive
    std::vector<std::vector<ActiveResult>> runs;        // same indexing
};

ActiveCurveResult run_active_curve(const ExperimentConfig& cfg);

struct RunArtifact {
    ExperimentConfig config;
    std::string config_hash;
    std::vector<std::filesystem::path> files;
};

// Executes the named experiment end to end and writes its CSV/JSON outputs
// under `out_dir`.
RunArtifact run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                           const std::map<std::string, std::string>& overrides = {});

// Helpers shared with the CLI `report` subcommand.
void write_reliability_csv(const std::filesystem::path& path, const CalibrationReport& rep);

}  // namespace metarx
