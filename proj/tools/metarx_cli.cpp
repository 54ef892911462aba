// Command-line harness: channel simulation, meta-training, meta-testing,
// active acquisition, calibration reports, and full experiment runs.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "metarx/baselines.hpp"
#include "metarx/experiment.hpp"
#include "metarx/io.hpp"

using namespace metarx;
using nlohmann::json;

namespace {

std::map<std::string, std::string> load_config_overrides(const std::string& path) {
    std::map<std::string, std::string> overrides;
    if (path.empty()) return overrides;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j = json::parse(in);
    for (const auto& [key, value] : j.items()) {
        if (value.is_string()) overrides[key] = value.get<std::string>();
        else overrides[key] = value.dump();
    }
    return overrides;
}

std::map<std::string, std::string> parse_sets(const std::vector<std::string>& sets) {
    std::map<std::string, std::string> overrides;
    for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got " + s);
        overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return overrides;
}

TaskModel task_for(const std::string& name, double beta) {
    if (name == "demod") return TaskModel::demod();
    if (name == "eq") return TaskModel::equalizer(beta);
    throw std::runtime_error("unknown task: " + name);
}

std::vector<FrameDataset> generate_frames(const TaskModel& task, int count, int n_tr, int n_te,
                                          double snr, std::uint64_t seed, bool noiseless) {
    std::vector<FrameDataset> frames;
    frames.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        RngStream state_rng(seed, "state", static_cast<std::uint64_t>(i));
        RngStream frame_rng(seed, "frame", static_cast<std::uint64_t>(i));
        ChannelState state;
        if (task.kind == TaskKind::Demod) state = sample_demod_state(state_rng);
        else state = sample_eq_state(state_rng);
        frames.push_back(
            generate_frame(state, task.constellation, n_tr, n_te, snr, frame_rng, noiseless));
    }
    return frames;
}

MetaTrainConfig train_config_from(const ExperimentConfig& cfg, std::uint64_t seed) {
    MetaTrainConfig mc;
    mc.batch = cfg.batch;
    mc.inner_steps = cfg.inner_steps;
    mc.eta = cfg.eta;
    mc.kappa = cfg.kappa;
    mc.r_train = cfg.r_train;
    mc.kl_coeff = cfg.kl_coeff;
    mc.meta_iters = cfg.meta_iters;
    mc.seed = seed;
    mc.init_nu_std = cfg.is_demod_family() ? 0.1 : 1.0;
    return mc;
}

MetaTestConfig test_config_from(const ExperimentConfig& cfg, std::uint64_t seed) {
    MetaTestConfig tc;
    tc.burnin.eta = cfg.eta;
    tc.burnin.steps = cfg.inner_steps;
    tc.burnin.steps_star = cfg.inner_steps_star;
    tc.burnin.n_tr = cfg.n_tr;
    tc.burnin.ensemble = cfg.r_train;
    tc.burnin.kl_coeff = cfg.kl_coeff;
    tc.r_test = cfg.r_test;
    tc.seed = seed;
    return tc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-learned demodulation and equalization experiment harness"};
    app.require_subcommand(1);

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "generate frames and write them as JSON lines");
    std::string sim_task = "demod", sim_out = "frames.jsonl";
    int sim_frames = 10, sim_n_tr = 4, sim_n_te = 3000;
    double sim_snr_db = 18.0;
    std::uint64_t sim_seed = 0;
    bool sim_noiseless = false;
    sim->add_option("--task", sim_task, "demod | eq");
    sim->add_option("--frames", sim_frames, "number of frames");
    sim->add_option("--n-tr", sim_n_tr, "pilots per frame");
    sim->add_option("--n-te", sim_n_te, "payload symbols per frame");
    sim->add_option("--snr-db", sim_snr_db, "SNR in dB");
    sim->add_option("--seed", sim_seed, "master seed");
    sim->add_flag("--noiseless", sim_noiseless, "disable additive noise");
    sim->add_option("--out", sim_out, "output JSONL path");

    // ---- meta-train ----
    auto* train = app.add_subcommand("meta-train", "meta-train a hyperparameter checkpoint");
    std::string tr_mode = "bayes", tr_task = "demod", tr_config, tr_frames, tr_out = "ckpt.json";
    std::uint64_t tr_seed = 0;
    int tr_t = 16;
    train->add_option("--mode", tr_mode, "freq | bayes")->required();
    train->add_option("--task", tr_task, "demod | eq");
    train->add_option("--config", tr_config, "JSON config overrides");
    train->add_option("--frames", tr_frames, "meta-training frames (JSONL); generated if absent");
    train->add_option("--t", tr_t, "frames to generate when --frames is absent");
    train->add_option("--seed", tr_seed, "master seed");
    train->add_option("--out", tr_out, "checkpoint output path")->required();

    // ---- meta-test ----
    auto* test = app.add_subcommand("meta-test", "adapt and predict on meta-test frames");
    std::string te_ckpt, te_frames, te_out = "predictions.csv", te_mode = "bayes",
                te_task = "demod", te_config;
    std::uint64_t te_seed = 0;
    int te_frames_n = 10;
    test->add_option("--checkpoint", te_ckpt, "checkpoint path (freq/bayes modes)");
    test->add_option("--mode", te_mode, "freq | bayes | conventional | lmmse");
    test->add_option("--task", te_task, "demod | eq");
    test->add_option("--config", te_config, "JSON config overrides");
    test->add_option("--frames", te_frames, "meta-test frames (JSONL); generated if absent");
    test->add_option("--t", te_frames_n, "frames to generate when --frames is absent");
    test->add_option("--seed", te_seed, "master seed");
    test->add_option("--out", te_out, "prediction CSV path")->required();

    // ---- active ----
    auto* act = app.add_subcommand("active", "active vs passive meta-training curves");
    std::string act_mode = "active", act_out = "active_out", act_profile = "desk", act_config;
    int act_budget = -1, act_tinit = -1, act_seeds = -1;
    std::uint64_t act_seed = 0;
    act->add_option("--mode", act_mode, "active | passive | both");
    act->add_option("--budget", act_budget, "total frame budget");
    act->add_option("--tinit", act_tinit, "random frames before acquisition starts");
    act->add_option("--seeds", act_seeds, "number of repetitions");
    act->add_option("--seed", act_seed, "master seed");
    act->add_option("--profile", act_profile, "desk | paper");
    act->add_option("--config", act_config, "JSON config overrides");
    act->add_option("--out", act_out, "output directory");

    // ---- report ----
    auto* rep = app.add_subcommand("report", "metrics and reliability data from predictions");
    std::string rep_pred, rep_out = "report";
    int rep_bins = 10;
    rep->add_option("--pred", rep_pred, "prediction CSV")->required();
    rep->add_option("--bins", rep_bins, "calibration bins M");
    rep->add_option("--out", rep_out, "output prefix");

    // ---- run ----
    auto* run = app.add_subcommand("run", "run a named experiment end to end");
    std::string run_experiment_name, run_profile = "desk", run_out = "runs";
    std::uint64_t run_seed = 0;
    bool run_print_config = false;
    std::vector<std::string> run_sets;
    run->add_option("--experiment", run_experiment_name, "experiment name")->required();
    run->add_option("--profile", run_profile, "desk | paper");
    run->add_option("--seed", run_seed, "master seed");
    run->add_option("--out", run_out, "output directory");
    run->add_flag("--print-config", run_print_config, "dump the resolved config and exit");
    run->add_option("--set", run_sets, "override config entries, key=value");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            TaskModel task = task_for(sim_task, 150.0);
            const double snr = std::pow(10.0, sim_snr_db / 10.0);
            write_frames_jsonl(sim_out, generate_frames(task, sim_frames, sim_n_tr, sim_n_te, snr,
                                                        sim_seed, sim_noiseless));
            std::cout << "wrote " << sim_frames << " frames to " << sim_out << "\n";
        } else if (*train) {
            const std::string family = tr_task == "demod" ? "demod_ser_vs_t" : "eq_active_vs_passive";
            ExperimentConfig cfg = ExperimentConfig::resolve(family, "paper", tr_seed,
                                                             load_config_overrides(tr_config));
            TaskModel task = task_for(tr_task, cfg.beta);
            std::vector<FrameDataset> frames =
                tr_frames.empty()
                    ? generate_frames(task, tr_t, cfg.n_tr, cfg.n_te, cfg.snr_linear(), tr_seed,
                                      false)
                    : read_frames_jsonl(tr_frames);
            MetaTrainConfig mc = train_config_from(cfg, tr_seed);
            Hyperparams xi;
            if (tr_mode == "freq") {
                mc.mode = Hyperparams::Kind::Freq;
                xi = freq_meta_train(frames, task, mc).first;
            } else {
                mc.mode = Hyperparams::Kind::Bayes;
                xi = bayes_meta_train(frames, task, mc).first;
            }
            write_checkpoint(tr_out, xi, tr_seed, cfg.content_hash());
            std::cout << "wrote checkpoint " << tr_out << "\n";
        } else if (*test) {
            const std::string family = te_task == "demod" ? "demod_ser_vs_t" : "eq_active_vs_passive";
            ExperimentConfig cfg = ExperimentConfig::resolve(family, "paper", te_seed,
                                                             load_config_overrides(te_config));
            TaskModel task = task_for(te_task, cfg.beta);
            std::vector<FrameDataset> frames =
                te_frames.empty()
                    ? generate_frames(task, te_frames_n, cfg.n_star_tr, cfg.n_star_te,
                                      cfg.snr_linear(), derive_seed(te_seed, "metatest_gen"),
                                      false)
                    : read_frames_jsonl(te_frames);
            if (te_mode == "freq" || te_mode == "bayes") {
                if (te_ckpt.empty()) throw std::runtime_error("--checkpoint required");
                Hyperparams xi = read_checkpoint(te_ckpt);
                MetaTestConfig tc = test_config_from(cfg, derive_seed(te_seed, "metatest"));
                tc.mode = te_mode == "freq" ? Hyperparams::Kind::Freq : Hyperparams::Kind::Bayes;
                MetaTestResult result = meta_test_eval(xi, frames, task, tc);
                if (task.kind == TaskKind::Demod) write_demod_predictions(te_out, result.demod);
                else write_eq_predictions(te_out, result.eq);
            } else if (te_mode == "conventional") {
                std::vector<DemodPrediction> rows;
                for (std::size_t f = 0; f < frames.size(); ++f) {
                    ConventionalOptions copt;
                    copt.eta = cfg.eta;
                    copt.steps = cfg.inner_steps_star;
                    copt.seed = derive_seed(te_seed, "conventional", f);
                    ModelParams phi = conventional_learn(frames[f].train, task, copt);
                    for (std::size_t i = 0; i < frames[f].test.size(); ++i) {
                        const Sample& s = frames[f].test[i];
                        Eigen::VectorXd probs = demod_probs(s.y, phi);
                        int arg = 0;
                        for (int j = 1; j < probs.size(); ++j)
                            if (probs[j] > probs[arg]) arg = j;
                        rows.push_back({static_cast<int>(f), static_cast<int>(i), s.x_idx, arg,
                                        probs[arg]});
                    }
                }
                write_demod_predictions(te_out, rows);
            } else if (te_mode == "lmmse") {
                std::vector<DemodPrediction> rows;
                for (std::size_t f = 0; f < frames.size(); ++f) {
                    std::vector<Eigen::Vector2d> payload;
                    for (const Sample& s : frames[f].test) payload.push_back(s.y);
                    auto dec = lmmse_ml_demod(frames[f].train, payload, cfg.snr_linear(),
                                              task.constellation);
                    for (std::size_t i = 0; i < dec.size(); ++i)
                        rows.push_back({static_cast<int>(f), static_cast<int>(i),
                                        frames[f].test[i].x_idx, dec[i].pred_idx,
                                        dec[i].confidence});
                }
                write_demod_predictions(te_out, rows);
            } else {
                throw std::runtime_error("unknown meta-test mode: " + te_mode);
            }
            std::cout << "wrote predictions to " << te_out << "\n";
        } else if (*act) {
            auto overrides = load_config_overrides(act_config);
            if (act_budget > 0) overrides["budget"] = std::to_string(act_budget);
            if (act_tinit > 0) overrides["t_init"] = std::to_string(act_tinit);
            if (act_seeds > 0) overrides["seeds"] = std::to_string(act_seeds);
            ExperimentConfig cfg = ExperimentConfig::resolve("eq_active_vs_passive", act_profile,
                                                             act_seed, overrides);
            RunArtifact artifact = run_experiment(cfg, act_out, overrides);
            std::cout << "experiment outputs in " << act_out << " (config hash "
                      << artifact.config_hash << ")\n";
        } else if (*rep) {
            PredictionFile pred = read_predictions(rep_pred);
            json summary;
            if (pred.kind == TaskKind::Demod) {
                std::vector<int> p, t;
                std::vector<double> conf;
                std::vector<bool> correct;
                for (const DemodPrediction& r : pred.demod) {
                    p.push_back(r.pred_idx);
                    t.push_back(r.truth_idx);
                    conf.push_back(r.confidence);
                    correct.push_back(r.pred_idx == r.truth_idx);
                }
                CalibrationReport rep_data = calibration_report(conf, correct, rep_bins);
                write_reliability_csv(rep_out + std::string("_reliability.csv"), rep_data);
                summary["ser"] = ser(p, t);
                summary["ece"] = rep_data.ece;
            } else {
                std::vector<double> p, t;
                for (const EqPrediction& r : pred.eq) {
                    p.push_back(r.pred_mean);
                    t.push_back(r.truth);
                }
                summary["mse"] = mse(p, t);
            }
            std::ofstream out(rep_out + std::string("_summary.json"));
            out << summary.dump(2) << "\n";
            std::cout << summary.dump(2) << "\n";
        } else if (*run) {
            auto overrides = parse_sets(run_sets);
            ExperimentConfig cfg =
                ExperimentConfig::resolve(run_experiment_name, run_profile, run_seed, overrides);
            if (run_print_config) {
                std::cout << cfg.to_json(overrides) << "\n";
                return 0;
            }
            RunArtifact artifact = run_experiment(cfg, run_out, overrides);
            std::cout << "experiment outputs in " << run_out << " (config hash "
                      << artifact.config_hash << ")\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
