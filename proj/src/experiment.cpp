#include "metarx/experiment.hpp"

#include <fstream>
#include <json.hpp>
#include <thread>

#include "metarx/baselines.hpp"
#include "metarx/io.hpp"

namespace metarx {

using nlohmann::json;

namespace {

void parallel_for(int n, const std::function<void(int)>& fn) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int workers = static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(n)));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    for (std::thread& th : pool) th.join();
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
    return out;
}

struct DemodEval {
    double ser = 0.0;
    double ece = 0.0;
    std::vector<double> conf;
    std::vector<bool> correct;
};

DemodEval eval_demod_predictions(const std::vector<DemodPrediction>& rows, int bins) {
    DemodEval e;
    std::vector<int> pred, truth;
    pred.reserve(rows.size());
    truth.reserve(rows.size());
    e.conf.reserve(rows.size());
    e.correct.reserve(rows.size());
    for (const DemodPrediction& r : rows) {
        pred.push_back(r.pred_idx);
        truth.push_back(r.truth_idx);
        e.conf.push_back(r.confidence);
        e.correct.push_back(r.pred_idx == r.truth_idx);
    }
    e.ser = ser(pred, truth);
    e.ece = calibration_report(e.conf, e.correct, bins).ece;
    return e;
}

// Per-seed demodulation pipeline state
struct DemodSeedOutput {
    std::vector<DemodCurvePoint> points;
    std::vector<double> freq_conf, bayes_conf;
    std::vector<bool> freq_correct, bayes_correct;
};

DemodSeedOutput run_demod_seed(const ExperimentConfig& cfg, int seed_index) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, "seed", static_cast<std::uint64_t>(seed_index));
    const TaskModel task = TaskModel::demod();
    const double snr = cfg.snr_linear();
    const int t_max = *std::max_element(cfg.t_grid.begin(), cfg.t_grid.end());

    // meta-training frames (prefixes of one pool give paired curves over t)
    std::vector<FrameDataset> pool;
    pool.reserve(static_cast<std::size_t>(t_max));
    for (int i = 0; i < t_max; ++i) {
        RngStream state_rng(seed, "mtrain_state", static_cast<std::uint64_t>(i));
        RngStream frame_rng(seed, "mtrain_frame", static_cast<std::uint64_t>(i));
        pool.push_back(generate_frame(sample_demod_state(state_rng), task.constellation, cfg.n_tr,
                                      cfg.n_te, snr, frame_rng));
    }
    std::vector<FrameDataset> test_frames;
    test_frames.reserve(static_cast<std::size_t>(cfg.meta_test_frames));
    for (int i = 0; i < cfg.meta_test_frames; ++i) {
        RngStream state_rng(seed, "mtest_state", static_cast<std::uint64_t>(i));
        RngStream frame_rng(seed, "mtest_frame", static_cast<std::uint64_t>(i));
        test_frames.push_back(generate_frame(sample_demod_state(state_rng), task.constellation,
                                             cfg.n_star_tr, cfg.n_star_te, snr, frame_rng));
    }

    DemodSeedOutput out;

    // baselines are independent of t
    {
        std::vector<DemodPrediction> conv_rows, lmmse_rows;
        for (std::size_t f = 0; f < test_frames.size(); ++f) {
            const FrameDataset& frame = test_frames[f];
            ConventionalOptions copt;
            copt.eta = cfg.eta;
            copt.steps = cfg.inner_steps_star;
            copt.seed = derive_seed(seed, "conventional", f);
            ModelParams phi = conventional_learn(frame.train, task, copt);
            std::vector<Eigen::Vector2d> payload;
            payload.reserve(frame.test.size());
            for (const Sample& s : frame.test) payload.push_back(s.y);
            auto lmmse = lmmse_ml_demod(frame.train, payload, snr, task.constellation);
            for (std::size_t i = 0; i < frame.test.size(); ++i) {
                const Sample& s = frame.test[i];
                Eigen::VectorXd probs = demod_probs(s.y, phi);
                int arg = 0;
                for (int j = 1; j < probs.size(); ++j)
                    if (probs[j] > probs[arg]) arg = j;
                conv_rows.push_back({static_cast<int>(f), static_cast<int>(i), s.x_idx, arg,
                                     probs[arg]});
                lmmse_rows.push_back({static_cast<int>(f), static_cast<int>(i), s.x_idx,
                                      lmmse[i].pred_idx, lmmse[i].confidence});
            }
        }
        DemodEval conv = eval_demod_predictions(conv_rows, cfg.bins);
        DemodEval lm = eval_demod_predictions(lmmse_rows, cfg.bins);
        for (int t : cfg.t_grid) {
            out.points.push_back({t, seed_index, "conventional", conv.ser, conv.ece});
            out.points.push_back({t, seed_index, "lmmse", lm.ser, lm.ece});
        }
    }

    for (int t : cfg.t_grid) {
        std::vector<FrameDataset> frames(pool.begin(), pool.begin() + t);

        MetaTrainConfig mc;
        mc.batch = cfg.batch;
        mc.inner_steps = cfg.inner_steps;
        mc.eta = cfg.eta;
        mc.kappa = cfg.kappa;
        mc.r_train = cfg.r_train;
        mc.kl_coeff = cfg.kl_coeff;
        mc.meta_iters = cfg.meta_iters;
        mc.init_nu_std = 0.1;

        MetaTestConfig tc;
        tc.burnin.eta = cfg.eta;
        tc.burnin.steps = cfg.inner_steps;
        tc.burnin.steps_star = cfg.inner_steps_star;
        tc.burnin.n_tr = cfg.n_tr;
        tc.burnin.ensemble = cfg.r_train;
        tc.burnin.kl_coeff = cfg.kl_coeff;
        tc.r_test = cfg.r_test;
        tc.seed = derive_seed(seed, "metatest", static_cast<std::uint64_t>(t));

        mc.mode = Hyperparams::Kind::Freq;
        mc.seed = derive_seed(seed, "freq_train", static_cast<std::uint64_t>(t));
        Hyperparams xi_f = freq_meta_train(frames, task, mc).first;
        tc.mode = Hyperparams::Kind::Freq;
        DemodEval ef = eval_demod_predictions(meta_test_eval(xi_f, test_frames, task, tc).demod,
                                              cfg.bins);
        out.points.push_back({t, seed_index, "freq", ef.ser, ef.ece});

        mc.mode = Hyperparams::Kind::Bayes;
        mc.seed = derive_seed(seed, "bayes_train", static_cast<std::uint64_t>(t));
        Hyperparams xi_b = bayes_meta_train(frames, task, mc).first;
        tc.mode = Hyperparams::Kind::Bayes;
        DemodEval eb = eval_demod_predictions(meta_test_eval(xi_b, test_frames, task, tc).demod,
                                              cfg.bins);
        out.points.push_back({t, seed_index, "bayes", eb.ser, eb.ece});

        if (t == t_max) {
            out.freq_conf = std::move(ef.conf);
            out.freq_correct = std::move(ef.correct);
            out.bayes_conf = std::move(eb.conf);
            out.bayes_correct = std::move(eb.correct);
        }
    }
    return out;
}

}  // namespace

DemodCurveResult run_demod_curve(const ExperimentConfig& cfg) {
    if (cfg.t_grid.empty()) throw std::invalid_argument("demod curve: empty t grid");
    std::vector<DemodSeedOutput> per_seed(static_cast<std::size_t>(cfg.seeds));
    parallel_for(cfg.seeds, [&](int k) { per_seed[static_cast<std::size_t>(k)] = run_demod_seed(cfg, k); });
    DemodCurveResult result;
    for (DemodSeedOutput& s : per_seed) {
        result.points.insert(result.points.end(), s.points.begin(), s.points.end());
        result.freq_conf.insert(result.freq_conf.end(), s.freq_conf.begin(), s.freq_conf.end());
        result.freq_correct.insert(result.freq_correct.end(), s.freq_correct.begin(),
                                   s.freq_correct.end());
        result.bayes_conf.insert(result.bayes_conf.end(), s.bayes_conf.begin(),
                                 s.bayes_conf.end());
        result.bayes_correct.insert(result.bayes_correct.end(), s.bayes_correct.begin(),
                                    s.bayes_correct.end());
    }
    return result;
}

ActiveCurveResult run_active_curve(const ExperimentConfig& cfg) {
    ActiveCurveResult result;
    result.mse.assign(2, std::vector<std::vector<double>>(static_cast<std::size_t>(cfg.seeds)));
    result.runs.assign(2, std::vector<ActiveResult>(static_cast<std::size_t>(cfg.seeds)));
    const TaskModel task = TaskModel::equalizer(cfg.beta);

    parallel_for(cfg.seeds, [&](int k) {
        const std::uint64_t seed = derive_seed(cfg.master_seed, "seed", static_cast<std::uint64_t>(k));
        // fixed evaluation frames shared by the active and passive runs
        std::vector<FrameDataset> eval_frames;
        eval_frames.reserve(static_cast<std::size_t>(cfg.meta_test_frames));
        const double snr = cfg.snr_linear();
        for (int i = 0; i < cfg.meta_test_frames; ++i) {
            RngStream state_rng(seed, "eval_state", static_cast<std::uint64_t>(i));
            RngStream frame_rng(seed, "eval_frame", static_cast<std::uint64_t>(i));
            eval_frames.push_back(generate_frame(sample_eq_state(state_rng), task.constellation,
                                                 cfg.n_star_tr, cfg.n_star_te, snr, frame_rng));
        }
        ActiveConfig ac;
        ac.t_init = cfg.t_init;
        ac.budget = cfg.budget;
        ac.snr = snr;
        ac.n_tr = cfg.n_tr;
        ac.n_te = cfg.n_te;
        ac.seed = seed;
        ac.meta.mode = Hyperparams::Kind::Bayes;
        ac.meta.inner_steps = cfg.inner_steps;
        ac.meta.eta = cfg.eta;
        ac.meta.kappa = cfg.kappa;
        ac.meta.r_train = cfg.r_train;
        ac.meta.kl_coeff = cfg.kl_coeff;
        ac.meta.meta_iters = cfg.meta_iters;
        ac.meta.init_nu_std = 1.0;
        ac.eval.mode = Hyperparams::Kind::Bayes;
        ac.eval.burnin.eta = cfg.eta;
        ac.eval.burnin.steps = cfg.inner_steps;
        ac.eval.burnin.steps_star = cfg.inner_steps_star;
        ac.eval.burnin.n_tr = cfg.n_tr;
        ac.eval.burnin.ensemble = cfg.r_train;
        ac.eval.burnin.kl_coeff = cfg.kl_coeff;
        ac.eval.r_test = cfg.r_test;
        ac.eval.seed = derive_seed(seed, "eval");

        for (int mode = 0; mode < 2; ++mode) {
            ac.active = mode == 0;
            ActiveResult run = active_loop(ac, task, eval_frames);
            result.mse[static_cast<std::size_t>(mode)][static_cast<std::size_t>(k)] =
                run.mse_curve;
            result.runs[static_cast<std::size_t>(mode)][static_cast<std::size_t>(k)] =
                std::move(run);
        }
    });
    return result;
}

void write_reliability_csv(const std::filesystem::path& path, const CalibrationReport& rep) {
    std::ofstream out = open_out(path);
    out << "bin_lo,bin_hi,count,acc,conf,frequency\n";
    for (int m = 0; m < rep.bins; ++m) {
        const double lo = static_cast<double>(m) / rep.bins;
        const double hi = static_cast<double>(m + 1) / rep.bins;
        const long c = rep.bin_counts[static_cast<std::size_t>(m)];
        const double freq = rep.n > 0 ? static_cast<double>(c) / static_cast<double>(rep.n) : 0.0;
        out << format_double(lo) << ',' << format_double(hi) << ',' << c << ','
            << format_double(rep.bin_acc[static_cast<std::size_t>(m)]) << ','
            << format_double(rep.bin_conf[static_cast<std::size_t>(m)]) << ','
            << format_double(freq) << "\n";
    }
}

namespace {

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
};

Aggregate aggregate(const std::vector<double>& xs) {
    Aggregate a;
    if (xs.empty()) return a;
    for (double x : xs) a.mean += x;
    a.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - a.mean) * (x - a.mean);
    a.stddev = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return a;
}

void write_demod_outputs(const ExperimentConfig& cfg, const DemodCurveResult& result,
                         const std::filesystem::path& dir, RunArtifact& artifact) {
    const std::vector<std::string> schemes = {"freq", "bayes", "conventional", "lmmse"};
    {
        auto out = open_out(dir / "curve.csv");
        out << "t,scheme,seed,ser,ece\n";
        for (int t : cfg.t_grid)
            for (const std::string& scheme : schemes)
                for (const DemodCurvePoint& p : result.points)
                    if (p.t == t && p.scheme == scheme)
                        out << p.t << ',' << p.scheme << ',' << p.seed << ','
                            << format_double(p.ser) << ',' << format_double(p.ece) << "\n";
        artifact.files.push_back(dir / "curve.csv");
    }
    {
        auto out = open_out(dir / "summary.csv");
        out << "t,scheme,mean_ser,std_ser,mean_ece,std_ece\n";
        json summary;
        for (int t : cfg.t_grid) {
            for (const std::string& scheme : schemes) {
                std::vector<double> sers, eces;
                for (const DemodCurvePoint& p : result.points)
                    if (p.t == t && p.scheme == scheme) {
                        sers.push_back(p.ser);
                        eces.push_back(p.ece);
                    }
                const Aggregate as = aggregate(sers), ae = aggregate(eces);
                out << t << ',' << scheme << ',' << format_double(as.mean) << ','
                    << format_double(as.stddev) << ',' << format_double(ae.mean) << ','
                    << format_double(ae.stddev) << "\n";
                summary[std::to_string(t)][scheme] = {{"mean_ser", as.mean},
                                                      {"std_ser", as.stddev},
                                                      {"mean_ece", ae.mean},
                                                      {"std_ece", ae.stddev}};
            }
        }
        auto js = open_out(dir / "summary.json");
        js << summary.dump(2) << "\n";
        artifact.files.push_back(dir / "summary.csv");
        artifact.files.push_back(dir / "summary.json");
    }
    if (cfg.experiment == "demod_reliability") {
        CalibrationReport fr = calibration_report(result.freq_conf, result.freq_correct, cfg.bins);
        CalibrationReport br =
            calibration_report(result.bayes_conf, result.bayes_correct, cfg.bins);
        write_reliability_csv(dir / "reliability_freq.csv", fr);
        write_reliability_csv(dir / "reliability_bayes.csv", br);
        artifact.files.push_back(dir / "reliability_freq.csv");
        artifact.files.push_back(dir / "reliability_bayes.csv");
    }
}

void write_active_outputs(const ExperimentConfig& cfg, const ActiveCurveResult& result,
                          const std::filesystem::path& dir, RunArtifact& artifact) {
    const std::vector<std::string> modes = {"active", "passive"};
    {
        auto out = open_out(dir / "rounds.csv");
        out << "mode,seed,t,mse\n";
        for (std::size_t m = 0; m < modes.size(); ++m)
            for (int k = 0; k < cfg.seeds; ++k) {
                const auto& curve = result.mse[m][static_cast<std::size_t>(k)];
                for (std::size_t i = 0; i < curve.size(); ++i)
                    out << modes[m] << ',' << k << ',' << (cfg.t_init + static_cast<int>(i))
                        << ',' << format_double(curve[i]) << "\n";
            }
        artifact.files.push_back(dir / "rounds.csv");
    }
    {
        auto out = open_out(dir / "summary.csv");
        out << "mode,t,mean_mse,std_mse\n";
        const std::size_t rounds = result.mse[0].empty() ? 0 : result.mse[0][0].size();
        for (std::size_t m = 0; m < modes.size(); ++m)
            for (std::size_t i = 0; i < rounds; ++i) {
                std::vector<double> xs;
                xs.reserve(static_cast<std::size_t>(cfg.seeds));
                for (int k = 0; k < cfg.seeds; ++k)
                    xs.push_back(result.mse[m][static_cast<std::size_t>(k)][i]);
                const Aggregate a = aggregate(xs);
                out << modes[m] << ',' << (cfg.t_init + static_cast<int>(i)) << ','
                    << format_double(a.mean) << ',' << format_double(a.stddev) << "\n";
            }
        artifact.files.push_back(dir / "summary.csv");
    }
    for (std::size_t m = 0; m < modes.size(); ++m)
        for (int k = 0; k < cfg.seeds; ++k) {
            const ActiveResult& run = result.runs[m][static_cast<std::size_t>(k)];
            json hist = json::array();
            for (const AcquisitionRound& r : run.history) {
                json row;
                row["t"] = r.t;
                row["c"] = {r.c_next[0], r.c_next[1]};
                row["phi"] = {r.phi_next[0], r.phi_next[1]};
                if (std::isfinite(r.score_value)) row["score"] = r.score_value;
                else row["score"] = nullptr;
                row["meta_test_mse"] = r.meta_test_mse;
                hist.push_back(row);
            }
            auto out = open_out(dir / ("history_" + modes[m] + "_seed" + std::to_string(k) +
                                       ".json"));
            out << hist.dump(2) << "\n";
            artifact.files.push_back(dir / ("history_" + modes[m] + "_seed" + std::to_string(k) +
                                            ".json"));
        }
}

void write_scoring_map(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                       RunArtifact& artifact) {
    const TaskModel task = TaskModel::equalizer(cfg.beta);
    const std::uint64_t seed = derive_seed(cfg.master_seed, "seed", 0);
    std::vector<FrameDataset> eval_frames;
    const double snr = cfg.snr_linear();
    for (int i = 0; i < cfg.meta_test_frames; ++i) {
        RngStream state_rng(seed, "eval_state", static_cast<std::uint64_t>(i));
        RngStream frame_rng(seed, "eval_frame", static_cast<std::uint64_t>(i));
        eval_frames.push_back(generate_frame(sample_eq_state(state_rng), task.constellation,
                                             cfg.n_star_tr, cfg.n_star_te, snr, frame_rng));
    }
    ActiveConfig ac;
    ac.t_init = cfg.t_init;
    ac.budget = cfg.budget;
    ac.snr = snr;
    ac.n_tr = cfg.n_tr;
    ac.n_te = cfg.n_te;
    ac.seed = seed;
    ac.meta.inner_steps = cfg.inner_steps;
    ac.meta.eta = cfg.eta;
    ac.meta.kappa = cfg.kappa;
    ac.meta.r_train = cfg.r_train;
    ac.meta.kl_coeff = cfg.kl_coeff;
    ac.meta.meta_iters = cfg.meta_iters;
    ac.meta.init_nu_std = 1.0;
    ac.eval.mode = Hyperparams::Kind::Bayes;
    ac.eval.burnin.eta = cfg.eta;
    ac.eval.burnin.steps = cfg.inner_steps;
    ac.eval.burnin.steps_star = cfg.inner_steps_star;
    ac.eval.burnin.n_tr = cfg.n_tr;
    ac.eval.burnin.ensemble = cfg.r_train;
    ac.eval.burnin.kl_coeff = cfg.kl_coeff;
    ac.eval.r_test = cfg.r_test;
    ac.eval.seed = derive_seed(seed, "eval");
    ActiveResult run = active_loop(ac, task, eval_frames);

    // re-adapt posteriors under the final prior and map the score surface
    std::vector<VariationalParams> posts;
    VariationalParams prior = run.xi.as_variational();
    for (std::size_t tau = 0; tau < run.frames.size(); ++tau) {
        RngStream rng(seed, "map_readapt", tau);
        posts.push_back(bayes_adapt(run.frames[tau].train, prior, task, cfg.eta,
                                    cfg.inner_steps, cfg.r_train, rng, cfg.kl_coeff));
    }
    SelectOptions sel;
    auto out = open_out(dir / "scoring_map.csv");
    out << "phi1,phi2,score\n";
    for (int k = 0; k < sel.n_angle; ++k) {
        const double ang = 2.0 * M_PI * k / sel.n_angle;
        for (int j = 0; j < sel.n_radius; ++j) {
            const double r = static_cast<double>(j + 1) / sel.n_radius;
            Eigen::Vector2d phi(r * std::cos(ang), r * std::sin(ang));
            out << format_double(phi[0]) << ',' << format_double(phi[1]) << ','
                << format_double(score(phi, posts)) << "\n";
        }
    }
    artifact.files.push_back(dir / "scoring_map.csv");

    auto sf = open_out(dir / "selected.csv");
    sf << "t,phi1,phi2,score,c1,c2\n";
    for (const AcquisitionRound& r : run.history)
        sf << r.t << ',' << format_double(r.phi_next[0]) << ',' << format_double(r.phi_next[1])
           << ',' << format_double(r.score_value) << ',' << format_double(r.c_next[0]) << ','
           << format_double(r.c_next[1]) << "\n";
    artifact.files.push_back(dir / "selected.csv");
}

}  // namespace

RunArtifact run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                           const std::map<std::string, std::string>& overrides) {
    std::filesystem::create_directories(out_dir);
    RunArtifact artifact;
    artifact.config = cfg;
    artifact.config_hash = cfg.content_hash();
    {
        auto out = open_out(out_dir / "config.json");
        out << cfg.to_json(overrides) << "\n";
        artifact.files.push_back(out_dir / "config.json");
    }
    if (cfg.is_demod_family()) {
        DemodCurveResult result = run_demod_curve(cfg);
        write_demod_outputs(cfg, result, out_dir, artifact);
    } else if (cfg.experiment == "eq_active_vs_passive") {
        ActiveCurveResult result = run_active_curve(cfg);
        write_active_outputs(cfg, result, out_dir, artifact);
    } else if (cfg.experiment == "eq_scoring_map") {
        write_scoring_map(cfg, out_dir, artifact);
    } else {
        throw std::invalid_argument("unknown experiment: " + cfg.experiment);
    }
    return artifact;
}

}  // namespace metarx
