#include <doctest.h>

#include "metarx/meta.hpp"

using namespace metarx;

namespace {

std::vector<FrameDataset> eq_frames(std::uint64_t seed, int t, int n_tr, int n_te, double snr) {
    const TaskModel task = TaskModel::equalizer(150.0);
    std::vector<FrameDataset> frames;
    for (int i = 0; i < t; ++i) {
        RngStream state_rng(seed, "state", static_cast<std::uint64_t>(i));
        RngStream frame_rng(seed, "frame", static_cast<std::uint64_t>(i));
        frames.push_back(generate_frame(sample_eq_state(state_rng), task.constellation, n_tr,
                                        n_te, snr, frame_rng));
    }
    return frames;
}

// a frame whose loss is the 1-D quadratic c + (phi0 - a)^2/2 (beta = 1)
FrameDataset quadratic_task(double a) {
    FrameDataset f;
    f.state = EqChannelState{Eigen::Vector2d(1.0, 0.0)};
    f.snr = 1.0;
    const Constellation pam = Constellation::pam4();
    // nearest PAM index; with a exactly on the grid the loss minimum is a
    int idx = 0;
    for (int i = 1; i < 4; ++i)
        if (std::abs(pam.amplitude(i) - a) < std::abs(pam.amplitude(idx) - a)) idx = i;
    Sample s{Eigen::Vector2d(1.0, 0.0), idx};
    f.train = {s};
    f.test = {s};
    return f;
}

}  // namespace

TEST_CASE("freq meta-training") {
    const TaskModel task = TaskModel::equalizer(1.0);

    SUBCASE("zero meta-iterations returns the initial hyperparameters") {
        std::vector<FrameDataset> frames = eq_frames(1, 4, 4, 4, 4.0);
        MetaTrainConfig cfg;
        cfg.mode = Hyperparams::Kind::Freq;
        cfg.meta_iters = 0;
        cfg.seed = 7;
        cfg.eta = 2e-3;
        Hyperparams xi = freq_meta_train(frames, task, cfg).first;
        Hyperparams expect = init_hyperparams(Hyperparams::Kind::Freq, task, 7, cfg.init_nu_std);
        CHECK(xi.nu == expect.nu);
    }
    SUBCASE("equal test sizes weight each frame by 1/B") {
        std::vector<FrameDataset> frames = eq_frames(2, 2, 4, 4, 4.0);
        MetaTrainConfig cfg;
        cfg.mode = Hyperparams::Kind::Freq;
        cfg.meta_iters = 1;
        cfg.batch = 0;
        cfg.eta = 2e-3;
        cfg.kappa = 0.1;
        cfg.seed = 3;
        Hyperparams xi0 = init_hyperparams(Hyperparams::Kind::Freq, task, 3, cfg.init_nu_std);
        Hyperparams xi = freq_meta_train(frames, task, cfg, xi0).first;

        // oracle: average the two per-frame meta-gradients computed one by one
        Eigen::VectorXd g_mean = Eigen::VectorXd::Zero(2);
        for (const FrameDataset& f : frames) {
            ad::Tape tape;
            std::vector<ad::Var> leaves = {tape.leaf(xi0.nu[0]), tape.leaf(xi0.nu[1])};
            Vec<ad::Var> theta = freq_adapt_graph(
                tape, std::span<const ad::Var>(leaves.data(), 2), f.train, task, cfg.eta, 2);
            ad::Var outer = train_log_loss<ad::Var>(f.test, as_span(theta), task);
            g_mean += tape.gradient(outer, leaves);
        }
        g_mean /= 2.0;
        const Eigen::VectorXd expect = xi0.nu - cfg.kappa * g_mean;
        CHECK((xi.nu - expect).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SUBCASE("synthetic quadratic family converges to the mean optimum") {
        const Constellation pam = Constellation::pam4();
        std::vector<FrameDataset> frames = {quadratic_task(pam.amplitude(0)),
                                            quadratic_task(pam.amplitude(3))};
        const double target =
            0.5 * (pam.amplitude(0) + pam.amplitude(3));  // = 0 by symmetry
        MetaTrainConfig cfg;
        cfg.mode = Hyperparams::Kind::Freq;
        cfg.batch = 0;
        cfg.inner_steps = 1;
        cfg.eta = 0.5;
        cfg.kappa = 0.5;
        cfg.meta_iters = 200;
        cfg.seed = 5;
        Hyperparams xi = freq_meta_train(frames, task, cfg).first;
        CHECK(std::abs(xi.nu[0] - target) <= 1e-2);
    }
    SUBCASE("kappa = 0 leaves xi bitwise fixed") {
        std::vector<FrameDataset> frames = eq_frames(4, 3, 4, 4, 4.0);
        MetaTrainConfig cfg;
        cfg.mode = Hyperparams::Kind::Freq;
        cfg.meta_iters = 5;
        cfg.kappa = 0.0;
        cfg.eta = 2e-3;
        cfg.seed = 11;
        auto [xi, trace] = freq_meta_train(frames, task, cfg);
        Hyperparams expect = init_hyperparams(Hyperparams::Kind::Freq, task, 11, cfg.init_nu_std);
        CHECK(xi.nu == expect.nu);
        CHECK(trace.size() == 5);
        for (const MetaTraceRow& row : trace) CHECK(row.xi_hash == trace[0].xi_hash);
    }
    SUBCASE("full-batch runs are bitwise reproducible") {
        std::vector<FrameDataset> frames = eq_frames(6, 3, 4, 4, 4.0);
        MetaTrainConfig cfg;
        cfg.mode = Hyperparams::Kind::Freq;
        cfg.meta_iters = 3;
        cfg.batch = 0;
        cfg.eta = 2e-3;
        cfg.kappa = 1e-2;
        cfg.seed = 13;
        Hyperparams a = freq_meta_train(frames, task, cfg).first;
        Hyperparams b = freq_meta_train(frames, task, cfg).first;
        CHECK(a.nu == b.nu);
    }
}

TEST_CASE("bayes meta-training") {
    const TaskModel task = TaskModel::equalizer(150.0);

    SUBCASE("zero meta-iterations returns the initial prior with matching dims") {
        std::vector<FrameDataset> frames = eq_frames(21, 4, 4, 4, 4.0);
        MetaTrainConfig cfg;
        cfg.mode = Hyperparams::Kind::Bayes;
        cfg.meta_iters = 0;
        cfg.eta = 2e-3;
        cfg.seed = 17;
        Hyperparams xi = bayes_meta_train(frames, task, cfg).first;
        CHECK(xi.nu.size() == 2);
        CHECK(xi.rho.size() == 2);
        Hyperparams expect = init_hyperparams(Hyperparams::Kind::Bayes, task, 17, cfg.init_nu_std);
        CHECK(xi.nu == expect.nu);
        CHECK(xi.rho == expect.rho);
    }
    SUBCASE("meta-training beats a random prior on held-out frames") {
        const double snr = std::pow(10.0, 0.6);  // 6 dB
        int wins = 0;
        const int trials = 20;
        for (int trial = 0; trial < trials; ++trial) {
            const std::uint64_t seed = derive_seed(900, "trial", trial);
            std::vector<FrameDataset> frames = eq_frames(seed, 20, 4, 4, snr);
            std::vector<FrameDataset> held_out = eq_frames(derive_seed(seed, "held"), 10, 4,
                                                           200, snr);
            MetaTrainConfig cfg;
            cfg.mode = Hyperparams::Kind::Bayes;
            cfg.batch = 0;
            cfg.inner_steps = 2;
            cfg.eta = 2e-3;
            cfg.kappa = 5e-2;
            cfg.r_train = 10;
            cfg.kl_coeff = 1.0;
            cfg.meta_iters = 50;
            cfg.seed = seed;
            cfg.init_nu_std = 1.0;
            Hyperparams trained = bayes_meta_train(frames, task, cfg).first;
            Hyperparams random_xi =
                init_hyperparams(Hyperparams::Kind::Bayes, task, derive_seed(seed, "rand"), 1.0);

            MetaTestConfig tc;
            tc.mode = Hyperparams::Kind::Bayes;
            tc.burnin.eta = cfg.eta;
            tc.burnin.steps = 2;
            tc.burnin.steps_star = 2;
            tc.burnin.n_tr = 4;
            tc.burnin.ensemble = 10;
            tc.burnin.kl_coeff = 1.0;
            tc.r_test = 20;
            tc.seed = derive_seed(seed, "eval");
            auto mse_of = [&](const Hyperparams& xi) {
                MetaTestResult r = meta_test_eval(xi, held_out, task, tc);
                double acc = 0.0;
                for (const EqPrediction& p : r.eq) {
                    const double d = p.pred_mean - p.truth;
                    acc += d * d;
                }
                return acc / static_cast<double>(r.eq.size());
            };
            if (mse_of(trained) < mse_of(random_xi)) ++wins;
        }
        CHECK(wins >= 18);  // >= 90% of 20 seeds
    }
}

TEST_CASE("meta-test evaluation") {
    const TaskModel task = TaskModel::equalizer(150.0);
    std::vector<FrameDataset> frames = eq_frames(31, 3, 4, 50, 4.0);

    SUBCASE("mode mismatch is rejected") {
        Hyperparams xi = Hyperparams::freq(Eigen::Vector2d(0.1, 0.1), task.shape);
        MetaTestConfig tc;
        tc.mode = Hyperparams::Kind::Bayes;
        CHECK_THROWS_AS((void)meta_test_eval(xi, frames, task, tc), std::invalid_argument);
    }
    SUBCASE("degenerate Bayesian checkpoint reproduces frequentist predictions") {
        const Eigen::Vector2d init(0.4, -0.1);
        Hyperparams xi_f = Hyperparams::freq(init, task.shape);
        Hyperparams xi_b = Hyperparams::bayes(init, Eigen::Vector2d::Constant(2, -1000.0),
                                              task.shape);
        MetaTestConfig tc;
        tc.burnin.eta = 2e-3;
        tc.burnin.steps = 2;
        tc.burnin.steps_star = 2;
        tc.burnin.n_tr = 4;
        tc.burnin.ensemble = 8;
        tc.burnin.kl_coeff = 0.0;  // a collapsed prior would otherwise dominate the update
        tc.r_test = 8;
        tc.seed = 77;
        tc.mode = Hyperparams::Kind::Freq;
        MetaTestResult rf = meta_test_eval(xi_f, frames, task, tc);
        tc.mode = Hyperparams::Kind::Bayes;
        MetaTestResult rb = meta_test_eval(xi_b, frames, task, tc);
        REQUIRE(rf.eq.size() == rb.eq.size());
        for (std::size_t i = 0; i < rf.eq.size(); ++i)
            CHECK(std::abs(rf.eq[i].pred_mean - rb.eq[i].pred_mean) <= 1e-6);
    }
    SUBCASE("demod predictions carry confidences and hard decisions") {
        const TaskModel dt = TaskModel::demod();
        std::vector<FrameDataset> dframes;
        RngStream state_rng(41, "state");
        RngStream frame_rng(41, "frame");
        dframes.push_back(generate_frame(sample_demod_state(state_rng), dt.constellation, 8, 20,
                                         63.0, frame_rng));
        Hyperparams xi = init_hyperparams(Hyperparams::Kind::Freq, dt, 5, 0.1);
        MetaTestConfig tc;
        tc.mode = Hyperparams::Kind::Freq;
        tc.burnin.eta = 0.1;
        tc.burnin.steps = 2;
        tc.burnin.steps_star = 20;
        tc.burnin.n_tr = 4;
        tc.seed = 3;
        MetaTestResult r = meta_test_eval(xi, dframes, dt, tc);
        CHECK(r.demod.size() == 20);
        for (const DemodPrediction& p : r.demod) {
            CHECK(p.confidence > 0.0);
            CHECK(p.confidence <= 1.0);
            CHECK(p.pred_idx >= 0);
            CHECK(p.pred_idx < 16);
        }
    }
}
