#include "metarx/active.hpp"

#include "metarx/metrics.hpp"

namespace metarx {

namespace {

double log_gaussian(const Eigen::VectorXd& phi, const VariationalParams& q) {
    double acc = -0.5 * std::log(2.0 * M_PI) * static_cast<double>(q.dim());
    for (Eigen::Index i = 0; i < q.dim(); ++i) {
        const double gap = phi[i] - q.nu[i];
        acc += -q.rho[i] - 0.5 * gap * gap * std::exp(-2.0 * q.rho[i]);
    }
    return acc;
}

}  // namespace

double score(const Eigen::VectorXd& phi, const std::vector<VariationalParams>& posts) {
    if (posts.empty()) throw std::invalid_argument("score: no posteriors");
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> lq(posts.size());
    for (std::size_t i = 0; i < posts.size(); ++i) {
        lq[i] = log_gaussian(phi, posts[i]);
        m = std::max(m, lq[i]);
    }
    double s = 0.0;
    for (double v : lq) s += std::exp(v - m);
    const double lse = m + std::log(s);
    return std::log(static_cast<double>(posts.size())) - lse;
}

Eigen::VectorXd score_grad(const Eigen::VectorXd& phi,
                           const std::vector<VariationalParams>& posts) {
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> lq(posts.size());
    for (std::size_t i = 0; i < posts.size(); ++i) {
        lq[i] = log_gaussian(phi, posts[i]);
        m = std::max(m, lq[i]);
    }
    double z = 0.0;
    for (double v : lq) z += std::exp(v - m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(phi.size());
    for (std::size_t i = 0; i < posts.size(); ++i) {
        const double w = std::exp(lq[i] - m) / z;
        for (Eigen::Index d = 0; d < phi.size(); ++d)
            g[d] += w * (phi[d] - posts[i].nu[d]) * std::exp(-2.0 * posts[i].rho[d]);
    }
    return g;
}

Eigen::Vector2d select_next_param(const std::vector<VariationalParams>& posts,
                                  const SelectOptions& opt) {
    if (posts.empty()) throw std::invalid_argument("select_next_param: no posteriors");
    for (const VariationalParams& q : posts)
        if (q.dim() != 2)
            throw std::invalid_argument("select_next_param: expects the 2-parameter model");

    Eigen::Vector2d best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < opt.n_angle; ++k) {
        const double ang = 2.0 * M_PI * k / opt.n_angle;
        const double ca = std::cos(ang), sa = std::sin(ang);
        for (int j = 0; j < opt.n_radius; ++j) {
            const double r = static_cast<double>(j + 1) / opt.n_radius;
            Eigen::Vector2d phi(r * ca, r * sa);
            const double s = score(phi, posts);
            if (s > best_score) {  // strict: ties keep the smaller angle/radius
                best_score = s;
                best = phi;
            }
        }
    }

    // projected gradient ascent with backtracking; never returns anything
    // scoring below the grid optimum
    Eigen::Vector2d x = best;
    double step = opt.refine_step_size;
    for (int it = 0; it < opt.refine_steps; ++it) {
        Eigen::Vector2d cand = x + step * score_grad(x, posts);
        const double norm = cand.norm();
        if (norm > 1.0) cand /= norm;
        const double s = score(cand, posts);
        if (s > best_score) {
            best_score = s;
            best = cand;
            x = cand;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    return best;
}

EqChannelState invert_channel_equalizer(const Eigen::Vector2d& phi) {
    const double n2 = phi.squaredNorm();
    if (std::sqrt(n2) <= 1e-9)
        throw std::invalid_argument("invert_channel_equalizer: degenerate parameter vector");
    EqChannelState state;
    state.c = phi / n2;
    return state;
}

EqChannelState invert_channel_sgd(const Eigen::Vector2d& phi, double snr, double beta,
                                  RngStream& rng, int steps, double lr) {
    const Constellation pam = Constellation::pam4();
    const double sigma = std::sqrt(0.5 / snr);
    Eigen::Vector2d c(rng.normal(), rng.normal());
    for (int i = 0; i < steps; ++i) {
        const double x = pam.amplitude(rng.uniform_int(pam.size()));
        const Eigen::Vector2d z(sigma * rng.normal(), sigma * rng.normal());
        const double resid = x - phi.dot(c * x + z);
        // d/dc of beta/2 * resid^2
        c -= lr * (-beta * resid * x) * phi;
    }
    return EqChannelState{c};
}

ActiveResult active_loop(const ActiveConfig& cfg, const TaskModel& task,
                         const std::vector<FrameDataset>& eval_frames) {
    if (cfg.t_init < 1) throw std::invalid_argument("active_loop: t_init must be >= 1");
    if (cfg.budget < cfg.t_init)
        throw std::invalid_argument("active_loop: budget below t_init");

    ActiveResult out;
    RngStream state_rng(cfg.seed, "channel_prior");
    auto make_frame = [&](const ChannelState& state, int index) {
        RngStream frame_rng(cfg.seed, "frame", static_cast<std::uint64_t>(index));
        return generate_frame(state, task.constellation, cfg.n_tr, cfg.n_te, cfg.snr, frame_rng);
    };

    for (int i = 0; i < cfg.t_init; ++i)
        out.frames.push_back(make_frame(sample_eq_state(state_rng), i));

    auto train_round = [&](int t) {
        MetaTrainConfig mc = cfg.meta;
        mc.mode = Hyperparams::Kind::Bayes;
        mc.batch = 0;  // full batch over the available frames
        mc.seed = derive_seed(cfg.seed, "round_xi", static_cast<std::uint64_t>(t));
        return bayes_meta_train(out.frames, task, mc).first;
    };
    auto snapshot_mse = [&](const Hyperparams& xi) {
        MetaTestConfig ec = cfg.eval;
        ec.mode = Hyperparams::Kind::Bayes;
        MetaTestResult r = meta_test_eval(xi, eval_frames, task, ec);
        std::vector<double> pred, truth;
        pred.reserve(r.eq.size());
        truth.reserve(r.eq.size());
        for (const EqPrediction& p : r.eq) {
            pred.push_back(p.pred_mean);
            truth.push_back(p.truth);
        }
        return mse(pred, truth);
    };

    while (static_cast<int>(out.frames.size()) < cfg.budget) {
        const int t = static_cast<int>(out.frames.size());
        Hyperparams xi = train_round(t);
        const double mse_now = snapshot_mse(xi);
        out.mse_curve.push_back(mse_now);

        AcquisitionRound round;
        round.t = t;
        round.meta_test_mse = mse_now;
        if (cfg.active) {
            // re-adapt every frame's posterior under the fresh prior
            std::vector<VariationalParams> posts;
            posts.reserve(out.frames.size());
            VariationalParams prior = xi.as_variational();
            for (std::size_t tau = 0; tau < out.frames.size(); ++tau) {
                RngStream rng(cfg.seed, "readapt",
                              static_cast<std::uint64_t>(t) * 1024 + tau);
                posts.push_back(bayes_adapt(out.frames[tau].train, prior, task, cfg.meta.eta,
                                            cfg.meta.inner_steps, cfg.meta.r_train, rng,
                                            cfg.meta.kl_coeff));
            }
            Eigen::Vector2d phi = select_next_param(posts, cfg.select);
            round.phi_next = phi;
            round.score_value = score(phi, posts);
            round.c_next = invert_channel_equalizer(phi).c;
        } else {
            EqChannelState drawn = sample_eq_state(state_rng);
            round.c_next = drawn.c;
            round.phi_next = Eigen::Vector2d::Zero();
            round.score_value = std::numeric_limits<double>::quiet_NaN();
        }
        out.frames.push_back(make_frame(EqChannelState{round.c_next}, t));
        out.history.push_back(round);
    }

    out.xi = train_round(cfg.budget);
    out.mse_curve.push_back(snapshot_mse(out.xi));
    return out;
}

}  // namespace metarx
