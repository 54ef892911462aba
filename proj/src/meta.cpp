#include "metarx/meta.hpp"

#include <chrono>

namespace metarx {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<int> sample_batch(int t, int batch, RngStream& rng) {
    std::vector<int> idx(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (batch <= 0 || batch >= t) return idx;  // full batch, natural order
    // partial Fisher-Yates: first `batch` entries are a uniform subset
    for (int i = 0; i < batch; ++i) {
        int j = i + rng.uniform_int(t - i);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(batch));
    return idx;
}

// Random tr/te re-split of one frame's pooled samples, sizes preserved.
void resplit_frame(const FrameDataset& frame, RngStream& rng, std::vector<Sample>& tr,
                   std::vector<Sample>& te) {
    const std::size_t n_tr = frame.train.size();
    std::vector<const Sample*> pool;
    pool.reserve(n_tr + frame.test.size());
    for (const Sample& s : frame.train) pool.push_back(&s);
    for (const Sample& s : frame.test) pool.push_back(&s);
    rng.shuffle(pool.begin(), pool.end());
    tr.clear();
    te.clear();
    tr.reserve(n_tr);
    te.reserve(pool.size() - n_tr);
    for (std::size_t i = 0; i < pool.size(); ++i)
        (i < n_tr ? tr : te).push_back(*pool[i]);
}

// The equalizer's quadratic likelihood can spike the averaged meta-gradient
// on badly conditioned frames; rescaling to a bounded norm keeps plain SGD
// meta-updates finite without changing well-behaved steps.
void clip_norm(Eigen::VectorXd& g, double max_norm) {
    if (max_norm <= 0) return;
    const double n = g.norm();
    if (n > max_norm) g *= max_norm / n;
}

void check_frames(const std::vector<FrameDataset>& frames) {
    if (frames.empty()) throw std::invalid_argument("meta-training: no frames");
    for (const FrameDataset& f : frames)
        if (f.train.empty() || f.test.empty())
            throw std::invalid_argument("meta-training: every frame needs both splits nonempty");
}

}  // namespace

Hyperparams init_hyperparams(Hyperparams::Kind kind, const TaskModel& task, std::uint64_t seed,
                             double init_nu_std) {
    RngStream rng(seed, "xi_init");
    const int d = task.dim();
    Eigen::VectorXd nu(d);
    for (int i = 0; i < d; ++i) nu[i] = init_nu_std * rng.normal();
    if (kind == Hyperparams::Kind::Freq) return Hyperparams::freq(std::move(nu), task.shape);
    Eigen::VectorXd rho = Eigen::VectorXd::Constant(d, std::log(0.1));
    return Hyperparams::bayes(std::move(nu), std::move(rho), task.shape);
}

std::pair<Hyperparams, MetaTrace> freq_meta_train(const std::vector<FrameDataset>& frames,
                                                  const TaskModel& task,
                                                  const MetaTrainConfig& cfg,
                                                  std::optional<Hyperparams> initial) {
    check_frames(frames);
    Hyperparams xi = initial ? std::move(*initial)
                             : init_hyperparams(Hyperparams::Kind::Freq, task, cfg.seed,
                                                cfg.init_nu_std);
    if (xi.kind != Hyperparams::Kind::Freq)
        throw std::invalid_argument("freq_meta_train: checkpoint is not frequentist");
    const int d = task.dim();
    const int t = static_cast<int>(frames.size());
    MetaTrace trace;
    trace.reserve(static_cast<std::size_t>(cfg.meta_iters));
    RngStream batch_rng(cfg.seed, "meta_batch");
    Tape tape;
    for (int k = 0; k < cfg.meta_iters; ++k) {
        const auto t0 = Clock::now();
        const std::vector<int> batch = sample_batch(t, cfg.batch, batch_rng);
        Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(d);
        double w_sum = 0.0, loss_sum = 0.0;
        for (int tau : batch) {
            const FrameDataset& frame = frames[static_cast<std::size_t>(tau)];
            tape.clear();
            std::vector<Var> leaves;
            leaves.reserve(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) leaves.push_back(tape.leaf(xi.nu[i]));
            Vec<Var> theta = freq_adapt_graph(
                tape, std::span<const Var>(leaves.data(), leaves.size()), frame.train, task,
                cfg.eta, cfg.inner_steps, cfg.first_order);
            Var outer = train_log_loss<Var>(frame.test, as_span(theta), task);
            Eigen::VectorXd g = tape.gradient(outer, leaves);
            const double w = static_cast<double>(frame.test.size());
            g_sum += w * g;
            loss_sum += w * outer.value();
            w_sum += w;
        }
        Eigen::VectorXd g_mean = g_sum / w_sum;
        clip_norm(g_mean, cfg.grad_clip);
        xi.nu -= cfg.kappa * g_mean;
        trace.push_back({k, loss_sum / w_sum, hash_hyperparams(xi), ms_since(t0)});
    }
    return {std::move(xi), std::move(trace)};
}

std::pair<Hyperparams, MetaTrace> bayes_meta_train(const std::vector<FrameDataset>& frames,
                                                   const TaskModel& task,
                                                   const MetaTrainConfig& cfg,
                                                   std::optional<Hyperparams> initial) {
    check_frames(frames);
    Hyperparams xi = initial ? std::move(*initial)
                             : init_hyperparams(Hyperparams::Kind::Bayes, task, cfg.seed,
                                                cfg.init_nu_std);
    if (xi.kind != Hyperparams::Kind::Bayes)
        throw std::invalid_argument("bayes_meta_train: checkpoint is not Bayesian");
    const int d = task.dim();
    const int t = static_cast<int>(frames.size());
    MetaTrace trace;
    trace.reserve(static_cast<std::size_t>(cfg.meta_iters));
    RngStream batch_rng(cfg.seed, "meta_batch");
    Tape tape;
    std::vector<Sample> tr, te;
    for (int k = 0; k < cfg.meta_iters; ++k) {
        const auto t0 = Clock::now();
        const std::vector<int> batch = sample_batch(t, cfg.batch, batch_rng);
        Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(2 * d);
        double w_sum = 0.0, loss_sum = 0.0;
        for (int tau : batch) {
            const FrameDataset& frame = frames[static_cast<std::size_t>(tau)];
            const std::uint64_t step_index =
                static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(t) +
                static_cast<std::uint64_t>(tau);
            if (cfg.resplit) {
                RngStream split_rng(cfg.seed, "resplit", step_index);
                resplit_frame(frame, split_rng, tr, te);
            } else {
                tr = frame.train;
                te = frame.test;
            }
            RngStream inner_rng(cfg.seed, "inner_noise", step_index);
            tape.clear();
            std::vector<Var> leaves;
            leaves.reserve(static_cast<std::size_t>(2 * d));
            for (int i = 0; i < d; ++i) leaves.push_back(tape.leaf(xi.nu[i]));
            for (int i = 0; i < d; ++i) leaves.push_back(tape.leaf(xi.rho[i]));
            const std::span<const Var> nu_leaves(leaves.data(), static_cast<std::size_t>(d));
            const std::span<const Var> rho_leaves(leaves.data() + d, static_cast<std::size_t>(d));
            VarPosterior q = bayes_adapt_graph(tape, nu_leaves, rho_leaves, tr, task, cfg.eta,
                                               cfg.inner_steps, cfg.r_train, inner_rng,
                                               cfg.kl_coeff, cfg.first_order);
            // R-sample estimate of the test loss under the adapted posterior
            std::vector<Var> te_losses;
            te_losses.reserve(static_cast<std::size_t>(cfg.r_train));
            for (int r = 0; r < cfg.r_train; ++r) {
                Eigen::VectorXd noise(d);
                for (int i = 0; i < d; ++i) noise[i] = inner_rng.normal();
                Vec<Var> phi = reparametrize<Var>(as_span(q.nu), as_span(q.rho), noise);
                te_losses.push_back(train_log_loss<Var>(te, as_span(phi), task));
            }
            Var outer = sum(std::span<const Var>(te_losses.data(), te_losses.size())) *
                        Var(1.0 / cfg.r_train);
            Eigen::VectorXd g = tape.gradient(outer, leaves);
            const double w = static_cast<double>(te.size());
            g_sum += w * g;
            loss_sum += w * outer.value();
            w_sum += w;
        }
        Eigen::VectorXd g_mean = g_sum / w_sum;
        clip_norm(g_mean, cfg.grad_clip);
        for (int i = 0; i < d; ++i) {
            xi.nu[i] -= cfg.kappa * g_mean[i];
            xi.rho[i] = clamp_rho(xi.rho[i] - cfg.kappa * g_mean[d + i]);
        }
        trace.push_back({k, loss_sum / w_sum, hash_hyperparams(xi), ms_since(t0)});
    }
    return {std::move(xi), std::move(trace)};
}

MetaTestResult meta_test_eval(const Hyperparams& xi, const std::vector<FrameDataset>& frames,
                              const TaskModel& task, const MetaTestConfig& cfg) {
    if (xi.kind != cfg.mode)
        throw std::invalid_argument("meta_test_eval: checkpoint mode does not match the request");
    MetaTestResult out;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const FrameDataset& frame = frames[f];
        RngStream rng(cfg.seed, "metatest_frame", f);
        AdaptedModel adapted = metatest_adapt_burnin(frame.train, xi, task, cfg.burnin, rng);
        for (std::size_t i = 0; i < frame.test.size(); ++i) {
            const Sample& s = frame.test[i];
            if (task.kind == TaskKind::Demod) {
                Eigen::VectorXd probs;
                if (adapted.kind == Hyperparams::Kind::Freq) {
                    probs = demod_probs(s.y, adapted.point);
                } else {
                    probs = ensemble_predict(s.y, adapted.posterior, task, cfg.r_test, rng).probs;
                }
                int arg = 0;
                for (int j = 1; j < probs.size(); ++j)
                    if (probs[j] > probs[arg]) arg = j;
                out.demod.push_back({static_cast<int>(f), static_cast<int>(i), s.x_idx, arg,
                                     probs[arg]});
            } else {
                double mean;
                if (adapted.kind == Hyperparams::Kind::Freq) {
                    mean = adapted.point.theta.dot(s.y);
                } else {
                    mean = ensemble_predict(s.y, adapted.posterior, task, cfg.r_test, rng).mean;
                }
                out.eq.push_back({static_cast<int>(f), static_cast<int>(i),
                                  task.constellation.amplitude(s.x_idx), mean});
            }
        }
    }
    return out;
}

}  // namespace metarx
