#include "metarx/adaptation.hpp"

namespace metarx {

namespace {

// Rethrows tape numeric failures with the descent step attached.
template <class F>
auto at_step(int step, F&& f) {
    try {
        return f();
    } catch (const ad::NumericError& e) {
        throw ad::NumericError(std::string(e.what()) + " (adaptation step " +
                                   std::to_string(step) + ")",
                               e.node);
    }
}

std::vector<Var> to_vars(std::span<const Var> xs) { return {xs.begin(), xs.end()}; }

// Value-mode descent on the estimated free energy, starting from an
// arbitrary posterior (bayes_adapt starts from the prior; burn-in phase two
// continues from the phase-one posterior at a reduced rate).
VariationalParams bayes_descend(VariationalParams q, const VariationalParams& prior,
                                const std::vector<Sample>& train, const TaskModel& task,
                                double eta, int steps, int ensemble, RngStream& rng,
                                double kl_coeff) {
    if (eta <= 0) throw std::invalid_argument("bayes_adapt: eta must be positive");
    if (train.empty() || steps == 0) return q;
    const auto d = q.dim();
    const double step_scale = eta / static_cast<double>(train.size());
    Tape tape;
    for (int s = 0; s < steps; ++s) {
        tape.clear();
        std::vector<Var> leaves;
        leaves.reserve(static_cast<std::size_t>(2 * d));
        for (Eigen::Index i = 0; i < d; ++i) leaves.push_back(tape.leaf(q.nu[i]));
        for (Eigen::Index i = 0; i < d; ++i) leaves.push_back(tape.leaf(q.rho[i]));
        std::vector<Var> p_nu, p_rho;
        p_nu.reserve(static_cast<std::size_t>(d));
        p_rho.reserve(static_cast<std::size_t>(d));
        for (Eigen::Index i = 0; i < d; ++i) p_nu.emplace_back(prior.nu[i]);
        for (Eigen::Index i = 0; i < d; ++i) p_rho.emplace_back(prior.rho[i]);
        Eigen::VectorXd g = at_step(s, [&] {
            Var fe = free_energy_graph(
                tape, train, task,
                std::span<const Var>(leaves.data(), static_cast<std::size_t>(d)),
                std::span<const Var>(leaves.data() + d, static_cast<std::size_t>(d)),
                std::span<const Var>(p_nu.data(), p_nu.size()),
                std::span<const Var>(p_rho.data(), p_rho.size()), ensemble, rng, kl_coeff);
            return tape.gradient(fe, leaves);
        });
        for (Eigen::Index i = 0; i < d; ++i) {
            q.nu[i] -= step_scale * g[i];
            q.rho[i] = clamp_rho(q.rho[i] - step_scale * g[d + i]);
        }
    }
    return q;
}

}  // namespace

Vec<Var> freq_adapt_graph(Tape& tape, std::span<const Var> init,
                          const std::vector<Sample>& train, const TaskModel& task, double eta,
                          int steps, bool first_order) {
    if (eta <= 0) throw std::invalid_argument("freq_adapt: eta must be positive");
    if (steps < 0) throw std::invalid_argument("freq_adapt: negative step count");
    Vec<Var> theta(static_cast<Eigen::Index>(init.size()));
    for (std::size_t i = 0; i < init.size(); ++i) theta[static_cast<Eigen::Index>(i)] = init[i];
    if (train.empty()) return theta;
    for (int s = 0; s < steps; ++s) {
        at_step(s, [&] {
            Var loss = train_log_loss<Var>(train, as_span(theta), task);
            std::vector<Var> leaves = to_vars(as_span(theta));
            std::vector<Var> g = tape.gradient_nodes(loss, leaves);
            for (Eigen::Index i = 0; i < theta.size(); ++i) {
                if (first_order)
                    theta[i] = tape.addc(theta[i], -eta * g[i].value());
                else
                    theta[i] = tape.sub(theta[i], tape.mulc(g[i], eta));
            }
            return 0;
        });
    }
    return theta;
}

Var free_energy_graph([[maybe_unused]] Tape& tape, const std::vector<Sample>& train,
                      const TaskModel& task, std::span<const Var> q_nu,
                      std::span<const Var> q_rho, std::span<const Var> p_nu,
                      std::span<const Var> p_rho, int ensemble, RngStream& rng,
                      double kl_coeff) {
    if (ensemble < 1) throw std::invalid_argument("free_energy: R must be >= 1");
    if (kl_coeff < 0) throw std::invalid_argument("free_energy: negative KL coefficient");
    const auto d = static_cast<Eigen::Index>(q_nu.size());
    const double n = static_cast<double>(train.size());
    std::vector<Var> sample_losses;
    sample_losses.reserve(static_cast<std::size_t>(ensemble));
    for (int r = 0; r < ensemble; ++r) {
        Eigen::VectorXd noise(d);
        for (Eigen::Index i = 0; i < d; ++i) noise[i] = rng.normal();
        Vec<Var> phi = reparametrize<Var>(q_nu, q_rho, noise);
        sample_losses.push_back(train_log_loss<Var>(train, as_span(phi), task));
    }
    Var l_hat = sum(std::span<const Var>(sample_losses.data(), sample_losses.size())) *
                Var(1.0 / ensemble);
    Var fe = l_hat * Var(n);
    if (kl_coeff > 0) {
        Var kl = kl_gaussians<Var>(q_nu, q_rho, p_nu, p_rho);
        fe = fe + kl * Var(kl_coeff);
    }
    return fe;
}

VarPosterior bayes_adapt_graph(Tape& tape, std::span<const Var> prior_nu,
                               std::span<const Var> prior_rho, const std::vector<Sample>& train,
                               const TaskModel& task, double eta, int steps, int ensemble,
                               RngStream& rng, double kl_coeff, bool first_order) {
    if (eta <= 0) throw std::invalid_argument("bayes_adapt: eta must be positive");
    if (steps < 0) throw std::invalid_argument("bayes_adapt: negative step count");
    const auto d = static_cast<Eigen::Index>(prior_nu.size());
    VarPosterior q;
    q.nu.resize(d);
    q.rho.resize(d);
    // q(0) copies the prior; distinct nodes keep the inner gradient w.r.t.
    // q separate from the prior's role inside the KL regularizer.
    for (Eigen::Index i = 0; i < d; ++i) {
        q.nu[i] = tape.identity(prior_nu[i]);
        q.rho[i] = tape.identity(prior_rho[i]);
    }
    if (train.empty() || steps == 0) return q;
    const double step_scale = eta / static_cast<double>(train.size());
    for (int s = 0; s < steps; ++s) {
        at_step(s, [&] {
            Var fe = free_energy_graph(tape, train, task, as_span(q.nu), as_span(q.rho),
                                       prior_nu, prior_rho, ensemble, rng, kl_coeff);
            std::vector<Var> leaves = to_vars(as_span(q.nu));
            for (Eigen::Index i = 0; i < d; ++i) leaves.push_back(q.rho[i]);
            std::vector<Var> g = tape.gradient_nodes(fe, leaves);
            for (Eigen::Index i = 0; i < d; ++i) {
                if (first_order) {
                    q.nu[i] = tape.addc(q.nu[i], -step_scale * g[i].value());
                    q.rho[i] = tape.addc(q.rho[i], -step_scale * g[d + i].value());
                } else {
                    q.nu[i] = tape.sub(q.nu[i], tape.mulc(g[i], step_scale));
                    q.rho[i] = tape.sub(q.rho[i], tape.mulc(g[d + i], step_scale));
                }
                q.rho[i] = tape.clamp(q.rho[i], kRhoMin, kRhoMax);
            }
            return 0;
        });
    }
    return q;
}

ModelParams freq_adapt(const std::vector<Sample>& train, const Eigen::VectorXd& init,
                       const TaskModel& task, double eta, int steps) {
    if (eta <= 0) throw std::invalid_argument("freq_adapt: eta must be positive");
    ModelParams params{init, task.shape};
    if (train.empty()) return params;
    Tape tape;
    for (int s = 0; s < steps; ++s) {
        tape.clear();
        std::vector<Var> leaves;
        leaves.reserve(static_cast<std::size_t>(params.theta.size()));
        for (Eigen::Index i = 0; i < params.theta.size(); ++i)
            leaves.push_back(tape.leaf(params.theta[i]));
        Eigen::VectorXd g = at_step(s, [&] {
            Var loss = train_log_loss<Var>(
                train, std::span<const Var>(leaves.data(), leaves.size()), task);
            return tape.gradient(loss, leaves);
        });
        params.theta -= eta * g;
    }
    return params;
}

double free_energy_estimate(const std::vector<Sample>& train, const VariationalParams& q,
                            const VariationalParams& prior, const TaskModel& task, int ensemble,
                            RngStream& rng, double kl_coeff) {
    if (ensemble < 1) throw std::invalid_argument("free_energy: R must be >= 1");
    double acc = 0.0;
    for (int r = 0; r < ensemble; ++r) {
        Eigen::VectorXd noise(q.dim());
        for (Eigen::Index i = 0; i < q.dim(); ++i) noise[i] = rng.normal();
        Eigen::VectorXd phi = reparametrize(q, noise);
        acc += train_log_loss(train, ModelParams{phi, task.shape}, task);
    }
    const double l_hat = acc / ensemble;
    double fe = l_hat * static_cast<double>(train.size());
    if (kl_coeff > 0) fe += kl_coeff * kl_gaussians(q, prior);
    return fe;
}

VariationalParams bayes_adapt(const std::vector<Sample>& train, const VariationalParams& prior,
                              const TaskModel& task, double eta, int steps, int ensemble,
                              RngStream& rng, double kl_coeff) {
    return bayes_descend(prior, prior, train, task, eta, steps, ensemble, rng, kl_coeff);
}

AdaptedModel metatest_adapt_burnin(const std::vector<Sample>& pilots, const Hyperparams& xi,
                                   const TaskModel& task, const BurninOptions& opt,
                                   RngStream& rng) {
    const int n_star = static_cast<int>(pilots.size());
    if (n_star < opt.n_tr)
        throw std::invalid_argument("burn-in: fewer pilots than the phase-one subset size");
    if (opt.steps_star < opt.steps)
        throw std::invalid_argument("burn-in: I_star must be at least I");

    // phase (i) subset: first n_tr of the seeded pilot shuffle
    std::vector<int> order(pilots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order.begin(), order.end());
    std::vector<Sample> subset;
    subset.reserve(static_cast<std::size_t>(opt.n_tr));
    for (int i = 0; i < opt.n_tr; ++i) subset.push_back(pilots[order[i]]);

    const double eta_slow = 0.05 * opt.eta;
    AdaptedModel result;
    result.kind = xi.kind;
    if (xi.kind == Hyperparams::Kind::Freq) {
        ModelParams phi = freq_adapt(subset, xi.nu, task, opt.eta, opt.steps);
        if (opt.steps_star > opt.steps)
            phi = freq_adapt(pilots, phi.theta, task, eta_slow, opt.steps_star - opt.steps);
        result.point = std::move(phi);
    } else {
        VariationalParams prior = xi.as_variational();
        VariationalParams q =
            bayes_adapt(subset, prior, task, opt.eta, opt.steps, opt.ensemble, rng, opt.kl_coeff);
        if (opt.steps_star > opt.steps)
            q = bayes_descend(std::move(q), prior, pilots, task, eta_slow,
                              opt.steps_star - opt.steps, opt.ensemble, rng, opt.kl_coeff);
        result.posterior = std::move(q);
    }
    return result;
}

}  // namespace metarx
