#pragma once

#include <functional>
#include <span>
#include <stdexcept>

#include "metarx/model.hpp"
#include "metarx/rng.hpp"

namespace metarx {

// Gaussian mean-field posterior: mean nu, log standard deviations rho.
struct VariationalParams {
    Eigen::VectorXd nu;
    Eigen::VectorXd rho;

    Eigen::Index dim() const { return nu.size(); }
};

// Shared knowledge carried across frames: either a GD initialization vector
// (frequentist) or a Gaussian prior (Bayesian).
struct Hyperparams {
    enum class Kind { Freq, Bayes };
    Kind kind = Kind::Freq;
    Eigen::VectorXd nu;   // Freq: the initialization; Bayes: prior mean
    Eigen::VectorXd rho;  // Bayes only
    ModelShape shape;

    static Hyperparams freq(Eigen::VectorXd init, ModelShape shape) {
        return {Kind::Freq, std::move(init), {}, std::move(shape)};
    }
    static Hyperparams bayes(Eigen::VectorXd nu, Eigen::VectorXd rho, ModelShape shape) {
        return {Kind::Bayes, std::move(nu), std::move(rho), std::move(shape)};
    }

    VariationalParams as_variational() const {
        if (kind != Kind::Bayes) throw std::logic_error("hyperparams are not Bayesian");
        return {nu, rho};
    }
};

// rho is clamped to this range before exponentiation everywhere the
// posterior is sampled or updated.
constexpr double kRhoMin = -30.0;
constexpr double kRhoMax = 5.0;

inline double clamp_rho(double r) { return std::min(std::max(r, kRhoMin), kRhoMax); }

// KL(q || p) between diagonal Gaussians, in closed form:
// (1/2) sum_d [ 2(rho_p - rho_q) + (exp(2 rho_q) + (nu_q - nu_p)^2) exp(-2 rho_p) - 1 ]
template <class S>
S kl_gaussians(std::span<const S> nu_q, std::span<const S> rho_q, std::span<const S> nu_p,
               std::span<const S> rho_p) {
    const std::size_t d = nu_q.size();
    if (rho_q.size() != d || nu_p.size() != d || rho_p.size() != d)
        throw std::invalid_argument("kl_gaussians: dimension mismatch");
    using std::exp;
    using ad::exp;
    std::vector<S> terms;
    terms.reserve(d);
    // variance ratio written as exp(2(rho_q - rho_p)) so KL(q, q) is exactly 0
    for (std::size_t i = 0; i < d; ++i) {
        S dr = rho_p[i] - rho_q[i];
        S mean_gap = nu_q[i] - nu_p[i];
        S ratio = exp((rho_q[i] - rho_p[i]) * S(2.0)) +
                  mean_gap * mean_gap * exp(rho_p[i] * S(-2.0));
        terms.push_back(dr * S(2.0) + ratio + S(-1.0));
    }
    S total = sum(std::span<const S>(terms.data(), terms.size()));
    return total * S(0.5);
}

inline double kl_gaussians(const VariationalParams& q, const VariationalParams& p) {
    return kl_gaussians<double>(as_span<double>(q.nu), as_span<double>(q.rho),
                                as_span<double>(p.nu), as_span<double>(p.rho));
}

// phi = nu + exp(clamp(rho)) .* e with e ~ N(0, I)
inline Eigen::VectorXd sample_params(const VariationalParams& q, RngStream& rng) {
    Eigen::VectorXd phi(q.dim());
    for (Eigen::Index i = 0; i < q.dim(); ++i)
        phi[i] = q.nu[i] + std::exp(clamp_rho(q.rho[i])) * rng.normal();
    return phi;
}

// The same map for a fixed noise vector (differentiable in nu, rho).
template <class S>
Vec<S> reparametrize(std::span<const S> nu, std::span<const S> rho,
                     const Eigen::VectorXd& noise) {
    using std::exp;
    using ad::exp;
    using ad::Var;
    Vec<S> phi(static_cast<Eigen::Index>(nu.size()));
    for (std::size_t i = 0; i < nu.size(); ++i) {
        S r = rho[i];
        if constexpr (std::is_same_v<S, ad::Var>) {
            if (r.tape()) r = r.tape()->clamp(r, kRhoMin, kRhoMax);
            else r = S(clamp_rho(r.value()));
        } else {
            r = clamp_rho(r);
        }
        phi[static_cast<Eigen::Index>(i)] = nu[i] + exp(r) * S(noise[static_cast<Eigen::Index>(i)]);
    }
    return phi;
}

inline Eigen::VectorXd reparametrize(const VariationalParams& q, const Eigen::VectorXd& noise) {
    Vec<double> phi = reparametrize<double>(as_span<double>(q.nu), as_span<double>(q.rho), noise);
    return phi;
}

// Monte Carlo estimate of E_q[G(phi)] with R reparametrized draws.
double estimate_expectation(const std::function<double(const Eigen::VectorXd&)>& g,
                            const VariationalParams& q, int ensemble_size, RngStream& rng);

// Ensemble outputs. For the demodulator: the averaged class-probability
// vector. For the equalizer: the mixture mean and the mixture's variance
// (component variance 1/beta plus the spread of the component means).
struct EnsemblePrediction {
    Eigen::VectorXd probs;  // demod
    double mean = 0.0;      // equalizer
    double variance = 0.0;  // equalizer
};

EnsemblePrediction ensemble_predict(const Eigen::Vector2d& y, const VariationalParams& q,
                                    const TaskModel& task, int ensemble_size, RngStream& rng);

}  // namespace metarx
