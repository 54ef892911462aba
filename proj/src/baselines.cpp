#include "metarx/baselines.hpp"

namespace metarx {

ModelParams conventional_learn(const std::vector<Sample>& pilots, const TaskModel& task,
                               const ConventionalOptions& opt) {
    RngStream rng(opt.seed, "conventional_init");
    const int d = task.dim();
    Eigen::VectorXd init(d);
    for (int i = 0; i < d; ++i) init[i] = opt.init_std * rng.normal();
    if (pilots.empty()) return ModelParams{std::move(init), task.shape};
    return freq_adapt(pilots, init, task, opt.eta, opt.steps);
}

std::complex<double> lmmse_channel_estimate(const std::vector<Sample>& pilots, double snr,
                                            const Constellation& constellation) {
    if (pilots.empty()) throw std::invalid_argument("lmmse: at least one pilot required");
    std::complex<double> num{0.0, 0.0};
    double den = 1.0 / snr;  // unit-energy channel prior
    for (const Sample& s : pilots) {
        const std::complex<double> x = constellation.point(s.x_idx);
        const std::complex<double> y{s.y[0], s.y[1]};
        num += std::conj(x) * y;
        den += std::norm(x);
    }
    return num / den;
}

std::vector<LmmseDecision> lmmse_ml_demod(const std::vector<Sample>& pilots,
                                          const std::vector<Eigen::Vector2d>& payload_y,
                                          double snr, const Constellation& constellation) {
    const std::complex<double> h_hat = lmmse_channel_estimate(pilots, snr, constellation);
    std::vector<LmmseDecision> out;
    out.reserve(payload_y.size());
    const int k = constellation.size();
    std::vector<double> loglik(static_cast<std::size_t>(k));
    for (const Eigen::Vector2d& yv : payload_y) {
        const std::complex<double> y{yv[0], yv[1]};
        for (int j = 0; j < k; ++j)
            loglik[static_cast<std::size_t>(j)] = -snr * std::norm(y - h_hat * constellation.point(j));
        int arg = 0;
        double m = loglik[0];
        for (int j = 1; j < k; ++j)
            if (loglik[static_cast<std::size_t>(j)] > m) {
                m = loglik[static_cast<std::size_t>(j)];
                arg = j;
            }
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(loglik[static_cast<std::size_t>(j)] - m);
        out.push_back({arg, 1.0 / z});
    }
    return out;
}

}  // namespace metarx
