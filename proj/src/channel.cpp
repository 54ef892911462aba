#include "metarx/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace metarx {

DemodChannelState sample_demod_state(RngStream& rng) {
    DemodChannelState s;
    s.eps = kMaxEps * rng.beta_int(5, 2);
    s.delta = kMaxDeltaRad * rng.beta_int(5, 2);
    s.h = std::complex<double>(rng.normal(), rng.normal()) / std::sqrt(2.0);
    return s;
}

EqChannelState sample_eq_state(RngStream& rng) {
    EqChannelState s;
    s.c = Eigen::Vector2d(rng.normal(), rng.normal());
    return s;
}

std::complex<double> apply_iq_imbalance(std::complex<double> x, double eps, double delta) {
    const double cd = std::cos(delta), sd = std::sin(delta);
    const double xi = x.real(), xq = x.imag();
    return {(1.0 + eps) * (cd * xi - sd * xq), (1.0 - eps) * (-sd * xi + cd * xq)};
}

std::complex<double> demod_channel(std::complex<double> x, const DemodChannelState& state,
                                   double snr, RngStream& rng, bool noiseless) {
    if (snr <= 0) throw std::invalid_argument("demod_channel: snr must be positive");
    std::complex<double> y = state.h * apply_iq_imbalance(x, state.eps, state.delta);
    if (!noiseless) {
        const double sigma = std::sqrt(0.5 / snr);  // per real component
        y += std::complex<double>(sigma * rng.normal(), sigma * rng.normal());
    }
    return y;
}

Eigen::Vector2d eq_channel(double x, const EqChannelState& state, double snr, RngStream& rng,
                           bool noiseless) {
    if (snr <= 0) throw std::invalid_argument("eq_channel: snr must be positive");
    Eigen::Vector2d y = state.c * x;
    if (!noiseless) {
        const double sigma = std::sqrt(0.5 / snr);
        y[0] += sigma * rng.normal();
        y[1] += sigma * rng.normal();
    }
    return y;
}

FrameDataset generate_frame(const ChannelState& state, const Constellation& constellation,
                            int n_tr, int n_te, double snr, RngStream& rng, bool noiseless) {
    if (n_tr < 0 || n_te < 0) throw std::invalid_argument("generate_frame: negative split size");
    FrameDataset frame;
    frame.state = state;
    frame.snr = snr;
    frame.train.reserve(static_cast<std::size_t>(n_tr));
    frame.test.reserve(static_cast<std::size_t>(n_te));
    const int n = n_tr + n_te;
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.x_idx = rng.uniform_int(constellation.size());
        if (std::holds_alternative<DemodChannelState>(state)) {
            auto y = demod_channel(constellation.point(s.x_idx),
                                   std::get<DemodChannelState>(state), snr, rng, noiseless);
            s.y = Eigen::Vector2d(y.real(), y.imag());
        } else {
            s.y = eq_channel(constellation.amplitude(s.x_idx), std::get<EqChannelState>(state),
                             snr, rng, noiseless);
        }
        (i < n_tr ? frame.train : frame.test).push_back(s);
    }
    return frame;
}

}  // namespace metarx
