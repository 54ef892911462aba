#pragma once

#include <Eigen/Core>
#include <complex>
#include <variant>
#include <vector>

#include "metarx/constellation.hpp"
#include "metarx/rng.hpp"

namespace metarx {

// I/Q-imbalanced Rayleigh fading state for the demodulation task.
// `delta` is held in radians; configs accept degrees.
struct DemodChannelState {
    double eps = 0.0;
    double delta = 0.0;
    std::complex<double> h{1.0, 0.0};
};

// Real SIMO block-fading gains for the equalization task.
struct EqChannelState {
    Eigen::Vector2d c{1.0, 0.0};
};

using ChannelState = std::variant<DemodChannelState, EqChannelState>;

// One labeled symbol: received vector (complex carried as a real pair for the
// demodulator, the two receive branches for the equalizer) plus the index of
// the transmitted constellation point.
struct Sample {
    Eigen::Vector2d y;
    int x_idx;
};

// Pilot/payload split of one frame; both halves share a single channel state.
struct FrameDataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    ChannelState state;
    double snr = 1.0;  // linear
};

constexpr double kMaxEps = 0.15;
constexpr double kMaxDeltaRad = 15.0 * M_PI / 180.0;

// eps/0.15 ~ Beta(5,2), delta/15deg ~ Beta(5,2), h ~ CN(0,1), independent.
DemodChannelState sample_demod_state(RngStream& rng);

// c ~ N(0, I2)
EqChannelState sample_eq_state(RngStream& rng);

// [xbar_I; xbar_Q] = diag(1+eps, 1-eps) [cos d, -sin d; -sin d, cos d] [x_I; x_Q]
std::complex<double> apply_iq_imbalance(std::complex<double> x, double eps, double delta);

// y = h f_IQ(x) + z,  z ~ CN(0, 1/snr); `noiseless` substitutes z = 0
std::complex<double> demod_channel(std::complex<double> x, const DemodChannelState& state,
                                   double snr, RngStream& rng, bool noiseless = false);

// y = c x + z,  z ~ N(0, (1/(2 snr)) I2)
Eigen::Vector2d eq_channel(double x, const EqChannelState& state, double snr, RngStream& rng,
                           bool noiseless = false);

// Draws n_tr + n_te i.i.d. uniform symbols, pushes them through the channel
// for `state`, and splits the first n_tr into train and the rest into test.
FrameDataset generate_frame(const ChannelState& state, const Constellation& constellation,
                            int n_tr, int n_te, double snr, RngStream& rng,
                            bool noiseless = false);

}  // namespace metarx
