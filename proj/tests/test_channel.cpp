#include <doctest.h>

#include "metarx/channel.hpp"

using namespace metarx;

TEST_CASE("constellations have unit average energy") {
    CHECK(std::abs(Constellation::qam16().average_energy() - 1.0) <= 1e-12);
    CHECK(std::abs(Constellation::pam4().average_energy() - 1.0) <= 1e-12);
    CHECK(Constellation::qam16().size() == 16);
    CHECK(Constellation::pam4().size() == 4);
}

TEST_CASE("zero imbalance is the identity on all 16 points") {
    const Constellation qam = Constellation::qam16();
    for (int i = 0; i < qam.size(); ++i) {
        const auto x = qam.point(i);
        const auto y = apply_iq_imbalance(x, 0.0, 0.0);
        CHECK(y.real() == x.real());
        CHECK(y.imag() == x.imag());
    }
}

TEST_CASE("amplitude-only imbalance scales I and Q separately") {
    const std::complex<double> x{1.0 / std::sqrt(10.0), 1.0 / std::sqrt(10.0)};
    const auto y = apply_iq_imbalance(x, 0.15, 0.0);
    CHECK(y.real() == doctest::Approx(1.15 / std::sqrt(10.0)).epsilon(1e-14));
    CHECK(y.imag() == doctest::Approx(0.85 / std::sqrt(10.0)).epsilon(1e-14));
}

TEST_CASE("phase imbalance matches an explicit matrix product") {
    const double delta = 15.0 * M_PI / 180.0;
    const std::complex<double> x{1.0 / std::sqrt(10.0), 1.0 / std::sqrt(10.0)};
    // oracle: [1 0; 0 1] * [cos d, -sin d; -sin d, cos d] * [xI; xQ]
    const double xi = x.real(), xq = x.imag();
    const double oi = std::cos(delta) * xi - std::sin(delta) * xq;
    const double oq = -std::sin(delta) * xi + std::cos(delta) * xq;
    const auto y = apply_iq_imbalance(x, 0.0, delta);
    CHECK(y.real() == doctest::Approx(oi).epsilon(1e-14));
    CHECK(y.imag() == doctest::Approx(oq).epsilon(1e-14));
    // both components equal (cos d - sin d) xI here since xI == xQ
    CHECK(oi == doctest::Approx((std::cos(delta) - std::sin(delta)) * xi).epsilon(1e-14));
}

TEST_CASE("demod channel state prior") {
    RngStream rng(1);
    const int n = 1000000;
    double eps_mean = 0.0, h2_mean = 0.0;
    for (int i = 0; i < n; ++i) {
        const DemodChannelState s = sample_demod_state(rng);
        CHECK(s.eps >= 0.0);
        CHECK(s.eps <= kMaxEps);
        CHECK(s.delta >= 0.0);
        CHECK(s.delta <= kMaxDeltaRad);
        eps_mean += s.eps;
        h2_mean += std::norm(s.h);
    }
    eps_mean /= n;
    h2_mean /= n;
    CHECK(std::abs(eps_mean - 0.15 * 5.0 / 7.0) <= 1e-3);
    CHECK(std::abs(h2_mean - 1.0) <= 5e-3);
}

TEST_CASE("noiseless demod channel is exact") {
    RngStream rng(2);
    DemodChannelState s = sample_demod_state(rng);
    const auto x = Constellation::qam16().point(5);
    const auto y = demod_channel(x, s, 100.0, rng, /*noiseless=*/true);
    const auto expect = s.h * apply_iq_imbalance(x, s.eps, s.delta);
    CHECK(y.real() == expect.real());
    CHECK(y.imag() == expect.imag());
}

TEST_CASE("demod channel noise variance is 1/snr") {
    RngStream rng(3);
    DemodChannelState s = sample_demod_state(rng);
    const double snr = 10.0;
    const auto x = Constellation::qam16().point(9);
    const auto mean = s.h * apply_iq_imbalance(x, s.eps, s.delta);
    const int n = 1000000;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto y = demod_channel(x, s, snr, rng);
        var += std::norm(y - mean);
    }
    var /= n;
    CHECK(var == doctest::Approx(1.0 / snr).epsilon(0.01));
}

TEST_CASE("ideal-channel noise is Gaussian (Kolmogorov-Smirnov on the real part)") {
    RngStream rng(4);
    DemodChannelState s;  // eps = delta = 0, h = 1
    const double snr = 4.0;
    const auto x = Constellation::qam16().point(0);
    const int n = 100000;
    std::vector<double> zs(n);
    for (int i = 0; i < n; ++i) {
        const auto y = demod_channel(x, s, snr, rng);
        zs[static_cast<std::size_t>(i)] = (y.real() - x.real()) / std::sqrt(0.5 / snr);
    }
    std::sort(zs.begin(), zs.end());
    double d_stat = 0.0;
    for (int i = 0; i < n; ++i) {
        const double cdf = 0.5 * std::erfc(-zs[static_cast<std::size_t>(i)] / std::sqrt(2.0));
        d_stat = std::max(d_stat, std::abs(cdf - (i + 1.0) / n));
        d_stat = std::max(d_stat, std::abs(cdf - static_cast<double>(i) / n));
    }
    // alpha = 0.01 critical value
    CHECK(d_stat < 1.6276 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("equalizer channel") {
    RngStream rng(5);
    EqChannelState s = sample_eq_state(rng);
    const double snr = 4.0;

    SUBCASE("noiseless flag is exact") {
        const Eigen::Vector2d y = eq_channel(0.7, s, snr, rng, true);
        CHECK(y[0] == s.c[0] * 0.7);
        CHECK(y[1] == s.c[1] * 0.7);
    }
    SUBCASE("per-component variance is 1/(2 snr)") {
        const int n = 1000000;
        Eigen::Vector2d acc1 = Eigen::Vector2d::Zero();
        Eigen::Vector2d acc2 = Eigen::Vector2d::Zero();
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector2d y = eq_channel(1.0, s, snr, rng) - s.c;
            acc1 += y;
            acc2 += y.cwiseProduct(y);
        }
        acc2 /= n;
        CHECK(acc2[0] == doctest::Approx(0.5 / snr).epsilon(0.01));
        CHECK(acc2[1] == doctest::Approx(0.5 / snr).epsilon(0.01));
    }
    SUBCASE("zero input leaves pure noise") {
        const int n = 1000000;
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (int i = 0; i < n; ++i) mean += eq_channel(0.0, s, snr, rng);
        mean /= n;
        CHECK(std::abs(mean[0]) <= 1e-2);
        CHECK(std::abs(mean[1]) <= 1e-2);
    }
}

TEST_CASE("generate_frame splits and reproducibility") {
    const Constellation qam = Constellation::qam16();
    RngStream state_rng(6);
    const ChannelState state = sample_demod_state(state_rng);

    SUBCASE("split sizes") {
        RngStream rng(7);
        FrameDataset f = generate_frame(state, qam, 4, 3000, 10.0, rng);
        CHECK(f.train.size() == 4);
        CHECK(f.test.size() == 3000);
    }
    SUBCASE("empty training split is valid") {
        RngStream rng(7);
        FrameDataset f = generate_frame(state, qam, 0, 10, 10.0, rng);
        CHECK(f.train.empty());
        CHECK(f.test.size() == 10);
    }
    SUBCASE("same seed reproduces the frame exactly") {
        RngStream r1(8), r2(8);
        FrameDataset a = generate_frame(state, qam, 4, 100, 10.0, r1);
        FrameDataset b = generate_frame(state, qam, 4, 100, 10.0, r2);
        for (std::size_t i = 0; i < a.test.size(); ++i) {
            CHECK(a.test[i].x_idx == b.test[i].x_idx);
            CHECK(a.test[i].y[0] == b.test[i].y[0]);
            CHECK(a.test[i].y[1] == b.test[i].y[1]);
        }
    }
    SUBCASE("symbols are uniform over the 16 points (chi-squared)") {
        RngStream rng(9);
        const int n = 100000;
        FrameDataset f = generate_frame(state, qam, 0, n, 10.0, rng);
        std::vector<int> counts(16, 0);
        for (const Sample& s : f.test) counts[static_cast<std::size_t>(s.x_idx)]++;
        double chi2 = 0.0;
        const double expected = n / 16.0;
        for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
        CHECK(chi2 < 30.578);  // df = 15, alpha = 0.01
    }
}
