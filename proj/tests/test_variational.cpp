#include <doctest.h>

#include "metarx/adaptation.hpp"
#include "metarx/variational.hpp"

using namespace metarx;

namespace {

VariationalParams random_vp(RngStream& rng, int d, double rho_lo = -2.0, double rho_hi = 0.5) {
    VariationalParams q;
    q.nu.resize(d);
    q.rho.resize(d);
    for (int i = 0; i < d; ++i) {
        q.nu[i] = rng.normal();
        q.rho[i] = rng.uniform(rho_lo, rho_hi);
    }
    return q;
}

}  // namespace

TEST_CASE("KL of identical Gaussians is exactly zero") {
    RngStream rng(1);
    VariationalParams q = random_vp(rng, 8);
    CHECK(kl_gaussians(q, q) == 0.0);
}

TEST_CASE("KL closed form on the one-dimensional hand case") {
    VariationalParams q, p;
    q.nu = Eigen::VectorXd::Zero(1);
    q.rho = Eigen::VectorXd::Zero(1);
    p.nu = Eigen::VectorXd::Zero(1);
    p.rho = Eigen::VectorXd::Constant(1, std::log(2.0));
    const double expected = 0.5 * (2.0 * std::log(2.0) + 0.25 - 1.0);
    CHECK(kl_gaussians(q, p) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected == doctest::Approx(0.31815).epsilon(1e-4));
}

TEST_CASE("KL matches a Monte Carlo estimate") {
    RngStream rng(2);
    for (int trial = 0; trial < 3; ++trial) {
        VariationalParams q = random_vp(rng, 4, -1.0, 0.5);
        VariationalParams p = random_vp(rng, 4, -1.0, 0.5);
        const double closed = kl_gaussians(q, p);
        RngStream mc(100 + trial);
        const int n = 200000;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double term = 0.0;
            for (int d = 0; d < 4; ++d) {
                const double z = mc.normal();
                const double x = q.nu[d] + std::exp(q.rho[d]) * z;
                const double lq = -q.rho[d] - 0.5 * z * z;
                const double gp = (x - p.nu[d]) / std::exp(p.rho[d]);
                const double lp = -p.rho[d] - 0.5 * gp * gp;
                term += lq - lp;
            }
            acc += term;
        }
        acc /= n;
        CHECK(closed == doctest::Approx(acc).epsilon(0.03));
    }
}

TEST_CASE("KL is nonnegative and zero only at equality") {
    RngStream rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        VariationalParams q = random_vp(rng, 3);
        VariationalParams p = random_vp(rng, 3);
        const double kl = kl_gaussians(q, p);
        CHECK(kl >= 0.0);
        if (kl <= 1e-12) {
            CHECK((q.nu - p.nu).norm() <= 1e-6);
            CHECK((q.rho - p.rho).norm() <= 1e-6);
        }
    }
}

TEST_CASE("reparametrized sampling") {
    SUBCASE("collapsed rho gives the mean deterministically") {
        VariationalParams q;
        q.nu = Eigen::VectorXd::Constant(4, 1.5);
        q.rho = Eigen::VectorXd::Constant(4, -1000.0);  // clamps at -30
        RngStream rng(4);
        const Eigen::VectorXd phi = sample_params(q, rng);
        CHECK((phi - q.nu).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("sample mean approaches nu") {
        RngStream rng(5);
        VariationalParams q = random_vp(rng, 3, -1.0, 0.0);
        const int n = 100000;
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
        for (int i = 0; i < n; ++i) mean += sample_params(q, rng);
        mean /= n;
        for (int d = 0; d < 3; ++d)
            CHECK(std::abs(mean[d] - q.nu[d]) <= 3.0 * std::exp(q.rho[d]) / std::sqrt(double(n)));
    }
    SUBCASE("fixed noise gives identical draws") {
        RngStream rng(6);
        VariationalParams q = random_vp(rng, 5);
        Eigen::VectorXd e(5);
        for (int i = 0; i < 5; ++i) e[i] = rng.normal();
        const Eigen::VectorXd a = reparametrize(q, e);
        const Eigen::VectorXd b = reparametrize(q, e);
        CHECK((a - b).norm() == 0.0);
    }
}

TEST_CASE("expectation estimates") {
    RngStream rng(7);
    VariationalParams q;
    q.nu = Eigen::VectorXd::Zero(2);
    q.rho = Eigen::VectorXd::Zero(2);

    SUBCASE("constant integrand is exact for any R") {
        RngStream r2(8);
        CHECK(estimate_expectation([](const Eigen::VectorXd&) { return 42.0; }, q, 3, r2) == 42.0);
    }
    SUBCASE("first moment") {
        q.nu[0] = 0.7;
        RngStream r2(9);
        const int n = 100000;
        const double est =
            estimate_expectation([](const Eigen::VectorXd& phi) { return phi[0]; }, q, n, r2);
        CHECK(std::abs(est - 0.7) <= 3.0 / std::sqrt(double(n)));
    }
    SUBCASE("second moment with unit variance") {
        RngStream r2(10);
        const int n = 1000000;
        const double est =
            estimate_expectation([](const Eigen::VectorXd& phi) { return phi[0] * phi[0]; }, q, n,
                                 r2);
        CHECK(est == doctest::Approx(1.0).epsilon(0.01));
    }
}

TEST_CASE("ensemble prediction") {
    TaskModel task = TaskModel::demod();
    task.shape = ModelShape{2, {4}, 16, true, true};  // small net keeps the reference cheap
    const int d = task.dim();
    RngStream rng(11);
    VariationalParams q;
    q.nu.resize(d);
    q.rho.resize(d);
    for (int i = 0; i < d; ++i) {
        q.nu[i] = 0.5 * rng.normal();
        q.rho[i] = -1.5;
    }
    const Eigen::Vector2d y(0.4, -0.2);

    SUBCASE("degenerate posterior equals the point prediction") {
        VariationalParams qd = q;
        qd.rho.setConstant(-1000.0);
        RngStream r2(12);
        const EnsemblePrediction e = ensemble_predict(y, qd, task, 32, r2);
        const Eigen::VectorXd point = demod_probs(y, ModelParams{qd.nu, task.shape});
        CHECK((e.probs - point).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SUBCASE("outputs stay on the simplex for any R") {
        for (int R : {1, 3, 17}) {
            RngStream r2(13);
            const EnsemblePrediction e = ensemble_predict(y, q, task, R, r2);
            CHECK(std::abs(e.probs.sum() - 1.0) <= 1e-12);
            CHECK(e.probs.minCoeff() >= 0.0);
        }
    }
    SUBCASE("R = 1e4 estimate is close to the R = 1e6 reference") {
        RngStream r_small(14), r_big(15);
        const EnsemblePrediction small = ensemble_predict(y, q, task, 10000, r_small);
        const EnsemblePrediction big = ensemble_predict(y, q, task, 1000000, r_big);
        CHECK((small.probs - big.probs).cwiseAbs().maxCoeff() <= 1e-2);
    }
    SUBCASE("equalizer mixture variance includes the component precision") {
        TaskModel eq = TaskModel::equalizer(150.0);
        VariationalParams qe;
        qe.nu = Eigen::Vector2d(0.3, -0.2);
        qe.rho = Eigen::Vector2d::Constant(-1000.0);
        RngStream r2(16);
        const EnsemblePrediction e = ensemble_predict(y, qe, eq, 64, r2);
        CHECK(e.mean == doctest::Approx(qe.nu.dot(y)).epsilon(1e-10));
        CHECK(e.variance == doctest::Approx(1.0 / 150.0).epsilon(1e-8));
    }
}

TEST_CASE("gradients of reparametrized estimates pass finite-difference checks") {
    // common random numbers: same seed on both sides of the difference
    TaskModel task = TaskModel::equalizer(150.0);
    std::vector<Sample> data;
    RngStream gen(17);
    const Constellation pam = Constellation::pam4();
    EqChannelState state = sample_eq_state(gen);
    for (int i = 0; i < 4; ++i) {
        const int idx = gen.uniform_int(4);
        data.push_back({eq_channel(pam.amplitude(idx), state, 4.0, gen), idx});
    }
    VariationalParams q;
    q.nu = Eigen::Vector2d(0.2, -0.1);
    q.rho = Eigen::Vector2d(-1.0, -2.0);
    VariationalParams prior;
    prior.nu = Eigen::Vector2d::Zero(2);
    prior.rho = Eigen::Vector2d::Constant(2, std::log(0.5));
    const int R = 64;
    const std::uint64_t noise_seed = 271828;

    auto fe_at = [&](const VariationalParams& qq) {
        RngStream rng(noise_seed);
        return free_energy_estimate(data, qq, prior, task, R, rng, 0.1);
    };

    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (int i = 0; i < 2; ++i) leaves.push_back(tape.leaf(q.nu[i]));
    for (int i = 0; i < 2; ++i) leaves.push_back(tape.leaf(q.rho[i]));
    std::vector<ad::Var> p_nu = {ad::Var(prior.nu[0]), ad::Var(prior.nu[1])};
    std::vector<ad::Var> p_rho = {ad::Var(prior.rho[0]), ad::Var(prior.rho[1])};
    RngStream rng(noise_seed);
    ad::Var fe = free_energy_graph(tape, data, task,
                                   std::span<const ad::Var>(leaves.data(), 2),
                                   std::span<const ad::Var>(leaves.data() + 2, 2),
                                   std::span<const ad::Var>(p_nu.data(), 2),
                                   std::span<const ad::Var>(p_rho.data(), 2), R, rng, 0.1);
    const Eigen::VectorXd g = tape.gradient(fe, leaves);

    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        VariationalParams qp = q, qm = q;
        (i < 2 ? qp.nu[i] : qp.rho[i - 2]) += h;
        (i < 2 ? qm.nu[i] : qm.rho[i - 2]) -= h;
        const double fd = (fe_at(qp) - fe_at(qm)) / (2.0 * h);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}
