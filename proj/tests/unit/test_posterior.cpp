#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "bayescomplex/errors.hpp"
#include "bayescomplex/posterior.hpp"
#include "bayescomplex/stats.hpp"

using namespace bayescomplex;

namespace {

const L2Measure kSym{L2Measure::Kind::UniformSym};

Eigen::MatrixXd design(const Dataset& S, int d) {
    Eigen::MatrixXd phi(S.size(), d);
    for (std::size_t n = 0; n < S.size(); ++n) {
        const auto b = legendre_basis(d, S.xs[n]);
        for (int i = 0; i < d; ++i) phi(static_cast<Eigen::Index>(n), i) = b[i];
    }
    return phi;
}

std::vector<double> coordinate(const std::vector<LinearModelParams>& draws, std::size_t i) {
    std::vector<double> out;
    out.reserve(draws.size());
    for (const auto& w : draws) out.push_back(w.w[i]);
    return out;
}

}  // namespace

TEST_CASE("dataset generation") {
    const auto g = canonicalize({{0.4, 2.0}}, -0.5);
    const auto clean = generate_dataset(g, 100, 0.0, L2Measure{}, SeededRng(1));
    for (std::size_t n = 0; n < clean.size(); ++n) CHECK(clean.ys[n] == eval(g, clean.xs[n]));

    const auto noisy = generate_dataset(g, 100000, 0.04, L2Measure{}, SeededRng(2));
    RunningMoments res;
    for (std::size_t n = 0; n < noisy.size(); ++n) res.add(noisy.ys[n] - eval(g, noisy.xs[n]));
    CHECK(res.variance() == doctest::Approx(0.04).epsilon(0.03));

    const auto again = generate_dataset(g, 100000, 0.04, L2Measure{}, SeededRng(2));
    CHECK(again.xs == noisy.xs);
    CHECK(again.ys == noisy.ys);

    CHECK_THROWS_AS(generate_dataset(g, 0, 0.01, L2Measure{}, SeededRng(3)), PreconditionError);
    CHECK_THROWS(generate_dataset(g, 10, 0.01, kSym, SeededRng(3)));
}

TEST_CASE("clipped loss") {
    const LossSpec c4{4.0};
    CHECK(clipped_loss(0.3, 0.3, c4) == 0.0);
    CHECK(clipped_loss(3.0, 0.0, c4) == 4.0);
    CHECK(clipped_loss(3.0, 0.0, LossSpec{1e6}) == 9.0);
}

TEST_CASE("conjugate posterior") {
    const LinearPriorSpec prior{0.5};
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, 3};
    Dataset empty;
    empty.measure = kSym;
    const auto p0 = conjugate_posterior_linear(empty, prior, basis, 0.1);
    CHECK(p0.mean.norm() == 0.0);
    CHECK((p0.covariance - 0.5 * Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);

    const auto g = linear_target_function(LinearTarget{{1.0, 0.5, 0.0}, 0.0});
    const auto S = generate_dataset(g, 30, 0.01, kSym, SeededRng(4));
    const auto far = conjugate_posterior_linear(S, prior, basis, 1e12);
    CHECK(far.mean.norm() < 1e-6);
    CHECK((far.covariance - 0.5 * Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-6);

    // d = 1, one sample: phi = 1/sqrt 2.
    const BasisSpec one{BasisSpec::Kind::LegendreOrthonormal, 1};
    Dataset s1;
    s1.measure = kSym;
    s1.xs = {0.3};
    s1.ys = {1.2};
    const double sy2 = 0.2, sw2 = 0.5, phi = 1 / std::sqrt(2.0);
    const double precision = phi * phi / sy2 + 1 / sw2;
    const auto q1 = conjugate_posterior_linear(s1, LinearPriorSpec{sw2}, one, sy2);
    CHECK(q1.covariance(0, 0) == doctest::Approx(1 / precision).epsilon(1e-14));
    CHECK(q1.mean(0) == doctest::Approx(phi * 1.2 / sy2 / precision).epsilon(1e-14));
}

TEST_CASE("Gaussian KL and the PAC-Bayes right-hand side") {
    GaussianPosterior a{Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Identity(1, 1)};
    GaussianPosterior b{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    CHECK(kl_gaussians(a, b) == doctest::Approx(0.5));
    CHECK(kl_gaussians(a, a) == doctest::Approx(0.0).scale(1.0));
    GaussianPosterior c{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0)};
    CHECK(kl_gaussians(c, b) == doctest::Approx(0.5 * (4 - 1 - std::log(4.0))));
    GaussianPosterior bad{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, -1.0)};
    CHECK_THROWS(kl_gaussians(bad, b));

    CHECK(pac_bayes_rhs(0.3, 0.0, 100, 4.0) == 0.3);
    CHECK(pac_bayes_rhs(0.02, 10, 1000, 1) == doctest::Approx(0.0907107).epsilon(1e-6));
    CHECK_THROWS(pac_bayes_rhs(0.02, -1, 1000, 1));
    CHECK(theorem_bound(0.01, 1, 10, 1000, 1) == doctest::Approx(0.0907107).epsilon(1e-6));
    CHECK_THROWS(theorem_bound(0.01, 0.0, 10, 1000, 1));
    CHECK_THROWS(theorem_bound(0.01, 1.5, 10, 1000, 1));
}

TEST_CASE("losses of a posterior") {
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, 2};
    const LinearTarget t{{1.0, -0.5}, 0.0};
    const auto g = linear_target_function(t);
    const auto S = generate_dataset(g, 40, 0.01, kSym, SeededRng(5));
    const LinearModelParams h{{0.8, -0.4}};
    const LossSpec spec{4.0};
    double direct = 0.0;
    for (std::size_t n = 0; n < S.size(); ++n) direct += clipped_loss(eval_linear(h, basis, S.xs[n]), S.ys[n], spec);
    CHECK(empirical_loss_of_Q({h}, S, basis, spec).value == doctest::Approx(direct / 40).epsilon(1e-14));

    // Q concentrated on g: only the noise floor remains.
    const std::vector<LinearModelParams> at_g(20, LinearModelParams{t.coeffs});
    const auto ld = true_loss_of_Q(at_g, g, 0.01, kSym, basis, spec, 20000, SeededRng(6));
    SeededRng r(7);
    CHECK(std::abs(ld.value - 0.01) <= 3 * 0.01 * std::sqrt(2.0 / (20 * 20000)));
    CHECK_THROWS(empirical_loss_of_Q(std::vector<LinearModelParams>{}, S, basis, spec));

    // Prior draws are far from g.
    const GaussianPosterior prior = linear_prior_as_gaussian(LinearPriorSpec{1.0}, 2);
    std::vector<LinearModelParams> pd;
    for (int i = 0; i < 200; ++i) pd.push_back(sample_gaussian(prior, r));
    const auto lp = true_loss_of_Q(pd, g, 0.01, kSym, basis, spec, 2000, SeededRng(8));
    CHECK(lp.value >= 0.02);
    CHECK(lp.value <= 4.0);
}

TEST_CASE("SGLD on the one-dimensional conjugate case") {
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, 1};
    const LinearPriorSpec prior{1.0};
    const auto g = linear_target_function(LinearTarget{{1.0}, 0.0});
    const auto S = generate_dataset(g, 50, 0.01, kSym, SeededRng(9));
    SgldConfig cfg;
    cfg.sigma_y_sq = 0.1;
    cfg.eta = 5e-3;
    cfg.steps = 2005000;
    cfg.burn_in = 5000;
    cfg.thin = 200;
    const auto q = conjugate_posterior_linear(S, prior, basis, cfg.sigma_y_sq);
    const auto draws = run_sgld(S, basis, prior, cfg, SeededRng(10));
    REQUIRE(draws.size() == 10000);
    const auto xs = coordinate(draws, 0);
    RunningMoments m;
    for (double x : xs) m.add(x);
    CHECK(std::abs(m.mean - q.mean(0)) <= 3 * batch_means_std_err(xs, 50));
    CHECK(m.variance() == doctest::Approx(q.covariance(0, 0)).epsilon(0.1));

    SeededRng r(11);
    std::vector<double> exact;
    for (int i = 0; i < 10000; ++i) exact.push_back(sample_gaussian(q, r).w[0]);
    const double p = ks_two_sample_pvalue(xs, exact);
    MESSAGE("KS p-value " << p);
    CHECK(p > 0.01);

    SgldConfig map = cfg;
    map.noise_scale = 0.0;
    map.eta = 1e-2;
    map.steps = 20000;
    map.burn_in = map.steps - 1;
    map.thin = 1;
    CHECK(std::abs(run_sgld(S, basis, prior, map, SeededRng(12)).back().w[0] - q.mean(0)) <= 1e-6);
}

TEST_CASE("SGLD without likelihood samples the prior") {
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, 2};
    const LinearPriorSpec prior{0.5};
    Dataset none;
    none.measure = kSym;
    SgldConfig cfg;
    cfg.use_likelihood = false;
    cfg.eta = 1e-2;
    cfg.steps = 405000;
    cfg.burn_in = 5000;
    const auto draws = run_sgld(none, basis, prior, cfg, SeededRng(13));
    for (std::size_t i = 0; i < 2; ++i) {
        const auto xs = coordinate(draws, i);
        std::vector<double> sq;
        for (double x : xs) sq.push_back(x * x);
        RunningMoments m, m2;
        for (double x : xs) m.add(x);
        for (double x : sq) m2.add(x);
        CHECK(std::abs(m.mean) <= 3 * batch_means_std_err(xs, 50));
        CHECK(std::abs(m2.mean - 0.5) <= 3 * batch_means_std_err(sq, 50) + 0.5 * 0.01);
    }
}

TEST_CASE("SGLD divergence is reported") {
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, 1};
    const auto S = generate_dataset(linear_target_function(LinearTarget{{1.0}, 0.0}), 50, 0.01, kSym, SeededRng(14));
    SgldConfig cfg;
    cfg.sigma_y_sq = 1e-4;
    cfg.eta = 10.0;
    cfg.steps = 1000;
    cfg.burn_in = 0;
    CHECK_THROWS_AS(run_sgld(S, basis, LinearPriorSpec{1.0}, cfg, SeededRng(15)), NumericalError);
}

TEST_CASE("NN SGLD keeps biases in the support") {
    const auto g = canonicalize({{0.5, 1.0}}, 0.0);
    const auto S = generate_dataset(g, 40, 0.01, L2Measure{}, SeededRng(16));
    const NnPriorSpec prior = NnPriorSpec::for_width(2);
    SgldConfig cfg;
    cfg.sigma_y_sq = 0.05;
    cfg.eta = 1e-3;
    cfg.steps = 20000;
    cfg.burn_in = 1000;
    cfg.thin = 10;
    const auto draws = run_sgld(S, 2, prior, cfg, SeededRng(17));
    REQUIRE_FALSE(draws.empty());
    for (const auto& t : draws)
        for (double b : t.b1) {
            CHECK(b >= 0.0);
            CHECK(b <= prior.M);
        }
    const auto ls = empirical_loss_of_Q(draws, S, LossSpec{4.0});
    CHECK(ls.value >= 0.0);
    CHECK(ls.value <= 4.0);
}

TEST_CASE("divergence upper bound against the exact KL") {
    const int d = 2;
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, d};
    const LinearPriorSpec prior{1.0};
    const LinearTarget t{{0.8, 0.3}, 0.0};
    const auto g = linear_target_function(t);
    const std::size_t N = 20;
    const double sy2 = 0.5;
    const SeededRng root(18);
    for (int trial = 0; trial < 20; ++trial) {
        const auto S = generate_dataset(g, N, 0.01, kSym, root.substream(2 * trial));
        const auto q = conjugate_posterior_linear(S, prior, basis, sy2);
        const double kl = kl_gaussians(q, linear_prior_as_gaussian(prior, d));
        // Exact E_Q (1/N) sum (y - f)^2.
        const Eigen::MatrixXd phi = design(S, d);
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(S.ys.data(), static_cast<Eigen::Index>(N));
        const double ls = ((y - phi * q.mean).squaredNorm() + (phi * q.covariance * phi.transpose()).trace()) / N;
        std::vector<double> noise(N);
        for (std::size_t n = 0; n < N; ++n) noise[n] = S.ys[n] - g(S.xs[n]);
        const auto chiE = empirical_complexity_mc(LinearFamily{d, prior}, t, S.xs, noise, sy2 / N, 200000,
                                                  root.substream(2 * trial + 1));
        const double ub = divergence_upper_bound(chiE, N, sy2, ls);
        CAPTURE(trial);
        CHECK(ub >= kl - 3 * chiE.std_err);
        // With the unclipped loss the bound is an identity.
        CHECK(std::abs(ub - kl) <= 4 * chiE.std_err);
    }
}

TEST_CASE("sigma_alg search") {
    ConjugateSetup setup;
    const auto loss = conjugate_expected_empirical_loss(setup, 32, 64, SeededRng(19));
    const auto res = find_sigma_alg(1.0, setup.sigma_e_sq, loss);
    CHECK(res.converged);
    CHECK(std::abs(res.achieved_loss - 0.02) <= 1e-3);
    CHECK(std::abs(loss(res.sigma_alg_sq) - 0.02) <= 1e-3);
    CHECK(res.loss_at_lo < 0.02);
    CHECK(res.loss_at_hi > 0.02);

    // Smaller beta pushes sigma_alg^2 down.
    const auto small = find_sigma_alg(0.1, setup.sigma_e_sq, loss);
    MESSAGE("sigma_alg^2 at beta 1: " << res.sigma_alg_sq << ", at beta 0.1: " << small.sigma_alg_sq);
    CHECK(small.sigma_alg_sq < res.sigma_alg_sq);

    CHECK_THROWS_AS(find_sigma_alg(1.0, 0.01, [](double) { return 0.5; }), AssumptionViolation);
    CHECK_THROWS(find_sigma_alg(0.0, 0.01, loss));
}

TEST_CASE("PAC-Bayes bound holds on average over conjugate trials") {
    ConjugateSetup setup;
    setup.loss.clip_C = 1.0;
    const SeededRng root(20);
    RunningMoments ld, rhs;
    for (int trial = 0; trial < 50; ++trial) {
        const auto t = run_conjugate_trial(setup, 0.5, 100, 500, root.substream(trial));
        for (double v : {t.L_S, t.L_D}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        ld.add(t.L_D);
        rhs.add(t.rhs);
    }
    CHECK(ld.mean <= rhs.mean + 3 * std::hypot(ld.std_err(), rhs.std_err()));
}
