#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "bayescomplex/hyperbola.hpp"
#include "bayescomplex/parallel.hpp"
#include "bayescomplex/rng.hpp"
#include "bayescomplex/special.hpp"
#include "bayescomplex/stats.hpp"

using namespace bayescomplex;

TEST_CASE("philox known answer for zero key and counter") {
    SeededRng r(0, 0);
    CHECK(r.next_u64() == 0xe169c58d6627e8d5ull);
    CHECK(r.next_u64() == 0x9b00dbd8bc57ac4cull);
}

TEST_CASE("rng is deterministic per seed and stream") {
    SeededRng a(42, 7), b(42, 7), c(43, 7), d(42, 8);
    bool differs_c = false, differs_d = false;
    for (int i = 0; i < 1000; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs_c |= x != c.next_u64();
        differs_d |= x != d.next_u64();
    }
    CHECK(differs_c);
    CHECK(differs_d);
    CHECK(SeededRng(5).substream(3).stream_id() == SeededRng(5).substream(3).stream_id());
    CHECK(SeededRng(5).substream(3).stream_id() != SeededRng(5).substream(4).stream_id());
}

TEST_CASE("distinct streams are uncorrelated") {
    const std::size_t n = 1000000;
    SeededRng a = SeededRng(9).substream(0), b = SeededRng(9).substream(1);
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.uniform(), y = b.uniform();
        sa += x;
        sb += y;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    const double nn = static_cast<double>(n);
    const double cov = sab / nn - sa * sb / (nn * nn);
    const double rho = cov / std::sqrt((saa / nn - sa * sa / (nn * nn)) * (sbb / nn - sb * sb / (nn * nn)));
    CHECK(std::abs(rho) < 4.0 / std::sqrt(nn));
}

TEST_CASE("uniform, normal and below moments") {
    SeededRng r(11);
    RunningMoments u, z;
    std::vector<int> counts(7, 0);
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        const double x = r.uniform();
        REQUIRE(x > 0.0);
        REQUIRE(x < 1.0);
        u.add(x);
        z.add(r.normal());
        ++counts[r.below(7)];
    }
    CHECK(std::abs(u.mean - 0.5) < 4 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(u.variance() - 1.0 / 12.0) < 1e-3);
    CHECK(std::abs(z.mean) < 4.0 / std::sqrt(n));
    CHECK(std::abs(z.variance() - 1.0) < 0.01);
    double chi2 = 0.0;
    for (int c : counts) chi2 += std::pow(c - n / 7.0, 2) / (n / 7.0);
    CHECK(chi2 < 22.46);  // 0.999 quantile of chi-square with 6 dof
}

TEST_CASE("run_partitioned is reproducible and splits counts") {
    const SeededRng rng(3);
    auto fn = [](SeededRng& r, std::size_t count) {
        RunningMoments m;
        for (std::size_t i = 0; i < count; ++i) m.add(r.normal());
        return m;
    };
    const auto a = run_partitioned(1001, 3, rng, fn);
    const auto b = run_partitioned(1001, 3, rng, fn);
    REQUIRE(a.size() == 3);
    CHECK(a[0].n == 334);
    CHECK(a[2].n == 333);
    for (int i = 0; i < 3; ++i) CHECK(a[i].mean == b[i].mean);
}

TEST_CASE("running moments merge equals single pass") {
    SeededRng r(1);
    RunningMoments all, left, right;
    for (int i = 0; i < 1000; ++i) {
        const double x = r.normal(2.0, 3.0);
        all.add(x);
        (i < 400 ? left : right).add(x);
    }
    left.merge(right);
    CHECK(left.n == all.n);
    CHECK(left.mean == doctest::Approx(all.mean).epsilon(1e-12));
    CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
}

TEST_CASE("log mean exp matches direct evaluation and survives underflow") {
    const std::vector<double> xs = {-1.0, 0.5, -3.0, 2.0};
    LogMeanExp l;
    double direct = 0.0;
    for (double x : xs) {
        l.add(x);
        direct += std::exp(x);
    }
    CHECK(l.log_mean() == doctest::Approx(std::log(direct / 4.0)).epsilon(1e-14));

    LogMeanExp tiny, a, b;
    for (int i = 0; i < 10; ++i) {
        tiny.add(-2000.0 - i);
        (i < 5 ? a : b).add(-2000.0 - i);
    }
    a.merge(b);
    CHECK(std::isfinite(tiny.log_mean()));
    CHECK(a.log_mean() == doctest::Approx(tiny.log_mean()).epsilon(1e-14));

    LogMeanExp none;
    none.add(-std::numeric_limits<double>::infinity());
    CHECK(none.log_mean() == -std::numeric_limits<double>::infinity());
}

TEST_CASE("weighted line fit recovers an exact line and its standard errors") {
    const std::vector<double> x = {0, 1, 2, 3};
    const std::vector<double> y = {1, 3, 5, 7};
    const std::vector<double> w = {1, 1, 1, 1};
    const LineFit f = weighted_line_fit(x, y, w);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    // (X^T X)^{-1}[1][1] = n / (n sum x^2 - (sum x)^2) = 4 / 20
    CHECK(f.slope_se == doctest::Approx(std::sqrt(0.2)));
}

TEST_CASE("two-sample KS p-value separates equal and shifted samples") {
    SeededRng r(5);
    std::vector<double> a, b, c;
    for (int i = 0; i < 2000; ++i) {
        a.push_back(r.normal());
        b.push_back(r.normal());
        c.push_back(r.normal(0.3, 1.0));
    }
    CHECK(ks_two_sample_pvalue(a, b) > 0.01);
    CHECK(ks_two_sample_pvalue(a, c) < 1e-6);
}

TEST_CASE("batch means standard error for iid data matches the naive one") {
    SeededRng r(8);
    std::vector<double> s(100000);
    for (auto& x : s) x = r.normal();
    const double naive = 1.0 / std::sqrt(static_cast<double>(s.size()));
    CHECK(batch_means_std_err(s, 50) == doctest::Approx(naive).epsilon(0.3));

    // AR(1) with phi = 0.9 and unit innovations: long-run variance 1 / (1 - phi)^2 = 100.
    double x = 0.0;
    for (auto& v : s) v = x = 0.9 * x + r.normal();
    const double ar_se = std::sqrt(100.0 / static_cast<double>(s.size()));
    CHECK(batch_means_std_err(s, 50) == doctest::Approx(ar_se).epsilon(0.3));
}

TEST_CASE("regularized incomplete gamma against Boost and frozen values") {
    struct Row {
        double a, x, frozen;
    };
    // Frozen from an arbitrary-precision evaluation.
    const std::vector<Row> rows = {{0.5, 0.3, 0.56142197391900013648}, {1.5, 2.0, 0.7385358700508893778},
                                   {3.0, 10.0, 0.99723060428448842406}, {7.5, 4.2, 0.093252724238045307478},
                                   {0.01, 1e-3, 0.93857065252612898538}, {20, 25, 0.86642516591434959432}};
    for (const auto& row : rows) {
        CAPTURE(row.a);
        CAPTURE(row.x);
        const double oracle = boost::math::gamma_p(row.a, row.x);
        CHECK(oracle == doctest::Approx(row.frozen).epsilon(1e-14));
        CHECK(gamma_p(row.a, row.x) == doctest::Approx(oracle).epsilon(1e-12));
    }
    SeededRng r(4);
    for (int i = 0; i < 500; ++i) {
        const double a = std::exp(r.uniform(-4.0, 4.0));
        const double x = a * std::exp(r.uniform(-3.0, 1.5));
        CHECK(gamma_p(a, x) == doctest::Approx(boost::math::gamma_p(a, x)).epsilon(1e-11));
    }
    CHECK(gamma_p(2.0, 0.0) == 0.0);
    CHECK(gamma_cdf(-1.0, 2.0, 3.0) == 0.0);
    CHECK(gamma_cdf(6.0, 2.0, 3.0) == doctest::Approx(boost::math::gamma_p(2.0, 2.0)).epsilon(1e-13));
}

TEST_CASE("adaptive quadrature on closed-form integrals") {
    const auto r1 = integrate_adaptive([](double x) { return std::exp(-x * x); }, 0.0, 2.0);
    CHECK(r1.value == doctest::Approx(std::sqrt(std::numbers::pi) / 2 * std::erf(2.0)).epsilon(1e-13));
    const auto r2 = integrate_adaptive([](double x) { return std::sqrt(x); }, 0.0, 1.0, 1e-14, 1e-12);
    CHECK(r2.value == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
    const auto r3 = integrate_adaptive([](double x) { return std::cos(x); }, 0.0, std::numbers::pi / 2);
    CHECK(r3.value == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("Gauss rules integrate polynomials exactly") {
    for (int n = 1; n <= 8; ++n) {
        const QuadratureRule gl = gauss_legendre(n);
        for (int p = 0; p <= 2 * n - 1; ++p) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += gl.weights[i] * std::pow(gl.nodes[i], p);
            const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
            CHECK(s == doctest::Approx(exact).epsilon(1e-13).scale(1.0));
        }
        const QuadratureRule gh = gauss_hermite_normal(n);
        double m0 = 0.0, m2 = 0.0;
        for (int i = 0; i < n; ++i) {
            m0 += gh.weights[i];
            m2 += gh.weights[i] * gh.nodes[i] * gh.nodes[i];
        }
        CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
        if (n >= 2) CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
    }
}

namespace {

double hyperbola_grid_oracle(double p, double q, double v) {
    // Parametrize the branches by x and scan densely, then refine locally.
    double best = std::numeric_limits<double>::infinity();
    double best_x = 0.0;
    for (int i = -200000; i <= 200000; ++i) {
        const double x = i * 1e-4;
        if (x == 0.0) continue;
        const double y = v / x;
        const double d = std::hypot(x - p, y - q);
        if (d < best) {
            best = d;
            best_x = x;
        }
    }
    for (int i = -10000; i <= 10000; ++i) {
        const double x = best_x + i * 1e-8;
        if (x == 0.0) continue;
        best = std::min(best, std::hypot(x - p, v / x - q));
    }
    return best;
}

}  // namespace

TEST_CASE("hyperbola distance") {
    CHECK(hyperbola_distance(2.0, 2.0, 4.0) == doctest::Approx(0.0).scale(1.0));
    // Oracle: dense scan over x, frozen value sqrt 2.
    const double oracle = hyperbola_grid_oracle(0.0, 0.0, 1.0);
    CHECK(oracle == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    CHECK(hyperbola_distance(0.0, 0.0, 1.0) == doctest::Approx(oracle).epsilon(1e-9));
    // v = 0: the set is the two axes.
    CHECK(hyperbola_distance(3.0, -0.5, 0.0) == doctest::Approx(0.5));

    SeededRng r(21);
    for (int i = 0; i < 20; ++i) {
        const double p = r.uniform(-3, 3), q = r.uniform(-3, 3), v = r.uniform(-4, 4);
        CAPTURE(p);
        CAPTURE(q);
        CAPTURE(v);
        const HyperbolaPoint h = nearest_on_hyperbola(p, q, v);
        CHECK(h.x * h.y == doctest::Approx(v).epsilon(1e-10).scale(1.0));
        CHECK(h.dist == doctest::Approx(hyperbola_grid_oracle(p, q, v)).epsilon(1e-7).scale(1.0));
    }
}
