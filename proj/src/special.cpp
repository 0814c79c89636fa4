#include "bayescomplex/special.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "bayescomplex/errors.hpp"

namespace bayescomplex {

namespace {

double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper tail Q(a, x) by the modified Lentz continued fraction.
double gamma_q_cf(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-17) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// 15-point Kronrod nodes on [0, 1] half-line and weights; the 7-point Gauss
// rule uses every second node.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double kronrod;
    double err;
};

Panel gk15(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double rk = fc * kWgk[7];
    double rg = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[static_cast<std::size_t>(j)];
        const double fsum = f(c - dx) + f(c + dx);
        rk += kWgk[static_cast<std::size_t>(j)] * fsum;
        if (j % 2 == 1) rg += kWg[static_cast<std::size_t>(j / 2)] * fsum;
    }
    return {rk * h, std::abs((rk - rg) * h)};
}

void adapt(const std::function<double(double)>& f, double a, double b, double tol, int depth,
           QuadResult& acc, double whole) {
    const Panel p = gk15(f, a, b);
    acc.evaluations += 15;
    const double share = (b - a) / whole;
    if (p.err <= tol * share || depth <= 0 || b - a <= 1e-15 * whole) {
        acc.value += p.kronrod;
        acc.abs_error += p.err;
        return;
    }
    const double m = 0.5 * (a + b);
    adapt(f, a, m, tol, depth - 1, acc, whole);
    adapt(f, m, b, tol, depth - 1, acc, whole);
}

}  // namespace

double gamma_p(double a, double x) {
    if (!(a > 0.0)) throw DomainError("gamma_p: a must be > 0");
    if (!(x >= 0.0)) throw DomainError("gamma_p: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return std::min(1.0, gamma_p_series(a, x));
    return std::max(0.0, 1.0 - gamma_q_cf(a, x));
}

double gamma_cdf(double y, double shape, double scale) {
    if (y <= 0.0) return 0.0;
    return gamma_p(shape, y / scale);
}

QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                              double abs_tol, double rel_tol, int max_depth) {
    QuadResult acc;
    if (a == b) return acc;
    // A first coarse pass fixes the scale for the relative tolerance.
    const Panel rough = gk15(f, a, b);
    const double tol = std::max(abs_tol, rel_tol * std::abs(rough.kronrod));
    adapt(f, a, b, tol, max_depth, acc, b - a);
    acc.evaluations += 15;
    return acc;
}

namespace {

QuadratureRule golub_welsch(const Eigen::VectorXd& off_diag, double mu0) {
    const auto n = off_diag.size() + 1;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        jac(i, i + 1) = off_diag(i);
        jac(i + 1, i) = off_diag(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    QuadratureRule rule;
    for (Eigen::Index i = 0; i < n; ++i) {
        rule.nodes.push_back(es.eigenvalues()(i));
        const double v0 = es.eigenvectors()(0, i);
        rule.weights.push_back(mu0 * v0 * v0);
    }
    return rule;
}

}  // namespace

QuadratureRule gauss_legendre(int n) {
    if (n < 1) throw PreconditionError("gauss_legendre: n must be >= 1");
    if (n == 1) return {{0.0}, {2.0}};
    Eigen::VectorXd beta(n - 1);
    for (int i = 1; i < n; ++i) beta(i - 1) = i / std::sqrt(4.0 * i * i - 1.0);
    return golub_welsch(beta, 2.0);
}

QuadratureRule gauss_hermite_normal(int n) {
    if (n < 1) throw PreconditionError("gauss_hermite_normal: n must be >= 1");
    if (n == 1) return {{0.0}, {1.0}};
    // Probabilists' Hermite recurrence: He_{i+1} = x He_i - i He_{i-1}.
    Eigen::VectorXd beta(n - 1);
    for (int i = 1; i < n; ++i) beta(i - 1) = std::sqrt(static_cast<double>(i));
    return golub_welsch(beta, 1.0);
}

}  // namespace bayescomplex
