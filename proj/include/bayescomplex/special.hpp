#pragma once

#include <functional>
#include <vector>

namespace bayescomplex {

/// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
/// Series expansion below x < a + 1, Lentz continued fraction above.
double gamma_p(double a, double x);

/// CDF of Gamma(shape, scale) at y; 0 for y <= 0.
double gamma_cdf(double y, double shape, double scale);

struct QuadResult {
    double value = 0.0;
    double abs_error = 0.0;
    int evaluations = 0;
};

/// Adaptive Gauss-Kronrod (7/15) on [a, b]. Bisects until each panel's
/// Kronrod-Gauss difference is below max(abs_tol, rel_tol * |total|) scaled
/// by the panel's share of the interval.
QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                              double abs_tol = 1e-14, double rel_tol = 1e-12, int max_depth = 50);

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Golub-Welsch).
QuadratureRule gauss_legendre(int n);

/// n-point Gauss-Hermite rule for E[f(Z)], Z ~ N(0, 1); weights sum to 1.
QuadratureRule gauss_hermite_normal(int n);

}  // namespace bayescomplex
