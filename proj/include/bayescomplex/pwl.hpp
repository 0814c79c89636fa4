#pragma once

#include <vector>

namespace bayescomplex {

struct Knot {
    double t = 0.0;  // location
    double v = 0.0;  // slope change
};

/// g(x) = bias + sum_i v_i [x - t_i]_+ on [domain_lo, domain_hi].
///
/// Canonical form: knots strictly increasing in t, domain_lo <= t < domain_hi,
/// and every v nonzero. Build through canonicalize() to get that guarantee.
struct PwlFunction {
    double domain_lo = 0.0;
    double domain_hi = 1.0;
    double bias = 0.0;
    std::vector<Knot> knots;

    double slope_at_end() const;
};

struct L2Measure {
    enum class Kind { UniformUnit, UniformSym };
    Kind kind = Kind::UniformUnit;

    double lo() const { return kind == Kind::UniformUnit ? 0.0 : -1.0; }
    double hi() const { return 1.0; }
};

/// Throws DomainError when x is outside [domain_lo, domain_hi].
double eval(const PwlFunction& g, double x);

/// Sorts, merges knots at equal locations, and drops zero slope changes.
/// Knots left of domain_lo fold into the bias plus a knot at domain_lo;
/// knots at or beyond domain_hi are dropped since they never act.
PwlFunction canonicalize(std::vector<Knot> raw_knots, double bias, double domain_lo = 0.0,
                         double domain_hi = 1.0);

/// Canonical-form equality. Knots with |v| <= tol are ignored on both sides,
/// and every remaining field must agree to within tol.
bool approx_equal(const PwlFunction& f, const PwlFunction& g, double tol = 1e-12);

/// f - g as a canonical function. Domains must match.
PwlFunction difference(const PwlFunction& f, const PwlFunction& g);

/// Integral of h^2 over the domain, exact per segment.
double integral_sq(const PwlFunction& h);

/// E_{x ~ mu}[(f(x) - g(x))^2]. Both functions must live on mu's domain.
double l2_distance_sq(const PwlFunction& f, const PwlFunction& g, const L2Measure& mu);

/// Same expectation under the uniform law on the shared domain of f and g.
double l2_distance_sq(const PwlFunction& f, const PwlFunction& g);

/// Mean of f^2 under the uniform law on f's domain.
double l2_norm_sq(const PwlFunction& f);

/// Sum of |v_i|, the total variation of g' including a knot at domain_lo.
double variational_complexity(const PwlFunction& g);

/// (1/12) sum_i W_i^2 (t_{i+1} - t_i)^3 with W_i the running slope after
/// knot i and t_{k+1} = domain_hi. Lower bound for the integral of g^2 when
/// the bias is zero.
double prefix_slope_lower_bound(const PwlFunction& g);

/// g0 on [0,1] tiled onto [0,l]: g(x) = g0(x - floor(x)).
/// Throws PreconditionError if g0(0) != g0(1) beyond tol.
PwlFunction periodize(const PwlFunction& g0, int l, double tol = 1e-12);

}  // namespace bayescomplex
