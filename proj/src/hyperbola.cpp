#include "bayescomplex/hyperbola.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace bayescomplex {

namespace {

// Root of a function monotone on [lo, hi] with a sign change. Newton steps
// that leave the bracket fall back to bisection.
template <class F, class DF>
double safeguarded_root(F f, DF df, double lo, double hi) {
    double flo = f(lo);
    if (flo == 0.0) return lo;
    if (f(hi) == 0.0) return hi;
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double fx = f(x);
        if (fx == 0.0) return x;
        if ((fx < 0.0) == (flo < 0.0)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        const double d = df(x);
        double next = (d != 0.0) ? x - fx / d : lo - 1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-16 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-300) return next;
        x = next;
    }
    return x;
}

// Real roots of a polynomial on [lo, hi], given the sorted interior points
// between which it is monotone.
template <class F, class DF>
void roots_on_monotone_pieces(F f, DF df, std::vector<double> cuts, double lo, double hi,
                              std::vector<double>& out) {
    cuts.insert(cuts.begin(), lo);
    cuts.push_back(hi);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i];
        const double b = cuts[i + 1];
        if (!(b > a)) continue;
        const double fa = f(a);
        const double fb = f(b);
        if (fa == 0.0) out.push_back(a);
        if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) out.push_back(safeguarded_root(f, df, a, b));
    }
    if (f(hi) == 0.0) out.push_back(hi);
}

}  // namespace

HyperbolaPoint nearest_on_hyperbola(double p, double q, double v) {
    if (v == 0.0) {
        if (std::abs(p) <= std::abs(q)) return {0.0, q, std::abs(p)};
        return {p, 0.0, std::abs(q)};
    }
    const double qv = q * v;
    const double v2 = v * v;
    auto poly = [&](double x) { return (((x - p) * x) * x + qv) * x - v2; };
    auto dpoly = [&](double x) { return ((4.0 * x - 3.0 * p) * x) * x + qv; };
    auto ddpoly = [&](double x) { return (12.0 * x - 6.0 * p) * x; };

    // Cauchy bounds on the real roots of poly and of dpoly.
    const double bound = 1.0 + std::max({std::abs(p), std::abs(qv), v2});
    const double dbound = 1.0 + std::max(0.75 * std::abs(p), 0.25 * std::abs(qv));

    std::vector<double> crit2 = {std::min(0.0, 0.5 * p), std::max(0.0, 0.5 * p)};
    std::vector<double> crit1;
    roots_on_monotone_pieces(dpoly, ddpoly, crit2, -dbound, dbound, crit1);
    std::sort(crit1.begin(), crit1.end());
    crit1.erase(std::unique(crit1.begin(), crit1.end()), crit1.end());

    std::vector<double> roots;
    roots_on_monotone_pieces(poly, dpoly, crit1, -bound, bound, roots);

    // Every candidate lies on the curve, so adding the critical points of
    // poly is harmless and covers double roots the sign test cannot see.
    roots.insert(roots.end(), crit1.begin(), crit1.end());
    HyperbolaPoint best{0.0, 0.0, std::numeric_limits<double>::infinity()};
    for (double x : roots) {
        if (x == 0.0) continue;
        const double y = v / x;
        const double d = std::hypot(x - p, y - q);
        if (d < best.dist) best = {x, y, d};
    }
    return best;
}

}  // namespace bayescomplex
