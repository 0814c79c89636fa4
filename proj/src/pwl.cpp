#include "bayescomplex/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bayescomplex/errors.hpp"

namespace bayescomplex {

double PwlFunction::slope_at_end() const {
    double s = 0.0;
    for (const auto& k : knots) s += k.v;
    return s;
}

double eval(const PwlFunction& g, double x) {
    if (!(x >= g.domain_lo && x <= g.domain_hi))
        throw DomainError("eval: x = " + std::to_string(x) + " outside [" +
                          std::to_string(g.domain_lo) + ", " + std::to_string(g.domain_hi) + "]");
    double y = g.bias;
    for (const auto& k : g.knots) {
        if (x <= k.t) break;
        y += k.v * (x - k.t);
    }
    return y;
}

PwlFunction canonicalize(std::vector<Knot> raw_knots, double bias, double domain_lo,
                         double domain_hi) {
    if (!(domain_lo < domain_hi)) throw DomainError("canonicalize: empty domain");
    PwlFunction out;
    out.domain_lo = domain_lo;
    out.domain_hi = domain_hi;
    out.bias = bias;
    for (auto& k : raw_knots) {
        if (k.t < domain_lo) {
            out.bias += k.v * (domain_lo - k.t);
            k.t = domain_lo;
        }
    }
    std::stable_sort(raw_knots.begin(), raw_knots.end(),
                     [](const Knot& a, const Knot& b) { return a.t < b.t; });
    for (const auto& k : raw_knots) {
        if (k.t >= domain_hi) break;
        if (!out.knots.empty() && out.knots.back().t == k.t)
            out.knots.back().v += k.v;
        else
            out.knots.push_back(k);
    }
    std::erase_if(out.knots, [](const Knot& k) { return k.v == 0.0; });
    return out;
}

bool approx_equal(const PwlFunction& f, const PwlFunction& g, double tol) {
    auto close = [tol](double a, double b) { return std::abs(a - b) <= tol; };
    if (!close(f.domain_lo, g.domain_lo) || !close(f.domain_hi, g.domain_hi) ||
        !close(f.bias, g.bias))
        return false;
    std::vector<Knot> a, b;
    for (const auto& k : f.knots)
        if (std::abs(k.v) > tol) a.push_back(k);
    for (const auto& k : g.knots)
        if (std::abs(k.v) > tol) b.push_back(k);
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!close(a[i].t, b[i].t) || !close(a[i].v, b[i].v)) return false;
    return true;
}

PwlFunction difference(const PwlFunction& f, const PwlFunction& g) {
    if (f.domain_lo != g.domain_lo || f.domain_hi != g.domain_hi)
        throw DomainError("difference: mismatched domains");
    std::vector<Knot> raw = f.knots;
    raw.reserve(f.knots.size() + g.knots.size());
    for (const auto& k : g.knots) raw.push_back({k.t, -k.v});
    return canonicalize(std::move(raw), f.bias - g.bias, f.domain_lo, f.domain_hi);
}

double integral_sq(const PwlFunction& h) {
    double total = 0.0;
    double x = h.domain_lo;
    double y = h.bias;
    double slope = 0.0;
    auto segment = [&](double x_next) {
        const double len = x_next - x;
        if (len <= 0.0) return;
        const double y_next = y + slope * len;
        total += (y * y + y * y_next + y_next * y_next) * len / 3.0;
        x = x_next;
        y = y_next;
    };
    for (const auto& k : h.knots) {
        segment(std::clamp(k.t, h.domain_lo, h.domain_hi));
        slope += k.v;
    }
    segment(h.domain_hi);
    return total;
}

double l2_distance_sq(const PwlFunction& f, const PwlFunction& g, const L2Measure& mu) {
    if (f.domain_lo != mu.lo() || f.domain_hi != mu.hi() || g.domain_lo != mu.lo() ||
        g.domain_hi != mu.hi())
        throw DomainError("l2_distance_sq: function domain differs from the measure's");
    return l2_distance_sq(f, g);
}

double l2_distance_sq(const PwlFunction& f, const PwlFunction& g) {
    return l2_norm_sq(difference(f, g));
}

double l2_norm_sq(const PwlFunction& f) {
    return integral_sq(f) / (f.domain_hi - f.domain_lo);
}

double variational_complexity(const PwlFunction& g) {
    double s = 0.0;
    for (const auto& k : g.knots) s += std::abs(k.v);
    return s;
}

double prefix_slope_lower_bound(const PwlFunction& g) {
    double w = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < g.knots.size(); ++i) {
        w += g.knots[i].v;
        const double next = i + 1 < g.knots.size() ? g.knots[i + 1].t : g.domain_hi;
        const double len = next - g.knots[i].t;
        total += w * w * len * len * len;
    }
    return total / 12.0;
}

PwlFunction periodize(const PwlFunction& g0, int l, double tol) {
    if (l < 1) throw PreconditionError("periodize: l must be >= 1");
    if (g0.domain_lo != 0.0 || g0.domain_hi != 1.0)
        throw PreconditionError("periodize: g0 must live on [0,1]");
    const double at0 = eval(g0, 0.0);
    const double at1 = eval(g0, 1.0);
    if (std::abs(at0 - at1) > tol)
        throw PreconditionError("periodize: g0(0) = " + std::to_string(at0) +
                                " differs from g0(1) = " + std::to_string(at1));
    const double end_slope = g0.slope_at_end();
    std::vector<Knot> raw;
    raw.reserve(static_cast<std::size_t>(l) * (g0.knots.size() + 1));
    for (int p = 0; p < l; ++p) {
        // Undo the previous period's final slope before restarting the profile.
        if (p > 0) raw.push_back({static_cast<double>(p), -end_slope});
        for (const auto& k : g0.knots) raw.push_back({p + k.t, k.v});
    }
    return canonicalize(std::move(raw), g0.bias, 0.0, static_cast<double>(l));
}

}  // namespace bayescomplex
