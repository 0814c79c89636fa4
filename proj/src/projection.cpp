#include "bayescomplex/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bayescomplex/errors.hpp"
#include "bayescomplex/hyperbola.hpp"

namespace bayescomplex {

namespace {

struct CoreNode {
    double b;
    double u;
    double scale;  // w1^2 + w2^2; weight changes are split in proportion to it
    bool locked;   // bias shifted below 0: acts at the origin, never edited
};

std::vector<CoreNode> core_nodes(const ShallowNetParams& th) {
    std::vector<CoreNode> out;
    for (std::size_t i = 0; i < th.k(); ++i)
        out.push_back({th.b1[i], th.w1[i] * th.w2[i], th.w1[i] * th.w1[i] + th.w2[i] * th.w2[i], false});
    return out;
}

std::vector<double> active_positions(const std::vector<CoreNode>& nodes) {
    std::vector<double> pos;
    bool any_locked = false;
    for (const auto& n : nodes) {
        if (n.locked) any_locked = true;
        else if (n.b < 1.0) pos.push_back(n.b);
    }
    if (any_locked) pos.push_back(0.0);
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    return pos;
}

// Two-phase zeroing on the effective model sum_i u_i [x - b_i]_+. Locked
// nodes count as sitting at 0; with pin_origin a short-interval run that
// starts at 0 collapses onto 0 instead of onto its right end.
void zero_core(std::vector<CoreNode>& nodes, bool pin_origin, std::vector<PhaseEvent>& trace) {
    double locked_sum = 0.0;
    bool any_locked = false;
    for (const auto& n : nodes)
        if (n.locked) {
            any_locked = true;
            locked_sum += n.u;
        }

    // Phase 1: collapse maximal runs of intervals shorter than |W(l)|.
    const std::vector<double> pos = active_positions(nodes);
    const std::size_t m = pos.size();
    std::vector<double> W(m, any_locked ? locked_sum : 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (const auto& n : nodes)
            if (!n.locked && n.b < 1.0 && n.b <= pos[i]) W[i] += n.u;
    std::vector<bool> short_iv(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double end = (i + 1 < m) ? pos[i + 1] : 1.0;
        short_iv[i] = (end - pos[i]) < std::abs(W[i]);
    }
    for (std::size_t i = 0; i < m;) {
        if (!short_iv[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < m && short_iv[j + 1]) ++j;
        const double lo = pos[i];
        const double hi = (j + 1 < m) ? pos[j + 1] : 1.0;
        const bool onto_origin = pin_origin && any_locked && lo == 0.0;
        if (onto_origin && hi == 1.0)
            throw AssumptionViolation("projection: every interval is short, norm too large for the bias case");
        const double target = onto_origin ? 0.0 : hi;
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            auto& n = nodes[q];
            if (n.locked || n.b >= 1.0 || n.b < lo || n.b > hi || n.b == target) continue;
            trace.push_back({PhaseEvent::Kind::BiasCollapse, q, n.b, target});
            n.b = target;
        }
        i = j + 1;
    }

    // Phase 2: zero the weight sum of every group sharing a position.
    for (double p : active_positions(nodes)) {
        std::vector<std::size_t> members;
        double sum = (any_locked && p == 0.0) ? locked_sum : 0.0;
        for (std::size_t q = 0; q < nodes.size(); ++q)
            if (!nodes[q].locked && nodes[q].b < 1.0 && nodes[q].b == p) {
                members.push_back(q);
                sum += nodes[q].u;
            }
        if (sum == 0.0) continue;
        if (members.empty()) throw AssumptionViolation("projection: no adjustable node at a kink position");
        double total_scale = 0.0;
        for (std::size_t q : members) total_scale += nodes[q].scale;
        const double delta = -sum;
        double rest = (any_locked && p == 0.0) ? locked_sum : 0.0;
        for (std::size_t r = 0; r < members.size(); ++r) {
            auto& n = nodes[members[r]];
            const double before = n.u;
            if (r + 1 < members.size()) {
                const double share = total_scale > 0.0 ? n.scale / total_scale : 1.0 / members.size();
                n.u += delta * share;
                rest += n.u;
            } else {
                n.u = -rest;  // closes the group sum exactly
            }
            trace.push_back({PhaseEvent::Kind::WeightChange, members[r], before, n.u});
        }
    }
}

// Moves (w1, w2) to the nearest point with w1 w2 = u.
void realize_product(double& w1, double& w2, double u) {
    if (w1 * w2 == u) return;
    if (w1 == 0.0 && w2 == 0.0) {
        const double r = std::sqrt(std::abs(u));
        w1 = r;
        w2 = std::copysign(r, u);
        return;
    }
    const HyperbolaPoint p = nearest_on_hyperbola(w1, w2, u);
    w1 = p.x;
    w2 = p.y;
}

void apply_core(ShallowNetParams& th, const std::vector<CoreNode>& nodes) {
    for (std::size_t i = 0; i < th.k(); ++i) {
        th.b1[i] = nodes[i].b;
        if (!nodes[i].locked) realize_product(th.w1[i], th.w2[i], nodes[i].u);
    }
}

double effective_distance_sq(const ShallowNetParams& a, const ShallowNetParams& b) {
    double s = (a.b2 - b.b2) * (a.b2 - b.b2);
    for (std::size_t i = 0; i < a.k(); ++i) {
        const double du = a.w1[i] * a.w2[i] - b.w1[i] * b.w2[i];
        const double db = a.b1[i] - b.b1[i];
        s += du * du + db * db;
    }
    return s;
}

double param_norm_sq(const ShallowNetParams& th) {
    double s = th.b2 * th.b2;
    for (std::size_t i = 0; i < th.k(); ++i) s += th.w1[i] * th.w1[i] + th.w2[i] * th.w2[i] + th.b1[i] * th.b1[i];
    return s;
}

void require_nonnegative_biases(const ShallowNetParams& th) {
    for (double b : th.b1)
        if (b < 0.0) throw PreconditionError("projection: hidden biases must be >= 0");
}

void require_in_ball(const ShallowNetParams& th, double R) {
    if (!(R > 0.0)) throw PreconditionError("projection: R must be > 0");
    if (param_norm_sq(th) > R * R * (1.0 + 1e-12)) throw PreconditionError("projection: theta lies outside B_R");
}

void require_guard(double norm_sq, double R, std::size_t k, const ProjectionOptions& opts) {
    const double limit = opts.guard_fraction * std::pow(R, -4.0) * std::pow(static_cast<double>(k), -5.0);
    if (!(norm_sq <= limit)) {
        std::ostringstream msg;
        msg << "projection: smallness guard fails, norm^2 = " << norm_sq << " > " << limit;
        throw PreconditionError(msg.str());
    }
}

void check_exact(const ShallowNetParams& th, const PwlFunction& target) {
    if (!approx_equal(shallow_to_pwl(th), target))
        throw NumericalError("projection: result does not represent the target to 1e-12");
}

struct Located {
    double x1;
    double f_x1;
    double W_x1;
};

// Steepest descending point before f first reaches b2/2 (b2 > 0, b1 >= 0).
Located locate_descent(const ShallowNetParams& th) {
    const PwlFunction f = shallow_to_pwl(th);
    const double half = 0.5 * th.b2;
    std::vector<double> cuts = {0.0};
    for (const auto& kn : f.knots)
        if (kn.t > 0.0) cuts.push_back(kn.t);
    cuts.push_back(1.0);
    double x0 = -1.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double fa = eval(f, cuts[i]);
        const double fb = eval(f, cuts[i + 1]);
        if (fb <= half) {
            x0 = cuts[i] + (fa - half) / (fa - fb) * (cuts[i + 1] - cuts[i]);
            break;
        }
    }
    if (x0 <= 0.0) throw AssumptionViolation("projection: f never falls to b2/2 on [0,1]");
    double best_slope = 0.0;
    double x1 = -1.0;
    for (std::size_t i = 0; i + 1 < cuts.size() && cuts[i] < x0; ++i) {
        const double a = cuts[i];
        const double b = std::min(cuts[i + 1], x0);
        if (!(b > a)) continue;
        const double slope = (eval(f, b) - eval(f, a)) / (b - a);
        if (x1 < 0.0 || slope < best_slope) {
            best_slope = slope;
            x1 = 0.5 * (a + b);
        }
    }
    double W = 0.0;
    for (std::size_t i = 0; i < th.k(); ++i)
        if (th.b1[i] <= x1) W += th.w1[i] * th.w2[i];
    if (!(W < 0.0)) throw AssumptionViolation("projection: no descending segment before b2/2");
    return {x1, forward(th, x1), W};
}

// Shared by the bias and target variants; no guard checks.
ShallowNetParams zero_with_bias(const ShallowNetParams& theta, double norm_sq, std::vector<PhaseEvent>& trace,
                                int& case_taken) {
    ShallowNetParams work = theta;
    const std::size_t out_idx = theta.k();
    const double eps = std::sqrt(norm_sq);
    if (std::abs(theta.b2) <= std::sqrt(eps)) {
        case_taken = 1;
        if (work.b2 != 0.0) trace.push_back({PhaseEvent::Kind::OutputBiasZero, out_idx, work.b2, 0.0});
        work.b2 = 0.0;
        auto nodes = core_nodes(work);
        zero_core(nodes, false, trace);
        apply_core(work, nodes);
        return work;
    }

    case_taken = 2;
    const double sign = theta.b2 > 0.0 ? 1.0 : -1.0;
    for (double& w : work.w2) w *= sign;
    work.b2 *= sign;

    const Located loc = locate_descent(work);
    const double shift = loc.x1 - loc.f_x1 / loc.W_x1;
    std::size_t i0 = out_idx;
    for (std::size_t i = 0; i < work.k(); ++i)
        if (work.b1[i] > loc.x1 && (i0 == out_idx || work.b1[i] < work.b1[i0])) i0 = i;
    if (i0 == out_idx) throw AssumptionViolation("projection: no hidden bias beyond the descent point");

    auto nodes = core_nodes(work);
    for (std::size_t i = 0; i < work.k(); ++i) {
        if (work.b1[i] >= loc.x1) continue;
        trace.push_back({PhaseEvent::Kind::BiasShift, i, nodes[i].b, nodes[i].b - shift});
        nodes[i].b -= shift;
        nodes[i].locked = true;
    }
    trace.push_back({PhaseEvent::Kind::BiasShift, i0, nodes[i0].b, 0.0});
    nodes[i0].b = 0.0;
    zero_core(nodes, true, trace);
    apply_core(work, nodes);

    for (double& w : work.w2) w *= sign;
    work.b2 *= sign;
    return work;
}

void finish(ProjectionResult& res, const ShallowNetParams& theta) {
    res.movement_sq = param_distance_sq(theta, res.theta_star);
    res.effective_movement_sq = effective_distance_sq(theta, res.theta_star);
}

}  // namespace

ProjectionResult project_to_zero(const ShallowNetParams& theta) {
    if (theta.b2 != 0.0) throw PreconditionError("project_to_zero: b2 must be 0");
    require_nonnegative_biases(theta);
    const std::size_t k = theta.k();
    const double norm_sq = l2_norm_sq(shallow_to_pwl(theta));
    const double limit = 1.0 / (12.0 * std::pow(static_cast<double>(k + 1), 5.0));
    if (!(norm_sq < limit)) {
        std::ostringstream msg;
        msg << "project_to_zero: smallness condition fails, norm^2 = " << norm_sq << " >= " << limit;
        throw PreconditionError(msg.str());
    }
    ProjectionResult res;
    res.norm_sq = norm_sq;
    res.theta_star = theta;
    auto nodes = core_nodes(theta);
    zero_core(nodes, false, res.phases);
    apply_core(res.theta_star, nodes);
    check_exact(res.theta_star, PwlFunction{});
    finish(res, theta);
    res.bound = 96.0 * std::pow(static_cast<double>(k), 13.0 / 5.0) * std::pow(norm_sq, 2.0 / 5.0);
    return res;
}

ProjectionResult project_to_zero_with_bias(const ShallowNetParams& theta, double R, const ProjectionOptions& opts) {
    require_nonnegative_biases(theta);
    require_in_ball(theta, R);
    const std::size_t k = theta.k();
    const double norm_sq = l2_norm_sq(shallow_to_pwl(theta));
    require_guard(norm_sq, R, k, opts);
    ProjectionResult res;
    res.norm_sq = norm_sq;
    res.theta_star = zero_with_bias(theta, norm_sq, res.phases, res.case_taken);
    check_exact(res.theta_star, PwlFunction{});
    finish(res, theta);
    res.bound = std::pow(static_cast<double>(k), 5.0) * std::pow(R, 4.0 / 5.0) * std::pow(norm_sq, 1.0 / 5.0);
    return res;
}

ProjectionResult project_to_target(const ShallowNetParams& theta, const PwlFunction& g, double R,
                                   const ProjectionOptions& opts) {
    const std::size_t k = theta.k();
    const std::size_t c = g.knots.size();
    if (c > k) throw PreconditionError("project_to_target: target has more knots than the network has nodes");
    if (g.domain_lo != 0.0 || g.domain_hi != 1.0) throw PreconditionError("project_to_target: g must live on [0,1]");
    for (const auto& kn : g.knots)
        if (!(kn.t > 0.0 && kn.t < 1.0)) throw PreconditionError("project_to_target: knots must lie in (0,1)");
    require_nonnegative_biases(theta);
    require_in_ball(theta, R);
    const double norm_sq = l2_distance_sq(g, shallow_to_pwl(theta));
    require_guard(norm_sq, R, k, opts);

    // Augmented network h = f_theta - g on k + c nodes.
    ShallowNetParams h = ShallowNetParams::zeros(k + c);
    for (std::size_t i = 0; i < k; ++i) {
        h.w1[i] = theta.w1[i];
        h.w2[i] = theta.w2[i];
        h.b1[i] = theta.b1[i];
    }
    for (std::size_t j = 0; j < c; ++j) {
        const double v = g.knots[j].v;
        const double r = std::sqrt(std::abs(v));
        h.w1[k + j] = r;
        h.w2[k + j] = -v / r;
        h.b1[k + j] = g.knots[j].t;
    }
    h.b2 = theta.b2 - g.bias;

    ProjectionResult res;
    res.norm_sq = norm_sq;
    const ShallowNetParams hs = zero_with_bias(h, norm_sq, res.phases, res.case_taken);

    ShallowNetParams ts = ShallowNetParams::zeros(k);
    for (std::size_t i = 0; i < k; ++i) {
        ts.w1[i] = hs.w1[i];
        ts.w2[i] = hs.w2[i];
        ts.b1[i] = hs.b1[i];
    }
    ts.b2 = hs.b2 + g.bias;

    std::vector<double> moved_t(c);
    for (std::size_t j = 0; j < c; ++j) {
        const double t_star = hs.b1[k + j];
        const double v_star = -hs.w1[k + j] * hs.w2[k + j];
        if (!(t_star > 0.0 && t_star < 1.0))
            throw AssumptionViolation("project_to_target: a target knot left (0,1)");
        if (v_star == 0.0) throw AssumptionViolation("project_to_target: a target knot weight vanished");
        for (std::size_t q = 0; q < j; ++q)
            if (moved_t[q] == t_star) throw AssumptionViolation("project_to_target: two target knots collapsed");
        moved_t[j] = t_star;

        std::vector<std::size_t> group;
        double total_scale = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            if (ts.b1[i] == t_star) {
                group.push_back(i);
                total_scale += ts.w1[i] * ts.w1[i] + ts.w2[i] * ts.w2[i];
            }
        if (group.empty()) throw AssumptionViolation("project_to_target: no node carries a target knot");

        const double delta = g.knots[j].v - v_star;
        double placed = 0.0;
        for (std::size_t r = 0; r < group.size(); ++r) {
            const std::size_t i = group[r];
            res.phases.push_back({PhaseEvent::Kind::KnotRestore, i, ts.b1[i], g.knots[j].t});
            ts.b1[i] = g.knots[j].t;
            const double before = ts.w1[i] * ts.w2[i];
            double after;
            if (r + 1 < group.size()) {
                const double s = ts.w1[i] * ts.w1[i] + ts.w2[i] * ts.w2[i];
                after = before + delta * (total_scale > 0.0 ? s / total_scale : 1.0 / group.size());
                placed += after;
            } else {
                after = g.knots[j].v - placed;
            }
            if (after != before) {
                res.phases.push_back({PhaseEvent::Kind::WeightChange, i, before, after});
                realize_product(ts.w1[i], ts.w2[i], after);
            }
        }
        res.assignment.push_back(std::move(group));
    }

    res.theta_star = ts;
    check_exact(res.theta_star, g);
    finish(res, theta);
    res.bound = std::pow(static_cast<double>(k), 7.0) * std::pow(R, 4.0 / 5.0) * std::pow(norm_sq, 1.0 / 5.0);
    return res;
}

double prefix_sum_energy(std::span<const double> x) {
    double run = 0.0, s = 0.0;
    for (double v : x) {
        run += v;
        s += run * run;
    }
    return s;
}

JensenSides log_exp_jensen_sides(std::span<const double> px, std::span<const double> py,
                                 std::span<const double> f) {
    const std::size_t nx = px.size();
    const std::size_t ny = py.size();
    if (f.size() != nx * ny) throw PreconditionError("log_exp_jensen_sides: f has the wrong size");
    auto log_mean_exp_neg = [&](auto value_at) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ny; ++j) m = std::max(m, -value_at(j));
        double s = 0.0;
        for (std::size_t j = 0; j < ny; ++j) s += py[j] * std::exp(-value_at(j) - m);
        return m + std::log(s);
    };
    JensenSides out;
    for (std::size_t i = 0; i < nx; ++i)
        out.lhs += px[i] * log_mean_exp_neg([&](std::size_t j) { return f[i * ny + j]; });
    out.rhs = log_mean_exp_neg([&](std::size_t j) {
        double e = 0.0;
        for (std::size_t i = 0; i < nx; ++i) e += px[i] * f[i * ny + j];
        return e;
    });
    return out;
}

}  // namespace bayescomplex
