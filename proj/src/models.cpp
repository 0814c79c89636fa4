#include "bayescomplex/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bayescomplex/errors.hpp"

namespace bayescomplex {

std::vector<double> legendre_basis(int d, double x) {
    if (d < 1) throw PreconditionError("legendre_basis: d must be >= 1");
    std::vector<double> b(static_cast<std::size_t>(d));
    double p_prev = 1.0;
    double p = x;
    for (int i = 0; i < d; ++i) {
        double pi;
        if (i == 0) {
            pi = 1.0;
        } else if (i == 1) {
            pi = x;
        } else {
            const double next = ((2.0 * (i - 1) + 1.0) * x * p - (i - 1) * p_prev) / i;
            p_prev = p;
            p = next;
            pi = p;
        }
        b[static_cast<std::size_t>(i)] = std::sqrt((2.0 * i + 1.0) / 2.0) * pi;
    }
    return b;
}

double eval_linear(const LinearModelParams& p, const BasisSpec& basis, double x) {
    if (!(x >= -1.0 && x <= 1.0))
        throw DomainError("eval_linear: x = " + std::to_string(x) + " outside [-1, 1]");
    if (static_cast<int>(p.w.size()) != basis.d)
        throw PreconditionError("eval_linear: coefficient count differs from basis size");
    const auto b = legendre_basis(basis.d, x);
    double y = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) y += p.w[i] * b[i];
    return y;
}

double linear_l2_distance_sq(const LinearModelParams& w, const LinearModelParams& w_target) {
    if (w.w.size() != w_target.w.size())
        throw PreconditionError("linear_l2_distance_sq: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < w.w.size(); ++i) {
        const double diff = w.w[i] - w_target.w[i];
        s += diff * diff;
    }
    return 0.5 * s;
}

ShallowNetParams ShallowNetParams::zeros(std::size_t k) {
    ShallowNetParams p;
    p.w1.assign(k, 0.0);
    p.w2.assign(k, 0.0);
    p.b1.assign(k, 0.0);
    return p;
}

double forward(const ShallowNetParams& theta, double x) {
    double y = theta.b2;
    for (std::size_t i = 0; i < theta.k(); ++i)
        y += theta.w2[i] * theta.w1[i] * std::max(0.0, x - theta.b1[i]);
    return y;
}

PwlFunction shallow_to_pwl(const ShallowNetParams& theta) {
    std::vector<Knot> raw;
    raw.reserve(theta.k());
    for (std::size_t i = 0; i < theta.k(); ++i)
        raw.push_back({theta.b1[i], theta.w2[i] * theta.w1[i]});
    return canonicalize(std::move(raw), theta.b2, 0.0, 1.0);
}

ShallowNetParams min_norm_realization(const PwlFunction& g, std::size_t k, double inactive_bias) {
    if (g.knots.size() > k)
        throw PreconditionError("min_norm_realization: " + std::to_string(g.knots.size()) +
                                " knots exceed node budget " + std::to_string(k));
    ShallowNetParams p = ShallowNetParams::zeros(k);
    p.b2 = g.bias;
    for (std::size_t i = 0; i < k; ++i) {
        if (i < g.knots.size()) {
            const double v = g.knots[i].v;
            const double r = std::sqrt(std::abs(v));
            p.w1[i] = r;
            p.w2[i] = v / r;
            p.b1[i] = g.knots[i].t;
        } else {
            p.b1[i] = inactive_bias;
        }
    }
    return p;
}

double weight_norm_cost(const ShallowNetParams& theta) {
    double s = 0.0;
    for (std::size_t i = 0; i < theta.k(); ++i)
        s += theta.w1[i] * theta.w1[i] + theta.w2[i] * theta.w2[i];
    return 0.5 * s;
}

double param_distance_sq(const ShallowNetParams& a, const ShallowNetParams& b) {
    if (a.k() != b.k()) throw PreconditionError("param_distance_sq: node counts differ");
    double s = (a.b2 - b.b2) * (a.b2 - b.b2);
    for (std::size_t i = 0; i < a.k(); ++i) {
        s += (a.w1[i] - b.w1[i]) * (a.w1[i] - b.w1[i]);
        s += (a.w2[i] - b.w2[i]) * (a.w2[i] - b.w2[i]);
        s += (a.b1[i] - b.b1[i]) * (a.b1[i] - b.b1[i]);
    }
    return s;
}

std::size_t DeepNetParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t j = 0; j < weights.size(); ++j)
        n += static_cast<std::size_t>(weights[j].size() + biases[j].size());
    return n;
}

std::size_t DeepNetParams::hidden_units() const {
    std::size_t n = 0;
    for (std::size_t j = 1; j + 1 < layer_dims.size(); ++j) n += static_cast<std::size_t>(layer_dims[j]);
    return n;
}

double forward(const DeepNetParams& net, double x) {
    Eigen::VectorXd h(1);
    h(0) = x;
    for (std::size_t j = 0; j < net.weights.size(); ++j) {
        h = net.weights[j] * h + net.biases[j];
        if (j + 1 < net.weights.size()) h = h.cwiseMax(0.0);
    }
    return h(0);
}

namespace {

bool is_reflection_symmetric(const PwlFunction& g0, double tol) {
    std::vector<double> probes = {0.0, 0.5, 1.0};
    for (const auto& k : g0.knots) {
        probes.push_back(k.t);
        probes.push_back(1.0 - k.t);
    }
    return std::all_of(probes.begin(), probes.end(), [&](double s) {
        return std::abs(eval(g0, s) - eval(g0, 1.0 - s)) <= tol;
    });
}

}  // namespace

PeriodicNet build_periodic_deep_net(const PwlFunction& g0, int l, double tol) {
    if (l < 1) throw PreconditionError("build_periodic_deep_net: l must be >= 1");
    if (g0.domain_lo != 0.0 || g0.domain_hi != 1.0)
        throw PreconditionError("build_periodic_deep_net: g0 must live on [0,1]");
    if (!is_reflection_symmetric(g0, tol))
        throw PreconditionError("build_periodic_deep_net: only targets with g0(t) = g0(1-t) are supported");

    // Triangle wave T(x) = 2 min(frac x, 1 - frac x): slope 2 from 0, -4 at
    // every half-integer, +4 at every interior integer.
    std::vector<Knot> tri = {{0.0, 2.0}};
    for (int p = 0; p < l; ++p) {
        if (p > 0) tri.push_back({static_cast<double>(p), 4.0});
        tri.push_back({p + 0.5, -4.0});
    }
    // Half-period profile g~(s) = g0(s/2) on [0,1].
    std::vector<Knot> half;
    for (const auto& k : g0.knots)
        if (k.t < 0.5) half.push_back({2.0 * k.t, 0.5 * k.v});

    const int n_tri = static_cast<int>(tri.size());
    const int n_half = static_cast<int>(half.size());

    PeriodicNet out;
    auto& net = out.net;
    net.layer_dims = {1, n_tri, 1, n_half, 1};

    Eigen::MatrixXd w0 = Eigen::MatrixXd::Ones(n_tri, 1);
    Eigen::VectorXd c0(n_tri);
    Eigen::MatrixXd w1(1, n_tri);
    for (int j = 0; j < n_tri; ++j) {
        c0(j) = -tri[static_cast<std::size_t>(j)].t;
        w1(0, j) = tri[static_cast<std::size_t>(j)].v;
    }
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(1);

    Eigen::MatrixXd w2 = Eigen::MatrixXd::Ones(n_half, 1);
    Eigen::VectorXd c2(n_half);
    Eigen::MatrixXd w3(1, n_half);
    for (int j = 0; j < n_half; ++j) {
        c2(j) = -half[static_cast<std::size_t>(j)].t;
        w3(0, j) = half[static_cast<std::size_t>(j)].v;
    }
    Eigen::VectorXd c3(1);
    c3(0) = g0.bias;

    net.weights = {w0, w1, w2, w3};
    net.biases = {c0, c1, c2, c3};

    out.constrained_parameter_count = net.parameter_count() - net.hidden_units();
    for (const auto& k : g0.knots)
        if (k.t > 0.0) ++out.interior_knots;
    out.shallow_constrained_count = 2 * periodize(g0, l, tol).knots.size() + 1;
    return out;
}

}  // namespace bayescomplex
