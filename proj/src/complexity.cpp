#include "bayescomplex/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bayescomplex/errors.hpp"
#include "bayescomplex/hyperbola.hpp"
#include "bayescomplex/parallel.hpp"
#include "bayescomplex/special.hpp"
#include "bayescomplex/stats.hpp"

namespace bayescomplex {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sum(const std::vector<double>& xs) {
    double m = -kInf;
    for (double x : xs) m = std::max(m, x);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

void check_eps_sq(double eps_sq) {
    if (!(eps_sq > 0.0) || !std::isfinite(eps_sq))
        throw PreconditionError("eps_sq must be finite and > 0");
}

ComplexityEstimate flagged_zero(std::size_t n, double eps_sq, EstimateMethod m) {
    ComplexityEstimate e;
    e.chi = kInf;
    e.log_prob = -kInf;
    e.std_err = kInf;
    e.n_samples = n;
    e.n_hits = 0;
    e.epsilon_sq = eps_sq;
    e.method = m;
    e.zero_hits = true;
    e.chi_lower_bound = n > 0 ? -std::log(3.0 / static_cast<double>(n)) : 0.0;
    if (e.chi_lower_bound < 0.0) e.chi_lower_bound = 0.0;
    return e;
}

ComplexityEstimate from_hits(std::size_t hits, std::size_t n, double eps_sq) {
    if (hits == 0) return flagged_zero(n, eps_sq, EstimateMethod::NaiveMC);
    ComplexityEstimate e;
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    e.log_prob = std::log(p);
    e.chi = -e.log_prob;
    e.std_err = std::sqrt((1.0 - p) / (static_cast<double>(n) * p));
    e.n_samples = n;
    e.n_hits = hits;
    e.epsilon_sq = eps_sq;
    e.method = EstimateMethod::NaiveMC;
    return e;
}

struct WeightedStats {
    LogMeanExp lme;
    std::size_t hits = 0;

    void merge(const WeightedStats& o) {
        lme.merge(o.lme);
        hits += o.hits;
    }
};

ComplexityEstimate from_weighted(const WeightedStats& s, double eps_sq, EstimateMethod m) {
    if (s.hits == 0 && m != EstimateMethod::LogSumExpMC) return flagged_zero(s.lme.n, eps_sq, m);
    ComplexityEstimate e;
    e.log_prob = s.lme.log_mean();
    e.chi = -e.log_prob;
    e.std_err = s.lme.log_mean_std_err();
    e.n_samples = s.lme.n;
    e.n_hits = s.hits;
    e.epsilon_sq = eps_sq;
    e.method = m;
    if (e.log_prob == -kInf) {
        e.zero_hits = true;
        e.chi_lower_bound = -std::log(3.0 / static_cast<double>(e.n_samples));
    }
    return e;
}

template <class Chunk>
WeightedStats run_weighted(std::size_t n, unsigned workers, const SeededRng& rng, Chunk chunk) {
    auto parts = run_partitioned(n, workers, rng, chunk);
    WeightedStats total;
    for (const auto& p : parts) total.merge(p);
    return total;
}

template <class Chunk>
std::size_t run_hits(std::size_t n, unsigned workers, const SeededRng& rng, Chunk chunk) {
    auto parts = run_partitioned(n, workers, rng, chunk);
    return std::accumulate(parts.begin(), parts.end(), std::size_t{0});
}

// Enumerates injective maps from c knots into k nodes. fn receives the
// node index assigned to each knot.
template <class Fn>
void for_each_assignment(std::size_t c, std::size_t k, Fn fn) {
    std::vector<std::size_t> assign(c);
    std::vector<bool> used(k, false);
    auto rec = [&](auto&& self, std::size_t j) -> void {
        if (j == c) {
            fn(assign);
            return;
        }
        for (std::size_t i = 0; i < k; ++i) {
            if (used[i]) continue;
            used[i] = true;
            assign[j] = i;
            self(self, j + 1);
            used[i] = false;
        }
    };
    rec(rec, 0);
}

std::vector<std::size_t> random_assignment(std::size_t c, std::size_t k, SeededRng& rng) {
    std::vector<std::size_t> nodes(k);
    std::iota(nodes.begin(), nodes.end(), std::size_t{0});
    for (std::size_t j = 0; j < c; ++j) {
        const std::size_t pick = j + static_cast<std::size_t>(rng.below(k - j));
        std::swap(nodes[j], nodes[pick]);
    }
    nodes.resize(c);
    return nodes;
}

// ---- NN importance-sampling cloud ----

struct NnCloud {
    std::size_t k;
    NnPriorSpec prior;
    PwlFunction g;
    double eps;
    std::vector<double> s_u;  // slope-product scale per knot
    std::vector<double> s_b;  // knot-location scale per knot
    double s_out;             // output bias scale
    double s_zero;            // product scale for parked surplus nodes
    bool has_upper_bias_range;

    NnCloud(const NnFamily& fam, const PwlFunction& target, double eps_sq, const IsOptions& opts)
        : k(fam.k), prior(fam.prior), g(target), eps(std::sqrt(eps_sq)) {
        const std::size_t c = g.knots.size();
        if (c > k)
            throw PreconditionError("importance sampling: target has more knots than the network has nodes");
        const double scale = opts.c / std::sqrt(2.0 * static_cast<double>(c) + 1.0);
        for (const auto& kn : g.knots) {
            const double tail = std::max(1.0 - kn.t, 1e-6);
            s_u.push_back(scale * eps * std::sqrt(3.0) / std::pow(tail, 1.5));
            s_b.push_back(scale * eps / (std::abs(kn.v) * std::sqrt(tail)));
        }
        s_out = scale * eps;
        s_zero = scale * eps * std::sqrt(3.0);
        has_upper_bias_range = prior.M > 1.0;
    }

    double log_active(double w1, double w2, double b1, std::size_t j) const {
        if (w1 == 0.0) return -kInf;
        const double su = s_u[j];
        const double resid = w1 * w2 - g.knots[j].v;
        return log_normal_density(w1, prior.sigma_w_sq) + std::log(std::abs(w1)) +
               log_normal_density(resid, su * su) + log_normal_density(b1 - g.knots[j].t, s_b[j] * s_b[j]);
    }

    double log_surplus(double w1, double w2, double b1) const {
        const double log_w1 = log_normal_density(w1, prior.sigma_w_sq);
        double parked = -kInf;
        if (w1 != 0.0 && b1 >= 0.0 && b1 <= prior.M)
            parked = log_w1 + std::log(std::abs(w1)) + log_normal_density(w1 * w2, s_zero * s_zero) -
                     std::log(prior.M);
        if (!has_upper_bias_range) return parked;
        double beyond = -kInf;
        if (b1 >= 1.0 && b1 <= prior.M)
            beyond = log_w1 + log_normal_density(w2, prior.sigma_w_sq) - std::log(prior.M - 1.0);
        return std::log(0.5) + log_add(parked, beyond);
    }

    double log_density(const ShallowNetParams& th) const {
        const std::size_t c = g.knots.size();
        std::vector<double> surplus(k);
        double surplus_total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            surplus[i] = log_surplus(th.w1[i], th.w2[i], th.b1[i]);
            surplus_total += surplus[i];
        }
        std::vector<std::vector<double>> gain(k, std::vector<double>(c));
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double a = log_active(th.w1[i], th.w2[i], th.b1[i], j);
                gain[i][j] = (surplus[i] == -kInf) ? a : a - surplus[i];
            }
        std::vector<double> terms;
        for_each_assignment(c, k, [&](const std::vector<std::size_t>& assign) {
            // Recompute the surplus part when some unassigned node has zero
            // surplus density, since the subtraction trick above breaks then.
            double lp = 0.0;
            std::vector<bool> assigned(k, false);
            for (std::size_t j = 0; j < c; ++j) assigned[assign[j]] = true;
            bool finite_surplus = std::isfinite(surplus_total);
            if (finite_surplus) {
                lp = surplus_total;
                for (std::size_t j = 0; j < c; ++j) lp += gain[assign[j]][j];
            } else {
                for (std::size_t i = 0; i < k; ++i)
                    if (!assigned[i]) lp += surplus[i];
                for (std::size_t j = 0; j < c; ++j)
                    lp += log_active(th.w1[assign[j]], th.w2[assign[j]], th.b1[assign[j]], j);
            }
            terms.push_back(lp);
        });
        const double n_assign = static_cast<double>(terms.size());
        return log_sum(terms) - std::log(n_assign) + log_normal_density(th.b2 - g.bias, s_out * s_out);
    }

    ShallowNetParams sample(SeededRng& rng) const {
        const std::size_t c = g.knots.size();
        const double sw = std::sqrt(prior.sigma_w_sq);
        ShallowNetParams th = ShallowNetParams::zeros(k);
        const auto assign = random_assignment(c, k, rng);
        std::vector<bool> assigned(k, false);
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t i = assign[j];
            assigned[i] = true;
            const double w1 = sw * rng.normal();
            const double u = g.knots[j].v + s_u[j] * rng.normal();
            th.w1[i] = w1;
            th.w2[i] = u / w1;
            th.b1[i] = g.knots[j].t + s_b[j] * rng.normal();
        }
        for (std::size_t i = 0; i < k; ++i) {
            if (assigned[i]) continue;
            const bool beyond = has_upper_bias_range && rng.uniform() < 0.5;
            th.w1[i] = sw * rng.normal();
            if (beyond) {
                th.w2[i] = sw * rng.normal();
                th.b1[i] = rng.uniform(1.0, prior.M);
            } else {
                th.w2[i] = s_zero * rng.normal() / th.w1[i];
                th.b1[i] = rng.uniform(0.0, prior.M);
            }
        }
        th.b2 = g.bias + s_out * rng.normal();
        return th;
    }
};

LinearModelParams sample_linear_cloud(const LinearTarget& g, double tau, SeededRng& rng) {
    LinearModelParams w;
    w.w.resize(g.coeffs.size());
    for (std::size_t i = 0; i < g.coeffs.size(); ++i) w.w[i] = g.coeffs[i] + tau * rng.normal();
    return w;
}

double linear_cloud_log_density(const LinearModelParams& w, const LinearTarget& g, double tau) {
    double lp = 0.0;
    for (std::size_t i = 0; i < g.coeffs.size(); ++i) lp += log_normal_density(w.w[i] - g.coeffs[i], tau * tau);
    return lp;
}

void check_linear(const LinearFamily& fam, const LinearTarget& g) {
    fam.prior.validate();
    if (fam.d < 1) throw PreconditionError("LinearFamily: d must be >= 1");
    if (static_cast<int>(g.coeffs.size()) != fam.d)
        throw PreconditionError("LinearTarget: coefficient count differs from d");
    if (g.perp_sq < 0.0) throw PreconditionError("LinearTarget: perp_sq must be >= 0");
}

void check_nn(const NnFamily& fam) {
    fam.prior.validate();
    if (fam.k < 1) throw PreconditionError("NnFamily: k must be >= 1");
}

}  // namespace

const char* to_string(EstimateMethod m) {
    switch (m) {
        case EstimateMethod::NaiveMC: return "naive_mc";
        case EstimateMethod::ImportanceSampling: return "importance_sampling";
        case EstimateMethod::ClosedFormQ: return "closed_form_q";
        case EstimateMethod::LogSumExpMC: return "log_sum_exp_mc";
    }
    return "unknown";
}

double linear_distance_sq(const LinearModelParams& w, const LinearTarget& g) {
    return linear_l2_distance_sq(w, LinearModelParams{g.coeffs}) + g.perp_sq;
}

double nn_distance_sq(const ShallowNetParams& theta, const PwlFunction& g) {
    return l2_distance_sq(shallow_to_pwl(theta), g, L2Measure{});
}

// ---- Sharp complexity ---------------------------------------------------------

ComplexityEstimate sharp_complexity_mc(const LinearFamily& fam, const LinearTarget& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng, unsigned workers) {
    check_linear(fam, g);
    check_eps_sq(eps_sq);
    if (n < 1) throw PreconditionError("sharp_complexity_mc: n must be >= 1");
    const std::size_t hits = run_hits(n, workers, rng, [&](SeededRng& r, std::size_t m) {
        std::size_t h = 0;
        for (std::size_t s = 0; s < m; ++s)
            if (linear_distance_sq(sample_linear_prior(fam.prior, fam.d, r), g) <= eps_sq) ++h;
        return h;
    });
    return from_hits(hits, n, eps_sq);
}

ComplexityEstimate sharp_complexity_mc(const NnFamily& fam, const PwlFunction& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng, unsigned workers) {
    check_nn(fam);
    check_eps_sq(eps_sq);
    if (n < 1) throw PreconditionError("sharp_complexity_mc: n must be >= 1");
    const std::size_t hits = run_hits(n, workers, rng, [&](SeededRng& r, std::size_t m) {
        std::size_t h = 0;
        for (std::size_t s = 0; s < m; ++s)
            if (nn_distance_sq(sample_nn_prior(fam.prior, fam.k, r), g) <= eps_sq) ++h;
        return h;
    });
    return from_hits(hits, n, eps_sq);
}

ComplexityEstimate sharp_complexity_is(const LinearFamily& fam, const LinearTarget& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng, const IsOptions& opts,
                                       unsigned workers) {
    check_linear(fam, g);
    check_eps_sq(eps_sq);
    if (n < 1) throw PreconditionError("sharp_complexity_is: n must be >= 1");
    const double room = eps_sq - g.perp_sq;
    if (room <= 0.0) return flagged_zero(n, eps_sq, EstimateMethod::ImportanceSampling);
    const double tau = opts.c * std::sqrt(2.0 * room / fam.d);
    const auto stats = run_weighted(n, workers, rng, [&](SeededRng& r, std::size_t m) {
        WeightedStats s;
        for (std::size_t i = 0; i < m; ++i) {
            const LinearModelParams w =
                (i % 2 == 0) ? sample_linear_prior(fam.prior, fam.d, r) : sample_linear_cloud(g, tau, r);
            if (linear_distance_sq(w, g) > eps_sq) {
                s.lme.add(-kInf);
                continue;
            }
            const double lp = log_linear_prior_density(w, fam.prior);
            const double lq = std::log(0.5) + log_add(lp, linear_cloud_log_density(w, g, tau));
            s.lme.add(lp - lq);
            ++s.hits;
        }
        return s;
    });
    return from_weighted(stats, eps_sq, EstimateMethod::ImportanceSampling);
}

double nn_cloud_log_density(const ShallowNetParams& theta, const NnFamily& fam, const PwlFunction& g,
                            double eps_sq, const IsOptions& opts) {
    return NnCloud(fam, g, eps_sq, opts).log_density(theta);
}

ComplexityEstimate sharp_complexity_is(const NnFamily& fam, const PwlFunction& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng, const IsOptions& opts,
                                       unsigned workers) {
    check_nn(fam);
    check_eps_sq(eps_sq);
    if (n < 1) throw PreconditionError("sharp_complexity_is: n must be >= 1");
    const NnCloud cloud(fam, g, eps_sq, opts);
    const auto stats = run_weighted(n, workers, rng, [&](SeededRng& r, std::size_t m) {
        WeightedStats s;
        for (std::size_t i = 0; i < m; ++i) {
            const ShallowNetParams th = (i % 2 == 0) ? sample_nn_prior(fam.prior, fam.k, r) : cloud.sample(r);
            const double lp = log_nn_prior_density(th, fam.prior);
            if (lp == -kInf || nn_distance_sq(th, g) > eps_sq) {
                s.lme.add(-kInf);
                continue;
            }
            const double lq = std::log(0.5) + log_add(lp, cloud.log_density(th));
            s.lme.add(lp - lq);
            ++s.hits;
        }
        return s;
    });
    return from_weighted(stats, eps_sq, EstimateMethod::ImportanceSampling);
}

ComplexityEstimate sharp_complexity_linear_closed_form(const LinearFamily& fam, const LinearTarget& g,
                                                       double eps_sq) {
    check_linear(fam, g);
    check_eps_sq(eps_sq);
    const double room = eps_sq - g.perp_sq;
    if (room <= 0.0) return flagged_zero(0, eps_sq, EstimateMethod::ClosedFormQ);
    double kappa_sq = 0.0;
    for (double c : g.coeffs) kappa_sq += c * c;
    const double q = q_integral(std::sqrt(kappa_sq), std::sqrt(fam.prior.sigma_w_sq), std::sqrt(2.0 * room), fam.d);
    ComplexityEstimate e;
    e.log_prob = std::log(q);
    e.chi = -e.log_prob;
    e.epsilon_sq = eps_sq;
    e.method = EstimateMethod::ClosedFormQ;
    if (q <= 0.0) {
        e.zero_hits = true;
        e.chi_lower_bound = kInf;
    }
    return e;
}

SlopeEstimate fit_log_log_slope(const std::vector<double>& eps_grid, std::vector<ComplexityEstimate> per_eps) {
    if (eps_grid.size() != per_eps.size())
        throw PreconditionError("fit_log_log_slope: grid and estimates differ in length");
    SlopeEstimate out;
    out.eps_grid = eps_grid;
    std::vector<double> x, y, w;
    for (const auto& e : per_eps) {
        const bool use = !e.zero_hits && std::isfinite(e.log_prob);
        out.used_in_fit.push_back(use);
        if (!use) continue;
        const std::size_t i = out.used_in_fit.size() - 1;
        x.push_back(std::log(eps_grid[i]));
        y.push_back(e.log_prob);
        w.push_back(e.std_err > 0.0 && std::isfinite(e.std_err) ? 1.0 / (e.std_err * e.std_err) : 1.0);
    }
    out.per_eps = std::move(per_eps);
    if (x.size() < 3)
        throw InsufficientSamplesError("slope fit needs at least 3 grid points with hits, got " +
                                       std::to_string(x.size()));
    const LineFit fit = weighted_line_fit(x, y, w);
    out.slope = fit.slope;
    out.intercept = fit.intercept;
    bool any_noise = false;
    for (const auto& e : out.per_eps) any_noise = any_noise || (e.std_err > 0.0 && std::isfinite(e.std_err));
    if (any_noise) {
        out.slope_se = fit.slope_se;
    } else {
        // Deterministic inputs: report the residual-based standard error.
        double rss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += r * r;
        }
        const double dof = static_cast<double>(x.size()) - 2.0;
        out.slope_se = fit.slope_se * std::sqrt(rss / dof);
    }
    out.ci_halfwidth = 1.96 * out.slope_se;
    return out;
}

namespace {

void check_grid(const std::vector<double>& eps_grid) {
    if (eps_grid.size() < 3) throw PreconditionError("eps grid needs at least 3 points");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        if (!(eps_grid[i] > 0.0)) throw PreconditionError("eps grid values must be > 0");
        if (i > 0 && !(eps_grid[i] < eps_grid[i - 1]))
            throw PreconditionError("eps grid must be strictly decreasing");
    }
}

template <class Estimate>
SlopeEstimate limiting_impl(const std::vector<double>& eps_grid, const SeededRng& rng, Estimate est) {
    check_grid(eps_grid);
    std::vector<ComplexityEstimate> per;
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        per.push_back(est(eps_grid[i] * eps_grid[i], rng.substream(i)));
        if (per.back().zero_hits) {
            std::ostringstream msg;
            msg << "limiting_complexity: zero hits at eps = " << eps_grid[i];
            throw InsufficientSamplesError(msg.str());
        }
    }
    return fit_log_log_slope(eps_grid, std::move(per));
}

}  // namespace

SlopeEstimate limiting_complexity(const LinearFamily& fam, const LinearTarget& g,
                                  const std::vector<double>& eps_grid, std::size_t n_per_eps,
                                  const SeededRng& rng, const IsOptions& opts, unsigned workers) {
    auto out = limiting_impl(eps_grid, rng, [&](double eps_sq, const SeededRng& r) {
        return sharp_complexity_is(fam, g, eps_sq, n_per_eps, r, opts, workers);
    });
    out.label = "importance_sampling";
    return out;
}

SlopeEstimate limiting_complexity(const NnFamily& fam, const PwlFunction& g,
                                  const std::vector<double>& eps_grid, std::size_t n_per_eps,
                                  const SeededRng& rng, const IsOptions& opts, unsigned workers) {
    auto out = limiting_impl(eps_grid, rng, [&](double eps_sq, const SeededRng& r) {
        return sharp_complexity_is(fam, g, eps_sq, n_per_eps, r, opts, workers);
    });
    out.label = "importance_sampling";
    return out;
}

// ---- q ----------------------------------------------------------------------

double q_integral(double kappa, double sigma_w, double eps, int d) {
    if (!(kappa >= 0.0)) throw DomainError("q: kappa must be >= 0");
    if (!(sigma_w > 0.0)) throw DomainError("q: sigma_w must be > 0");
    if (!(eps > 0.0)) throw DomainError("q: eps must be > 0");
    if (d < 1) throw DomainError("q: d must be >= 1");
    const double s2 = sigma_w * sigma_w;
    const double shape = 0.5 * (d - 1);
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * s2);
    // x = eps sin(phi) removes the square-root behaviour of F at x = eps.
    auto integrand = [&](double phi) {
        const double x = eps * std::sin(phi);
        const double c = eps * std::cos(phi);
        const double f = (d == 1) ? 1.0 : gamma_cdf(c * c, shape, 2.0 * s2);
        const double gauss = std::exp(-(kappa + x) * (kappa + x) / (2.0 * s2)) +
                             std::exp(-(kappa - x) * (kappa - x) / (2.0 * s2));
        return norm * f * gauss * c;
    };
    return integrate_adaptive(integrand, 0.0, 0.5 * std::numbers::pi, 1e-300, 1e-13).value;
}

double q_closed_form(double kappa, double sigma_w, double eps, int d) {
    if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("q: eps must lie in (0, 1]");
    return q_integral(kappa, sigma_w, eps, d);
}

// ---- Exponential family of complexities ---------------------------------------

namespace {

template <class Sample, class LogIntegrand>
ComplexityEstimate log_mean_exp_mc(std::size_t n, unsigned workers, const SeededRng& rng, Sample sample,
                                   LogIntegrand log_integrand) {
    if (n < 1) throw PreconditionError("Monte Carlo needs n >= 1");
    const auto stats = run_weighted(n, workers, rng, [&](SeededRng& r, std::size_t m) {
        WeightedStats s;
        for (std::size_t i = 0; i < m; ++i) {
            s.lme.add(log_integrand(sample(r)));
            ++s.hits;
        }
        return s;
    });
    return from_weighted(stats, 0.0, EstimateMethod::LogSumExpMC);
}

// Noise moments E[eta], E[eta^2] by the same Gauss-Hermite rule noisy_risk uses.
std::pair<double, double> noise_moments(double sigma_e_sq) {
    static const QuadratureRule gh = gauss_hermite_normal(3);
    const double se = std::sqrt(sigma_e_sq);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
        m1 += gh.weights[j] * se * gh.nodes[j];
        m2 += gh.weights[j] * sigma_e_sq * gh.nodes[j] * gh.nodes[j];
    }
    return {m1, m2};
}

double linear_noisy_risk(const LinearModelParams& w, const LinearTarget& g, double sigma_e_sq) {
    const auto [m1, m2] = noise_moments(sigma_e_sq);
    // Only b_0 has a nonzero mean under U[-1,1]: E[b_0] = 1/sqrt(2).
    const double mean_h = (g.coeffs[0] - w.w[0]) / std::numbers::sqrt2;
    return linear_distance_sq(w, g) + 2.0 * m1 * mean_h + m2;
}

}  // namespace

ComplexityEstimate exponential_complexity_mc(const LinearFamily& fam, const LinearTarget& g,
                                             double sigma_y_sq, std::size_t n, const SeededRng& rng,
                                             unsigned workers) {
    check_linear(fam, g);
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("sigma_y_sq must be > 0");
    return log_mean_exp_mc(
        n, workers, rng, [&](SeededRng& r) { return sample_linear_prior(fam.prior, fam.d, r); },
        [&](const LinearModelParams& w) { return -linear_distance_sq(w, g) / (2.0 * sigma_y_sq); });
}

ComplexityEstimate exponential_complexity_mc(const NnFamily& fam, const PwlFunction& g, double sigma_y_sq,
                                             std::size_t n, const SeededRng& rng, unsigned workers) {
    check_nn(fam);
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("sigma_y_sq must be > 0");
    return log_mean_exp_mc(
        n, workers, rng, [&](SeededRng& r) { return sample_nn_prior(fam.prior, fam.k, r); },
        [&](const ShallowNetParams& th) { return -nn_distance_sq(th, g) / (2.0 * sigma_y_sq); });
}

double exponential_complexity_linear_closed_form(const LinearFamily& fam, const LinearTarget& g,
                                                 double sigma_y_sq) {
    check_linear(fam, g);
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("sigma_y_sq must be > 0");
    // E exp(-a (w - m)^2), w ~ N(0, s^2), per coordinate, with a = 1/(4 sigma_y^2).
    const double a = 1.0 / (4.0 * sigma_y_sq);
    const double s2 = fam.prior.sigma_w_sq;
    const double denom = 1.0 + 2.0 * a * s2;
    double log_e = 0.0;
    for (double m : g.coeffs) log_e += -0.5 * std::log(denom) - a * m * m / denom;
    return -log_e + g.perp_sq / (2.0 * sigma_y_sq);
}

double noisy_risk(const PwlFunction& h, double sigma_e_sq) {
    if (sigma_e_sq < 0.0) throw PreconditionError("noisy_risk: sigma_e_sq must be >= 0");
    static const QuadratureRule gl = gauss_legendre(3);
    static const QuadratureRule gh = gauss_hermite_normal(3);
    const double se = std::sqrt(sigma_e_sq);
    std::vector<double> cuts = {h.domain_lo};
    for (const auto& k : h.knots)
        if (k.t > h.domain_lo && k.t < h.domain_hi) cuts.push_back(k.t);
    cuts.push_back(h.domain_hi);
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double a = cuts[s];
        const double b = cuts[s + 1];
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (a + b);
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
            const double hx = eval(h, mid + half * gl.nodes[i]);
            double inner = 0.0;
            for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
                const double r = hx + se * gh.nodes[j];
                inner += gh.weights[j] * r * r;
            }
            total += half * gl.weights[i] * inner;
        }
    }
    return total / (h.domain_hi - h.domain_lo);
}

ComplexityEstimate true_with_noise_complexity_mc(const LinearFamily& fam, const LinearTarget& g,
                                                 double sigma_y_sq, double sigma_e_sq, std::size_t n,
                                                 const SeededRng& rng, unsigned workers) {
    check_linear(fam, g);
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("sigma_y_sq must be > 0");
    return log_mean_exp_mc(
        n, workers, rng, [&](SeededRng& r) { return sample_linear_prior(fam.prior, fam.d, r); },
        [&](const LinearModelParams& w) { return -linear_noisy_risk(w, g, sigma_e_sq) / (2.0 * sigma_y_sq); });
}

ComplexityEstimate true_with_noise_complexity_mc(const NnFamily& fam, const PwlFunction& g,
                                                 double sigma_y_sq, double sigma_e_sq, std::size_t n,
                                                 const SeededRng& rng, unsigned workers) {
    check_nn(fam);
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("sigma_y_sq must be > 0");
    return log_mean_exp_mc(
        n, workers, rng, [&](SeededRng& r) { return sample_nn_prior(fam.prior, fam.k, r); },
        [&](const ShallowNetParams& th) {
            return -noisy_risk(difference(g, shallow_to_pwl(th)), sigma_e_sq) / (2.0 * sigma_y_sq);
        });
}

ComplexityEstimate empirical_complexity_mc(const NnFamily& fam, const PwlFunction& g,
                                           const std::vector<double>& xs, const std::vector<double>& noise,
                                           double sigma_y_sq, std::size_t n, const SeededRng& rng,
                                           unsigned workers) {
    check_nn(fam);
    if (xs.empty()) throw PreconditionError("empirical_complexity_mc: N must be >= 1");
    if (xs.size() != noise.size()) throw PreconditionError("empirical_complexity_mc: xs and noise differ in length");
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("sigma_y_sq must be > 0");
    std::vector<double> ys(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = eval(g, xs[i]) + noise[i];
    const double scale = 1.0 / (2.0 * sigma_y_sq * static_cast<double>(xs.size()));
    return log_mean_exp_mc(
        n, workers, rng, [&](SeededRng& r) { return sample_nn_prior(fam.prior, fam.k, r); },
        [&](const ShallowNetParams& th) {
            double ss = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double r = ys[i] - forward(th, xs[i]);
                ss += r * r;
            }
            return -scale * ss;
        });
}

ComplexityEstimate empirical_complexity_mc(const LinearFamily& fam, const LinearTarget& g,
                                           const std::vector<double>& xs, const std::vector<double>& noise,
                                           double sigma_y_sq, std::size_t n, const SeededRng& rng,
                                           unsigned workers) {
    check_linear(fam, g);
    if (xs.empty()) throw PreconditionError("empirical_complexity_mc: N must be >= 1");
    if (xs.size() != noise.size()) throw PreconditionError("empirical_complexity_mc: xs and noise differ in length");
    if (g.perp_sq != 0.0)
        throw PreconditionError("empirical_complexity_mc: needs pointwise values, so perp_sq must be 0");
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("sigma_y_sq must be > 0");
    std::vector<std::vector<double>> basis;
    std::vector<double> ys(xs.size());
    const BasisSpec spec{BasisSpec::Kind::LegendreOrthonormal, fam.d};
    for (std::size_t i = 0; i < xs.size(); ++i) {
        basis.push_back(legendre_basis(fam.d, xs[i]));
        ys[i] = eval_linear(LinearModelParams{g.coeffs}, spec, xs[i]) + noise[i];
    }
    const double scale = 1.0 / (2.0 * sigma_y_sq * static_cast<double>(xs.size()));
    return log_mean_exp_mc(
        n, workers, rng, [&](SeededRng& r) { return sample_linear_prior(fam.prior, fam.d, r); },
        [&](const LinearModelParams& w) {
            double ss = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                double f = 0.0;
                for (std::size_t j = 0; j < w.w.size(); ++j) f += w.w[j] * basis[i][j];
                const double r = ys[i] - f;
                ss += r * r;
            }
            return -scale * ss;
        });
}

ComplexityEstimate sharp_with_noise(const std::function<ComplexityEstimate(double)>& chi_sharp,
                                    double sigma_e_sq, double eps_sq) {
    if (sigma_e_sq < 0.0) throw PreconditionError("sharp_with_noise: sigma_e_sq must be >= 0");
    if (eps_sq <= sigma_e_sq) {
        ComplexityEstimate e = flagged_zero(0, eps_sq, EstimateMethod::NaiveMC);
        e.chi_lower_bound = kInf;
        return e;
    }
    ComplexityEstimate e = chi_sharp(eps_sq - sigma_e_sq);
    e.epsilon_sq = eps_sq;
    return e;
}

ComplexityEstimate sharp_with_noise_direct(const NnFamily& fam, const PwlFunction& g, double sigma_e_sq,
                                           double eps_sq, std::size_t n, const SeededRng& rng,
                                           unsigned workers) {
    check_nn(fam);
    check_eps_sq(eps_sq);
    if (n < 1) throw PreconditionError("sharp_with_noise_direct: n must be >= 1");
    const std::size_t hits = run_hits(n, workers, rng, [&](SeededRng& r, std::size_t m) {
        std::size_t h = 0;
        for (std::size_t s = 0; s < m; ++s) {
            const auto th = sample_nn_prior(fam.prior, fam.k, r);
            if (noisy_risk(difference(g, shallow_to_pwl(th)), sigma_e_sq) <= eps_sq) ++h;
        }
        return h;
    });
    return from_hits(hits, n, eps_sq);
}

// ---- Codimension ----------------------------------------------------------------

double default_codim_radius(const NnPriorSpec& prior, std::size_t k) {
    const double kk = static_cast<double>(k);
    const double mean_sq = 2.0 * kk * prior.sigma_w_sq + kk * prior.M * prior.M / 3.0 + prior.sigma_b_sq;
    return 3.0 * std::sqrt(mean_sq);
}

namespace {

double inactive_dist_sq(double w1, double w2, double b1, double M) {
    double d = std::min(w1 * w1, w2 * w2);
    if (b1 < 1.0) d = std::min(d, (1.0 - b1) * (1.0 - b1));
    else if (b1 > M) d = std::min(d, (b1 - M) * (b1 - M));
    else d = 0.0;
    return d;
}

}  // namespace

double dist_to_representation_set(const ShallowNetParams& theta, const PwlFunction& g, double M) {
    const std::size_t c = g.knots.size();
    const std::size_t k = theta.k();
    if (k < c) throw PreconditionError("dist_to_representation_set: fewer nodes than target knots");
    if (k > c + 1) throw PreconditionError("dist_to_representation_set: only k = c or k = c + 1 is supported");
    std::vector<double> inactive(k);
    for (std::size_t i = 0; i < k; ++i) inactive[i] = inactive_dist_sq(theta.w1[i], theta.w2[i], theta.b1[i], M);
    std::vector<std::vector<double>> active(k, std::vector<double>(c));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double db = theta.b1[i] - g.knots[j].t;
            const double dh = hyperbola_distance(theta.w1[i], theta.w2[i], g.knots[j].v);
            active[i][j] = db * db + dh * dh;
        }
    double best = kInf;
    for_each_assignment(c, k, [&](const std::vector<std::size_t>& assign) {
        std::vector<bool> used(k, false);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            used[assign[j]] = true;
            s += active[assign[j]][j];
        }
        for (std::size_t i = 0; i < k; ++i)
            if (!used[i]) s += inactive[i];
        best = std::min(best, s);
    });
    const double db2 = theta.b2 - g.bias;
    return std::sqrt(best + db2 * db2);
}

namespace {

struct CodimSampler {
    std::size_t k;
    PwlFunction g;
    double R;
    double M;
    double s;
    double log_box_volume;

    double log_node_box() const { return -2.0 * std::log(2.0 * R) - std::log(M); }

    bool in_box(const ShallowNetParams& th) const {
        if (std::abs(th.b2) > R) return false;
        for (std::size_t i = 0; i < k; ++i)
            if (std::abs(th.w1[i]) > R || std::abs(th.w2[i]) > R || th.b1[i] < 0.0 || th.b1[i] > M) return false;
        return true;
    }

    double log_active(const ShallowNetParams& th, std::size_t i, std::size_t j) const {
        const double w1 = th.w1[i];
        if (std::abs(w1) > R || w1 == 0.0) return -kInf;
        const double v = g.knots[j].v;
        const double var = s * s * (1.0 + v * v / (w1 * w1 * w1 * w1));
        return -std::log(2.0 * R) + log_normal_density(th.w2[i] - v / w1, var) +
               log_normal_density(th.b1[i] - g.knots[j].t, s * s);
    }

    double log_surplus(const ShallowNetParams& th, std::size_t i) const {
        if (std::abs(th.w1[i]) > R || std::abs(th.w2[i]) > R || th.b1[i] < 0.0 || th.b1[i] > M) return -kInf;
        return log_node_box();
    }

    double log_tube(const ShallowNetParams& th) const {
        const std::size_t c = g.knots.size();
        std::vector<double> terms;
        for_each_assignment(c, k, [&](const std::vector<std::size_t>& assign) {
            std::vector<bool> used(k, false);
            double lp = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                used[assign[j]] = true;
                lp += log_active(th, assign[j], j);
            }
            for (std::size_t i = 0; i < k; ++i)
                if (!used[i]) lp += log_surplus(th, i);
            terms.push_back(lp);
        });
        return log_sum(terms) - std::log(static_cast<double>(terms.size())) +
               log_normal_density(th.b2 - g.bias, s * s);
    }

    ShallowNetParams sample_box(SeededRng& rng) const {
        ShallowNetParams th = ShallowNetParams::zeros(k);
        for (std::size_t i = 0; i < k; ++i) {
            th.w1[i] = rng.uniform(-R, R);
            th.w2[i] = rng.uniform(-R, R);
            th.b1[i] = rng.uniform(0.0, M);
        }
        th.b2 = rng.uniform(-R, R);
        return th;
    }

    ShallowNetParams sample_tube(SeededRng& rng) const {
        const std::size_t c = g.knots.size();
        ShallowNetParams th = sample_box(rng);
        const auto assign = random_assignment(c, k, rng);
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t i = assign[j];
            const double v = g.knots[j].v;
            const double w1 = th.w1[i];
            const double sd = s * std::sqrt(1.0 + v * v / (w1 * w1 * w1 * w1));
            th.w2[i] = v / w1 + sd * rng.normal();
            th.b1[i] = g.knots[j].t + s * rng.normal();
        }
        th.b2 = g.bias + s * rng.normal();
        return th;
    }
};

double param_norm_sq(const ShallowNetParams& th) {
    double s = th.b2 * th.b2;
    for (std::size_t i = 0; i < th.k(); ++i) s += th.w1[i] * th.w1[i] + th.w2[i] * th.w2[i] + th.b1[i] * th.b1[i];
    return s;
}

}  // namespace

SlopeEstimate codim_estimate(const CodimQuery& query, const NnPriorSpec& prior, std::size_t n,
                             const SeededRng& rng, const CodimOptions& opts, unsigned workers) {
    prior.validate();
    check_grid(query.eps_grid);
    const std::size_t c = query.target.knots.size();
    if (c > query.k) throw PreconditionError("codim_estimate: target knots exceed k");
    if (query.k > c + 1) throw PreconditionError("codim_estimate: only k = c or k = c + 1 is supported");
    if (n < 2) throw PreconditionError("codim_estimate: n must be >= 2");
    const double R = query.R > 0.0 ? query.R : default_codim_radius(prior, query.k);

    CodimSampler base{query.k, query.target, R, prior.M, 0.0, 0.0};
    base.log_box_volume = static_cast<double>(query.k) * (2.0 * std::log(2.0 * R) + std::log(prior.M)) +
                          std::log(2.0 * R);

    // Fraction of the box inside B_R; only shifts the intercept.
    const std::size_t ball_hits = run_hits(n, workers, rng.substream(1000), [&](SeededRng& r, std::size_t m) {
        std::size_t h = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (param_norm_sq(base.sample_box(r)) <= R * R) ++h;
        return h;
    });
    if (ball_hits == 0) throw InsufficientSamplesError("codim_estimate: no box sample fell inside B_R");
    const double log_ball_fraction = std::log(static_cast<double>(ball_hits) / static_cast<double>(n));

    std::vector<ComplexityEstimate> per;
    for (std::size_t gi = 0; gi < query.eps_grid.size(); ++gi) {
        const double eps = query.eps_grid[gi];
        CodimSampler smp = base;
        smp.s = opts.tube_scale * eps / std::sqrt(2.0 * static_cast<double>(c) + 1.0);
        const auto stats = run_weighted(n, workers, rng.substream(gi), [&](SeededRng& r, std::size_t m) {
            WeightedStats st;
            for (std::size_t i = 0; i < m; ++i) {
                const ShallowNetParams th = (i % 2 == 0) ? smp.sample_box(r) : smp.sample_tube(r);
                if (!smp.in_box(th) || param_norm_sq(th) > R * R ||
                    dist_to_representation_set(th, query.target, prior.M) > eps) {
                    st.lme.add(-kInf);
                    continue;
                }
                const double log_unif = -smp.log_box_volume;
                const double lq = std::log(0.5) + log_add(log_unif, smp.log_tube(th));
                st.lme.add(log_unif - lq);
                ++st.hits;
            }
            return st;
        });
        ComplexityEstimate e = from_weighted(stats, eps * eps, EstimateMethod::ImportanceSampling);
        if (!e.zero_hits) {
            e.log_prob -= log_ball_fraction;
            e.chi = -e.log_prob;
        }
        per.push_back(e);
    }
    if (per.back().zero_hits) {
        std::ostringstream msg;
        msg << "codim_estimate: zero hits at the smallest eps = " << query.eps_grid.back();
        throw InsufficientSamplesError(msg.str());
    }
    SlopeEstimate out = fit_log_log_slope(query.eps_grid, std::move(per));
    out.label = (query.k == c || c == 0) ? "exact" : "upper-bound-based";
    return out;
}

// ---- One slope change --------------------------------------------------------------

OneChangeReport one_change_bounds(double a, double b, double t, std::size_t k, const NnPriorSpec& spec,
                                  double eps, std::size_t n, const SeededRng& rng, const IsOptions& opts,
                                  unsigned workers) {
    spec.validate();
    if (!(eps > 0.0)) throw PreconditionError("one_change_bounds: eps must be > 0");
    OneChangeReport rep;
    const double sw2 = spec.sigma_w_sq;
    const double kk = static_cast<double>(k);
    const double slack = 1e-12;
    auto require = [&](bool ok, const char* what) {
        if (!ok) rep.failed_assumptions.emplace_back(what);
    };
    require(t > 0.0 && t < 1.0, "t in (0,1)");
    require(eps > 0.0 && eps < 1.0, "eps in (0,1)");
    require(kk <= spec.M + slack, "k <= M");
    require(spec.M <= 1.0 / sw2 + slack, "M <= 1/sigma_w^2");
    require(spec.sigma_b_sq <= 1.0 / sw2 + slack, "sigma_b^2 <= 1/sigma_w^2");
    require(std::abs(a) >= std::pow(eps, 0.25), "|a| >= eps^(1/4)");
    require(std::abs(a) >= std::log(kk / std::sqrt(sw2)) * sw2, "|a| >= log(k/sigma_w) sigma_w^2");
    require(std::abs(a) < 2.0, "|a| < 2");
    require(std::abs(a) >= 20.0 * eps, "|a| >= 20 eps");
    require(std::abs(b) >= std::pow(eps, 0.25), "|b| >= eps^(1/4)");
    require(std::min(t, 1.0 - t) >= std::sqrt(eps), "min(t, 1-t) >= eps^(1/2)");
    rep.assumptions_ok = rep.failed_assumptions.empty();

    rep.lower = std::abs(a) / (3.0 * sw2);
    rep.upper = 2.0 * (std::abs(a) / sw2 + std::abs(b) / spec.sigma_b_sq) + 11.0 - 3.0 * std::log(eps);

    const PwlFunction g = canonicalize({{t, a}}, b);
    rep.chi_hat = sharp_complexity_is(NnFamily{k, spec}, g, eps * eps, n, rng, opts, workers);
    return rep;
}

double one_change_example_bound(double a, std::size_t k, double sigma_e) {
    return 3.0 * std::abs(a) * static_cast<double>(k) + 3.0 * std::log(1.0 / sigma_e);
}

// ---- Product density -----------------------------------------------------------------

double product_density_claimed(double a0, double sigma_w_sq) {
    if (!(sigma_w_sq > 0.0)) throw PreconditionError("product_density_claimed: sigma_w_sq must be > 0");
    return std::exp(-std::abs(a0) / sigma_w_sq) / std::sqrt(2.0 * std::numbers::pi * sigma_w_sq);
}

DensityEstimate product_density_kde(double a0, double sigma_w_sq, std::size_t n, double bandwidth,
                                    const SeededRng& rng) {
    if (!(sigma_w_sq > 0.0) || !(bandwidth > 0.0) || n < 2)
        throw PreconditionError("product_density_kde: invalid arguments");
    SeededRng r = rng;
    const double sw = std::sqrt(sigma_w_sq);
    RunningMoments m;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = (a0 - sw * r.normal() * sw * r.normal()) / bandwidth;
        m.add(std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * bandwidth));
    }
    return {m.mean, m.std_err()};
}

double product_density_exact(double a0, double sigma_w_sq) {
    if (a0 == 0.0) return kInf;
    return std::cyl_bessel_k(0.0, std::abs(a0) / sigma_w_sq) / (std::numbers::pi * sigma_w_sq);
}

}  // namespace bayescomplex
