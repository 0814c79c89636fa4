#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "bayescomplex/models.hpp"
#include "bayescomplex/priors.hpp"
#include "bayescomplex/pwl.hpp"
#include "bayescomplex/rng.hpp"

namespace bayescomplex {

enum class EstimateMethod { NaiveMC, ImportanceSampling, ClosedFormQ, LogSumExpMC };

const char* to_string(EstimateMethod m);

/// -log of a prior probability (or prior expectation), in nats.
struct ComplexityEstimate {
    double chi = 0.0;
    double log_prob = 0.0;
    double std_err = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_hits = 0;
    double epsilon_sq = 0.0;
    EstimateMethod method = EstimateMethod::NaiveMC;
    /// Set when no sample hit the event: chi is +inf and chi_lower_bound
    /// holds the rule-of-three value -ln(3/n).
    bool zero_hits = false;
    double chi_lower_bound = 0.0;
};

struct SlopeEstimate {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double ci_halfwidth = 0.0;  // 1.96 slope_se
    std::vector<double> eps_grid;
    std::vector<ComplexityEstimate> per_eps;
    std::vector<bool> used_in_fit;
    std::string label;
};

inline const std::vector<double>& default_eps_grid() {
    static const std::vector<double> grid = {0.3, 0.2, 0.14, 0.1, 0.07, 0.05};
    return grid;
}

// ---- Families ----------------------------------------------------------------

/// Orthonormal-basis linear model with an isotropic Gaussian prior.
struct LinearFamily {
    int d = 3;
    LinearPriorSpec prior;
};

/// g = sum_i coeffs_i b_i + g_perp, with g_perp orthogonal to the model span
/// and E_{x ~ U[-1,1]}[g_perp^2] = perp_sq.
struct LinearTarget {
    std::vector<double> coeffs;
    double perp_sq = 0.0;
};

/// E_x[(g - f_w)^2] = 0.5 ||w - coeffs||^2 + perp_sq.
double linear_distance_sq(const LinearModelParams& w, const LinearTarget& g);

struct NnFamily {
    std::size_t k = 1;
    NnPriorSpec prior;
};

/// E_{x ~ U[0,1]}[(g - f_theta)^2]
double nn_distance_sq(const ShallowNetParams& theta, const PwlFunction& g);

struct IsOptions {
    double c = 3.0;  // cloud scale multiplier
};

// ---- Sharp complexity --------------------------------------------------------

ComplexityEstimate sharp_complexity_mc(const LinearFamily& fam, const LinearTarget& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng, unsigned workers = 1);
ComplexityEstimate sharp_complexity_mc(const NnFamily& fam, const PwlFunction& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng, unsigned workers = 1);

/// Defensive importance sampling: half the draws come from the prior and half
/// from a cloud around the exact representations of g.
ComplexityEstimate sharp_complexity_is(const LinearFamily& fam, const LinearTarget& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng,
                                       const IsOptions& opts = {}, unsigned workers = 1);
ComplexityEstimate sharp_complexity_is(const NnFamily& fam, const PwlFunction& g, double eps_sq,
                                       std::size_t n, const SeededRng& rng,
                                       const IsOptions& opts = {}, unsigned workers = 1);

/// log proposal density of the NN cloud (without the prior half).
double nn_cloud_log_density(const ShallowNetParams& theta, const NnFamily& fam, const PwlFunction& g,
                            double eps_sq, const IsOptions& opts);

/// Exact chi for the linear family through q: the event
/// 0.5 ||w - coeffs||^2 <= eps_sq - perp_sq is a ball of radius
/// sqrt(2 (eps_sq - perp_sq)).
ComplexityEstimate sharp_complexity_linear_closed_form(const LinearFamily& fam, const LinearTarget& g,
                                                       double eps_sq);

/// Weighted slope of log_prob against ln(eps) over the grid; each point is a
/// sharp_complexity_is call on its own sub-stream.
SlopeEstimate limiting_complexity(const LinearFamily& fam, const LinearTarget& g,
                                  const std::vector<double>& eps_grid, std::size_t n_per_eps,
                                  const SeededRng& rng, const IsOptions& opts = {}, unsigned workers = 1);
SlopeEstimate limiting_complexity(const NnFamily& fam, const PwlFunction& g,
                                  const std::vector<double>& eps_grid, std::size_t n_per_eps,
                                  const SeededRng& rng, const IsOptions& opts = {}, unsigned workers = 1);

/// Slope fit over estimates already computed. Zero-hit points are skipped
/// and marked in used_in_fit; throws InsufficientSamplesError if fewer than
/// three remain.
SlopeEstimate fit_log_log_slope(const std::vector<double>& eps_grid,
                                std::vector<ComplexityEstimate> per_eps);

// ---- The linear-model q function ---------------------------------------------

/// q(kappa, sigma_w, eps) = (1/sqrt(2 pi sigma_w^2)) int_0^eps
///     F(eps^2 - x^2; (d-1)/2, 2 sigma_w^2) [e^{-(kappa+x)^2/2s^2} + e^{-(kappa-x)^2/2s^2}] dx
/// with F the Gamma CDF; equals P[||w - kappa e_0||^2 <= eps^2] for
/// w ~ N(0, sigma_w^2 I_d). Domain: kappa >= 0, sigma_w > 0, eps in (0,1], d >= 1.
double q_closed_form(double kappa, double sigma_w, double eps, int d);

/// Same integral without the eps <= 1 restriction.
double q_integral(double kappa, double sigma_w, double eps, int d);

// ---- Exponential, noisy and empirical complexities ---------------------------

/// -ln E_theta exp(-E_x[(g - f)^2] / (2 sigma_y^2)), log-sum-exp accumulation.
ComplexityEstimate exponential_complexity_mc(const LinearFamily& fam, const LinearTarget& g,
                                             double sigma_y_sq, std::size_t n, const SeededRng& rng,
                                             unsigned workers = 1);
ComplexityEstimate exponential_complexity_mc(const NnFamily& fam, const PwlFunction& g,
                                             double sigma_y_sq, std::size_t n, const SeededRng& rng,
                                             unsigned workers = 1);

/// Gaussian integral in closed form for the linear family.
double exponential_complexity_linear_closed_form(const LinearFamily& fam, const LinearTarget& g,
                                                 double sigma_y_sq);

/// E_{x ~ U[0,1], eta ~ N(0, sigma_e^2)}[(h(x) + eta)^2] by Gauss-Legendre on
/// each linear piece of h and Gauss-Hermite in eta.
double noisy_risk(const PwlFunction& h, double sigma_e_sq);

/// chi^N: like the exponential complexity but with the noisy risk in the
/// exponent. Shares draws with exponential_complexity_mc for equal rng.
ComplexityEstimate true_with_noise_complexity_mc(const LinearFamily& fam, const LinearTarget& g,
                                                 double sigma_y_sq, double sigma_e_sq, std::size_t n,
                                                 const SeededRng& rng, unsigned workers = 1);
ComplexityEstimate true_with_noise_complexity_mc(const NnFamily& fam, const PwlFunction& g,
                                                 double sigma_y_sq, double sigma_e_sq, std::size_t n,
                                                 const SeededRng& rng, unsigned workers = 1);

/// chi^E = -ln E_theta exp(-(1/(2 sigma_y_sq N)) sum_n (g(x_n) + eta_n - f(x_n))^2).
/// Pass sigma_y^2 / N as sigma_y_sq to get the form used in the divergence bound.
ComplexityEstimate empirical_complexity_mc(const NnFamily& fam, const PwlFunction& g,
                                           const std::vector<double>& xs,
                                           const std::vector<double>& noise, double sigma_y_sq,
                                           std::size_t n, const SeededRng& rng, unsigned workers = 1);
ComplexityEstimate empirical_complexity_mc(const LinearFamily& fam, const LinearTarget& g,
                                           const std::vector<double>& xs,
                                           const std::vector<double>& noise, double sigma_y_sq,
                                           std::size_t n, const SeededRng& rng, unsigned workers = 1);

/// chi^{#N}(eps_sq) = chi^#(eps_sq - sigma_e_sq). eps_sq <= sigma_e_sq gives
/// an infinite, flagged estimate without calling chi_sharp.
ComplexityEstimate sharp_with_noise(const std::function<ComplexityEstimate(double)>& chi_sharp,
                                    double sigma_e_sq, double eps_sq);

/// Direct path: hit test on the noisy risk itself, plain prior sampling.
ComplexityEstimate sharp_with_noise_direct(const NnFamily& fam, const PwlFunction& g,
                                           double sigma_e_sq, double eps_sq, std::size_t n,
                                           const SeededRng& rng, unsigned workers = 1);

// ---- Codimension -------------------------------------------------------------

struct CodimQuery {
    double R = 0.0;  // 0 selects 3 sqrt(E||theta||^2) under the prior
    std::vector<double> eps_grid = default_eps_grid();
    PwlFunction target;
    std::size_t k = 1;
};

/// 3 sqrt(E ||theta||^2) under the NN prior with k nodes.
double default_codim_radius(const NnPriorSpec& prior, std::size_t k);

/// min over node-to-knot assignments of the Euclidean distance to the exact
/// representation set of g. Exact for k = c (and for c = 0); for k = c + 1 it
/// ignores representations that split one knot over two nodes, so it is an
/// upper bound there.
double dist_to_representation_set(const ShallowNetParams& theta, const PwlFunction& g, double M);

struct CodimOptions {
    double tube_scale = 1.5;
};

/// Slope of ln vol{theta in B_R cap supp P : dist(theta, A_g) <= eps} / vol(B_R cap supp P)
/// against ln eps. Volumes come from importance sampling with a uniform
/// defensive component on the bounding box and a tube around A_g.
SlopeEstimate codim_estimate(const CodimQuery& query, const NnPriorSpec& prior, std::size_t n,
                             const SeededRng& rng, const CodimOptions& opts = {}, unsigned workers = 1);

// ---- One slope change --------------------------------------------------------

struct OneChangeReport {
    ComplexityEstimate chi_hat;
    double lower = 0.0;
    double upper = 0.0;
    bool assumptions_ok = false;
    std::vector<std::string> failed_assumptions;
};

/// Estimates chi#(b + a[x - t]_+, eps^2) by importance sampling and evaluates
/// |a|/(3 sigma_w^2) <= chi <= 2(|a|/sigma_w^2 + |b|/sigma_b^2) + 11 - 3 ln eps.
/// The Omega(.) magnitude conditions are checked with unit constants.
OneChangeReport one_change_bounds(double a, double b, double t, std::size_t k, const NnPriorSpec& spec,
                                  double eps, std::size_t n, const SeededRng& rng,
                                  const IsOptions& opts = {}, unsigned workers = 1);

/// 3|a|k + 3 ln(1/sigma_e)
double one_change_example_bound(double a, std::size_t k, double sigma_e);

// ---- Product density ---------------------------------------------------------

/// (1/sqrt(2 pi sigma_w^2)) exp(-|a0| / sigma_w^2), as stated for the density
/// of w1 w2.
double product_density_claimed(double a0, double sigma_w_sq);

struct DensityEstimate {
    double value = 0.0;
    double std_err = 0.0;
};

/// Gaussian-kernel estimate of the density of w1 w2 at a0, w1, w2 iid N(0, sigma_w^2).
DensityEstimate product_density_kde(double a0, double sigma_w_sq, std::size_t n, double bandwidth,
                                    const SeededRng& rng);

/// Exact density sigma^-2 K_0(|a0|/sigma^2) / pi, for reference.
double product_density_exact(double a0, double sigma_w_sq);

}  // namespace bayescomplex
