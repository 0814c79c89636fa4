#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bayescomplex/complexity.hpp"
#include "bayescomplex/models.hpp"
#include "bayescomplex/priors.hpp"
#include "bayescomplex/pwl.hpp"
#include "bayescomplex/rng.hpp"

namespace bayescomplex {

/// y_n = g(x_n) + eta_n, eta_n ~ N(0, sigma_e_sq), x_n iid from the measure.
struct Dataset {
    std::vector<double> xs;
    std::vector<double> ys;
    double sigma_e_sq = 0.0;
    L2Measure measure;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    std::size_t size() const { return xs.size(); }
};

Dataset generate_dataset(const std::function<double(double)>& g, std::size_t N, double sigma_e_sq,
                         const L2Measure& measure, const SeededRng& rng);
Dataset generate_dataset(const PwlFunction& g, std::size_t N, double sigma_e_sq, const L2Measure& measure,
                         const SeededRng& rng);

/// x -> sum_i coeffs_i b_i(x); perp_sq must be 0.
std::function<double(double)> linear_target_function(const LinearTarget& g);

struct LossSpec {
    double clip_C = 4.0;
};

/// min((pred - y)^2, C)
double clipped_loss(double pred, double y, const LossSpec& spec);

struct GaussianPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// Mean (Phi^T Phi / s_y^2 + I / s_w^2)^{-1} Phi^T y / s_y^2 and that inverse as covariance.
GaussianPosterior conjugate_posterior_linear(const Dataset& S, const LinearPriorSpec& prior,
                                             const BasisSpec& basis, double sigma_y_sq);

GaussianPosterior linear_prior_as_gaussian(const LinearPriorSpec& prior, int d);

LinearModelParams sample_gaussian(const GaussianPosterior& q, SeededRng& rng);

struct SgldConfig {
    double eta = 1e-3;
    std::size_t steps = 10000;
    std::size_t burn_in = 1000;
    std::size_t thin = 1;
    double sigma_y_sq = 1.0;
    /// Multiplies the injected noise; 0 gives plain gradient descent on the
    /// regularized loss (MAP diagnostic).
    double noise_scale = 1.0;
    /// false drops the data term, so the chain targets the prior.
    bool use_likelihood = true;
};

/// theta <- theta - eta (grad mean_n l_n - grad ln P / N) + sqrt(2 eta / N) xi
/// with l_n = (y_n - f(x_n))^2 / (2 sigma_y^2). Starts at the prior mean.
std::vector<LinearModelParams> run_sgld(const Dataset& S, const BasisSpec& basis, const LinearPriorSpec& prior,
                                        const SgldConfig& cfg, const SeededRng& rng);

/// NN variant started from `start`; hidden biases are reflected into [0, M].
std::vector<ShallowNetParams> run_sgld(const Dataset& S, std::size_t k, const NnPriorSpec& prior,
                                       const SgldConfig& cfg, const SeededRng& rng,
                                       const ShallowNetParams* start = nullptr);

struct LossEstimate {
    double value = 0.0;
    double std_err = 0.0;
};

/// L_S(Q) = E_{h ~ Q} (1/N) sum_n l(h, z_n) over the given draws.
LossEstimate empirical_loss_of_Q(const std::vector<LinearModelParams>& draws, const Dataset& S,
                                 const BasisSpec& basis, const LossSpec& spec);
LossEstimate empirical_loss_of_Q(const std::vector<ShallowNetParams>& draws, const Dataset& S,
                                 const LossSpec& spec);

/// L_D(Q) with n_x fresh (x, eta) pairs per draw.
LossEstimate true_loss_of_Q(const std::vector<LinearModelParams>& draws, const std::function<double(double)>& g,
                            double sigma_e_sq, const L2Measure& measure, const BasisSpec& basis,
                            const LossSpec& spec, std::size_t n_x, const SeededRng& rng);
LossEstimate true_loss_of_Q(const std::vector<ShallowNetParams>& draws, const PwlFunction& g, double sigma_e_sq,
                            const LossSpec& spec, std::size_t n_x, const SeededRng& rng);

/// L_S + C sqrt(kl / (2N))
double pac_bayes_rhs(double L_S_Q, double kl, std::size_t N, double C);

double kl_gaussians(const GaussianPosterior& q, const GaussianPosterior& p);

/// max(0, chiE - N L_S / (2 sigma_y^2)), with chiE computed at sigma_y^2 / N.
double divergence_upper_bound(const ComplexityEstimate& chiE, std::size_t N, double sigma_y_sq, double L_S_Q);

/// sigma_e^2 + beta sigma_e^2 + (C / sqrt 2) sqrt(chi / N)
double theorem_bound(double sigma_e_sq, double beta, double chi_sharp, std::size_t N, double C);

struct SigmaSearchOptions {
    double lo = 1e-6;
    double hi = 1e6;
    int max_iter = 60;
    double tol = 1e-3;
};

struct SigmaSearchResult {
    double sigma_alg_sq = 0.0;
    double achieved_loss = 0.0;
    double target_loss = 0.0;
    double loss_at_lo = 0.0;
    double loss_at_hi = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Bisection on ln sigma_y^2 for E[L_S(Q(sigma_y^2))] = (1 + beta) sigma_e^2.
/// expected_loss must be nondecreasing in sigma_y^2; a bracket that does not
/// straddle the target throws AssumptionViolation with both endpoint losses.
SigmaSearchResult find_sigma_alg(double beta, double sigma_e_sq,
                                 const std::function<double(double)>& expected_loss,
                                 const SigmaSearchOptions& opts = {});

/// Linear conjugate setup used by the PAC-Bayes experiments.
struct ConjugateSetup {
    int d = 3;
    LinearPriorSpec prior;
    LinearTarget target{{1.0, 0.0, 0.0}, 0.0};
    std::size_t N = 200;
    double sigma_e_sq = 0.01;
    LossSpec loss;
};

/// E_S[L_S(Q(sigma_y^2))] over `replicas` datasets with `draws` posterior
/// samples each. Datasets and standard normals are fixed by rng, so the
/// returned function is deterministic and smooth in sigma_y^2.
std::function<double(double)> conjugate_expected_empirical_loss(const ConjugateSetup& setup,
                                                                std::size_t replicas, std::size_t draws,
                                                                const SeededRng& rng);

struct PacBayesTrial {
    double L_S = 0.0;
    double L_S_se = 0.0;
    double L_D = 0.0;
    double L_D_se = 0.0;
    double kl = 0.0;
    double rhs = 0.0;
};

/// One dataset, its posterior at sigma_y_sq, and the losses and bound terms.
PacBayesTrial run_conjugate_trial(const ConjugateSetup& setup, double sigma_y_sq, std::size_t draws,
                                  std::size_t n_x, const SeededRng& rng);

}  // namespace bayescomplex
