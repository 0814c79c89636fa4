#pragma once

#include <cstddef>

#include "bayescomplex/models.hpp"
#include "bayescomplex/rng.hpp"

namespace bayescomplex {

/// w1, w2 ~ N(0, sigma_w_sq), b1 ~ U[0, M], b2 ~ N(0, sigma_b_sq), all iid.
struct NnPriorSpec {
    double sigma_w_sq = 1.0;
    double M = 1.0;
    double sigma_b_sq = 1.0;

    /// Throws PreconditionError on nonpositive variances or M < 1.
    void validate() const;
    /// M = k, sigma_w^2 = 1/k, sigma_b^2 = 1.
    static NnPriorSpec for_width(std::size_t k);
};

struct LinearPriorSpec {
    double sigma_w_sq = 1.0;

    void validate() const;
};

ShallowNetParams sample_nn_prior(const NnPriorSpec& spec, std::size_t k, SeededRng& rng);

/// -inf outside the support b1 in [0, M].
double log_nn_prior_density(const ShallowNetParams& theta, const NnPriorSpec& spec);

LinearModelParams sample_linear_prior(const LinearPriorSpec& spec, int d, SeededRng& rng);

double log_linear_prior_density(const LinearModelParams& w, const LinearPriorSpec& spec);

/// log N(x; 0, var)
double log_normal_density(double x, double var);

}  // namespace bayescomplex
