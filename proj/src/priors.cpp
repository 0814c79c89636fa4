#include "bayescomplex/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "bayescomplex/errors.hpp"

namespace bayescomplex {

void NnPriorSpec::validate() const {
    if (!(sigma_w_sq > 0.0)) throw PreconditionError("NnPriorSpec: sigma_w_sq must be > 0");
    if (!(sigma_b_sq > 0.0)) throw PreconditionError("NnPriorSpec: sigma_b_sq must be > 0");
    if (!(M >= 1.0)) throw PreconditionError("NnPriorSpec: M must be >= 1");
}

NnPriorSpec NnPriorSpec::for_width(std::size_t k) {
    const double kk = static_cast<double>(k);
    return {1.0 / kk, kk, 1.0};
}

void LinearPriorSpec::validate() const {
    if (!(sigma_w_sq > 0.0)) throw PreconditionError("LinearPriorSpec: sigma_w_sq must be > 0");
}

double log_normal_density(double x, double var) {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * x * x / var;
}

ShallowNetParams sample_nn_prior(const NnPriorSpec& spec, std::size_t k, SeededRng& rng) {
    spec.validate();
    if (k < 1) throw PreconditionError("sample_nn_prior: k must be >= 1");
    const double sw = std::sqrt(spec.sigma_w_sq);
    ShallowNetParams p = ShallowNetParams::zeros(k);
    for (std::size_t i = 0; i < k; ++i) {
        p.w1[i] = sw * rng.normal();
        p.w2[i] = sw * rng.normal();
        p.b1[i] = rng.uniform(0.0, spec.M);
    }
    p.b2 = std::sqrt(spec.sigma_b_sq) * rng.normal();
    return p;
}

double log_nn_prior_density(const ShallowNetParams& theta, const NnPriorSpec& spec) {
    double lp = log_normal_density(theta.b2, spec.sigma_b_sq);
    const double log_m = std::log(spec.M);
    for (std::size_t i = 0; i < theta.k(); ++i) {
        if (!(theta.b1[i] >= 0.0 && theta.b1[i] <= spec.M))
            return -std::numeric_limits<double>::infinity();
        lp += log_normal_density(theta.w1[i], spec.sigma_w_sq) +
              log_normal_density(theta.w2[i], spec.sigma_w_sq) - log_m;
    }
    return lp;
}

LinearModelParams sample_linear_prior(const LinearPriorSpec& spec, int d, SeededRng& rng) {
    spec.validate();
    if (d < 1) throw PreconditionError("sample_linear_prior: d must be >= 1");
    const double sw = std::sqrt(spec.sigma_w_sq);
    LinearModelParams p;
    p.w.resize(static_cast<std::size_t>(d));
    for (auto& w : p.w) w = sw * rng.normal();
    return p;
}

double log_linear_prior_density(const LinearModelParams& w, const LinearPriorSpec& spec) {
    double lp = 0.0;
    for (double x : w.w) lp += log_normal_density(x, spec.sigma_w_sq);
    return lp;
}

}  // namespace bayescomplex
