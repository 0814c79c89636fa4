#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "bayescomplex/pwl.hpp"

namespace bayescomplex {

// ---- Linear models on [-1, 1] ------------------------------------------------

struct BasisSpec {
    enum class Kind { LegendreOrthonormal };
    Kind kind = Kind::LegendreOrthonormal;
    int d = 1;
};

struct LinearModelParams {
    std::vector<double> w;
};

/// b_0(x), ..., b_{d-1}(x) with b_i = sqrt((2i+1)/2) P_i, so that the b_i are
/// orthonormal under plain Lebesgue measure on [-1, 1].
std::vector<double> legendre_basis(int d, double x);

double eval_linear(const LinearModelParams& p, const BasisSpec& basis, double x);

/// E_{x ~ U[-1,1]}[(f_w - f_target)^2] = 0.5 ||w - w_target||^2.
double linear_l2_distance_sq(const LinearModelParams& w, const LinearModelParams& w_target);

// ---- Shallow ReLU networks ---------------------------------------------------

/// f(x) = sum_i w2_i w1_i [x - b1_i]_+ + b2
struct ShallowNetParams {
    std::vector<double> w1;
    std::vector<double> w2;
    std::vector<double> b1;
    double b2 = 0.0;

    std::size_t k() const { return w1.size(); }
    static ShallowNetParams zeros(std::size_t k);
};

/// Direct forward pass, no canonicalization.
double forward(const ShallowNetParams& theta, double x);

/// Canonical PwlFunction on [0,1] equal to f_theta there.
PwlFunction shallow_to_pwl(const ShallowNetParams& theta);

/// w2 = v/sqrt|v|, w1 = sqrt|v|, b1 = t per knot. Surplus nodes are parked
/// at b1 = inactive_bias (> 1) with zero weights.
ShallowNetParams min_norm_realization(const PwlFunction& g, std::size_t k,
                                      double inactive_bias = 2.0);

/// 0.5 (||w1||^2 + ||w2||^2)
double weight_norm_cost(const ShallowNetParams& theta);

/// Squared Euclidean distance between two parameter vectors of equal k.
double param_distance_sq(const ShallowNetParams& a, const ShallowNetParams& b);

// ---- Deep ReLU networks ------------------------------------------------------

/// Scalar-in, scalar-out network. weights[j] maps layer j to j+1; hidden
/// layers use ReLU and the output layer is the identity.
struct DeepNetParams {
    std::vector<int> layer_dims;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    std::size_t parameter_count() const;
    std::size_t hidden_units() const;
};

double forward(const DeepNetParams& net, double x);

struct PeriodicNet {
    DeepNetParams net;
    /// Parameters pinned by the construction: everything except one
    /// rescaling direction per hidden ReLU, which leaves the function fixed.
    std::size_t constrained_parameter_count = 0;
    /// 2K + 1 for the K knots of periodize(g0, l) under a shallow network.
    std::size_t shallow_constrained_count = 0;
    /// Number of knots of g0 strictly inside (0, 1).
    std::size_t interior_knots = 0;
};

/// Network equal to periodize(g0, l) on [0, l], built as an l-tooth triangle
/// wave T followed by the half-period profile s -> g0(s/2).
/// g0 must satisfy g0(t) = g0(1 - t); anything else throws PreconditionError.
PeriodicNet build_periodic_deep_net(const PwlFunction& g0, int l, double tol = 1e-12);

}  // namespace bayescomplex
