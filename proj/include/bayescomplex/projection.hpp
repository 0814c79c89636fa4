#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bayescomplex/models.hpp"
#include "bayescomplex/pwl.hpp"

namespace bayescomplex {

struct PhaseEvent {
    enum class Kind {
        BiasCollapse,    // phase 1: bias moved onto the end of a short-interval run
        WeightChange,    // phase 2: effective weight u = w1 w2 changed
        BiasShift,       // early biases shifted so that f(0) = 0
        OutputBiasZero,  // b2 set to 0
        KnotRestore      // target knot moved back from t* to t
    };
    Kind kind;
    std::size_t node;  // node index; theta.k() stands for the output bias
    double before;
    double after;
};

struct ProjectionResult {
    ShallowNetParams theta_star;
    /// ||theta - theta*||^2 over (w1, w2, b1, b2).
    double movement_sq = 0.0;
    /// Same distance in the effective parameters (u, b1, b2) with u = w1 w2,
    /// the model the movement bounds are stated for.
    double effective_movement_sq = 0.0;
    double bound = 0.0;
    /// ||f_theta||^2, or ||g - f_theta||^2 for project_to_target.
    double norm_sq = 0.0;
    std::vector<PhaseEvent> phases;
    /// project_to_zero_with_bias: 1 when |b2| <= ||f||^(1/2), else 2.
    int case_taken = 0;
    /// project_to_target: assignment[j] lists the nodes that carry knot j.
    std::vector<std::vector<std::size_t>> assignment;
};

struct ProjectionOptions {
    /// Smallness guard for the bias and target variants:
    /// ||f||^2 <= guard_fraction R^-4 k^-5.
    double guard_fraction = 1e-3;
};

/// Two-phase projection of a bias-free network onto a representation of 0 on
/// [0,1]. Requires b2 = 0, b1 >= 0 and ||f||^2 < 1/(12 (k+1)^5); bound is
/// 96 k^(13/5) (||f||^2)^(2/5), to be compared with effective_movement_sq.
ProjectionResult project_to_zero(const ShallowNetParams& theta);

/// Handles a nonzero output bias. theta must lie in B_R with b1 in [0, M]
/// for some M (only b1 >= 0 is checked). bound = k^5 R^(4/5) (||f||^2)^(1/5).
ProjectionResult project_to_zero_with_bias(const ShallowNetParams& theta, double R,
                                           const ProjectionOptions& opts = {});

/// Exact representation of g near theta through the augmented difference
/// network. g must have knots in (0,1) and at most k of them.
/// bound = k^7 R^(4/5) (||g - f||^2)^(1/5).
ProjectionResult project_to_target(const ShallowNetParams& theta, const PwlFunction& g, double R,
                                   const ProjectionOptions& opts = {});

// ---- Checked inequality helpers ----------------------------------------------

/// sum_i X_i^2 for the prefix sums X_i = x_1 + ... + x_i.
double prefix_sum_energy(std::span<const double> x);

/// The two sides of E_X[ln E_Y e^{-f}] >= ln E_Y e^{-E_X f} for finite
/// discrete X, Y; f is row-major with f[i * py.size() + j] = f(x_i, y_j).
struct JensenSides {
    double lhs = 0.0;
    double rhs = 0.0;
};
JensenSides log_exp_jensen_sides(std::span<const double> px, std::span<const double> py,
                                 std::span<const double> f);

}  // namespace bayescomplex
