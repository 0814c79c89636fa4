#pragma once

namespace bayescomplex {

struct HyperbolaPoint {
    double x = 0.0;
    double y = 0.0;
    double dist = 0.0;
};

/// Nearest point to (p, q) on {x y = v}. For v = 0 the set is the union of
/// the two axes. Otherwise the stationarity condition
///     x^4 - p x^3 + q v x - v^2 = 0
/// is solved on brackets delimited by its critical points, each root polished
/// by safeguarded Newton, and the best real root wins.
HyperbolaPoint nearest_on_hyperbola(double p, double q, double v);

inline double hyperbola_distance(double p, double q, double v) {
    return nearest_on_hyperbola(p, q, v).dist;
}

}  // namespace bayescomplex
