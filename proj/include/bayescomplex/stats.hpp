#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace bayescomplex {

/// Welford accumulator that can be merged across workers.
struct RunningMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    void merge(const RunningMoments& o);
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double std_err() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

/// Streaming log-sum-exp of log-weights, plus the second moment needed for a
/// delta-method standard error of log(mean(exp(x))).
struct LogMeanExp {
    std::size_t n = 0;
    double max_log = -std::numeric_limits<double>::infinity();
    double sum = 0.0;     // sum exp(x - max_log)
    double sum_sq = 0.0;  // sum exp(2(x - max_log))

    void add(double log_x);
    void merge(const LogMeanExp& o);
    /// log of the sample mean of exp(x); -inf when every term is zero.
    double log_mean() const;
    /// Standard error of log_mean() by the delta method.
    double log_mean_std_err() const;
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
};

/// Weighted least squares y = intercept + slope * x with weights w_i
/// (inverse variances). Standard errors come from (X^T W X)^{-1}.
LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> w);

/// Two-sided p-value of the two-sample Kolmogorov-Smirnov test
/// (asymptotic Kolmogorov distribution with the Stephens correction).
double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b);

/// Standard error of the mean of an autocorrelated series by batch means.
double batch_means_std_err(std::span<const double> series, std::size_t n_batches = 20);

}  // namespace bayescomplex
