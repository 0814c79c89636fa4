#include "bayescomplex/stats.hpp"

#include <algorithm>
#include <stdexcept>

namespace bayescomplex {

void RunningMoments::merge(const RunningMoments& o) {
    if (o.n == 0) return;
    if (n == 0) {
        *this = o;
        return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(o.n);
    const double delta = o.mean - mean;
    const double total = na + nb;
    mean += delta * nb / total;
    m2 += o.m2 + delta * delta * na * nb / total;
    n += o.n;
}

void LogMeanExp::add(double log_x) {
    ++n;
    if (log_x == -std::numeric_limits<double>::infinity()) return;
    if (log_x > max_log) {
        const double scale = std::exp(max_log - log_x);
        sum *= scale;
        sum_sq *= scale * scale;
        max_log = log_x;
    }
    const double e = std::exp(log_x - max_log);
    sum += e;
    sum_sq += e * e;
}

void LogMeanExp::merge(const LogMeanExp& o) {
    if (o.n == 0) return;
    n += o.n;
    if (o.max_log == -std::numeric_limits<double>::infinity()) return;
    if (o.max_log > max_log) {
        const double scale = std::exp(max_log - o.max_log);
        sum = sum * scale + o.sum;
        sum_sq = sum_sq * scale * scale + o.sum_sq;
        max_log = o.max_log;
    } else {
        const double scale = std::exp(o.max_log - max_log);
        sum += o.sum * scale;
        sum_sq += o.sum_sq * scale * scale;
    }
}

double LogMeanExp::log_mean() const {
    if (n == 0 || sum == 0.0) return -std::numeric_limits<double>::infinity();
    return max_log + std::log(sum / static_cast<double>(n));
}

double LogMeanExp::log_mean_std_err() const {
    if (n < 2 || sum == 0.0) return std::numeric_limits<double>::infinity();
    const double nn = static_cast<double>(n);
    const double mean = sum / nn;
    const double var = std::max(0.0, (sum_sq / nn - mean * mean) * nn / (nn - 1.0));
    return std::sqrt(var / nn) / mean;
}

LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> w) {
    if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
        throw std::invalid_argument("weighted_line_fit: need >= 2 points of matching size");
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    const double det = sw * sxx - sx * sx;
    if (!(det > 0)) throw std::invalid_argument("weighted_line_fit: degenerate abscissae");
    LineFit fit;
    fit.slope = (sw * sxy - sx * sy) / det;
    fit.intercept = (sxx * sy - sx * sxy) / det;
    fit.slope_se = std::sqrt(sw / det);
    fit.intercept_se = std::sqrt(sxx / det);
    return fit;
}

double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample_pvalue: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = na * nb / (na + nb);
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    // Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-12 * std::abs(sum)) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double batch_means_std_err(std::span<const double> series, std::size_t n_batches) {
    const std::size_t len = series.size() / n_batches;
    if (len == 0) throw std::invalid_argument("batch_means_std_err: series shorter than batch count");
    RunningMoments batches;
    for (std::size_t b = 0; b < n_batches; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += series[b * len + i];
        batches.add(s / static_cast<double>(len));
    }
    return batches.std_err();
}

}  // namespace bayescomplex
