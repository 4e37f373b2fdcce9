#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace segpf {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double log_two_pi = 1.837877066409345483560659472811; // log(2*pi)

// log(sum_i exp(v[i])) with max subtraction; -inf for an empty or all-(-inf) input.
inline double log_sum_exp(std::span<const double> v) {
    double m = neg_inf;
    for (double x : v) m = std::max(m, x);
    if (m == neg_inf) return neg_inf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_mean_exp(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("log_mean_exp: empty input");
    return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

inline double log_normal_pdf(double x, double mean, double var) {
    if (!(var > 0.0)) throw std::invalid_argument("log_normal_pdf: variance must be positive");
    const double d = x - mean;
    return -0.5 * (log_two_pi + std::log(var) + d * d / var);
}

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Unbiased (n-1 divisor) sample variance.
inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("sample_variance: need at least two values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) {
        const double d = x - m;
        s += d * d;
    }
    return s / static_cast<double>(v.size() - 1);
}

// Moment-ratio skewness g1 = m3 / m2^{3/2} (central moments with 1/n).
inline double skewness(std::span<const double> v) {
    if (v.size() < 3) throw std::invalid_argument("skewness: need at least three values");
    const double m = mean(v);
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        const double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    const double n = static_cast<double>(v.size());
    m2 /= n;
    m3 /= n;
    return m3 / std::pow(m2, 1.5);
}

// Excess kurtosis g2 = m4 / m2^2 - 3 (central moments with 1/n).
inline double excess_kurtosis(std::span<const double> v) {
    if (v.size() < 4) throw std::invalid_argument("excess_kurtosis: need at least four values");
    const double m = mean(v);
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - m;
        const double d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    const double n = static_cast<double>(v.size());
    m2 /= n;
    m4 /= n;
    return m4 / (m2 * m2) - 3.0;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace segpf
