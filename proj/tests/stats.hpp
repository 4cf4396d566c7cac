#pragma once

// Small statistics helpers shared by the tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace blochwalk::testing {

struct MeanSe {
    double mean = 0.0;
    double variance = 0.0;  // sample variance
    double se = 0.0;        // standard error of the mean
};

inline MeanSe mean_se(const std::vector<double>& v) {
    MeanSe out;
    const double n = static_cast<double>(v.size());
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.variance = ss / (n - 1.0);
    out.se = std::sqrt(out.variance / n);
    return out;
}

// Kolmogorov distribution tail Q(lambda) = P(K > lambda).
inline double kolmogorov_q(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == t) ++i;
        while (j < b.size() && b[j] == t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

// Adaptive Gauss-Kronrod with an absolute error target, so segments holding only
// rounding noise in a density tail stop refining.
inline double integrate_abs(const std::function<double(double)>& f, double a, double b, double abs_tol,
                            int depth = 12) {
    double err = 0.0;
    const double est = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 0, 0.0, &err);
    if (err <= abs_tol || depth == 0) return est;
    const double mid = 0.5 * (a + b);
    return integrate_abs(f, a, mid, 0.5 * abs_tol, depth - 1) + integrate_abs(f, mid, b, 0.5 * abs_tol, depth - 1);
}

// Integral over [a, b], split at the given interior points.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        std::vector<double> breaks = {}, double abs_tol = 1e-12) {
    breaks.push_back(a);
    breaks.push_back(b);
    std::sort(breaks.begin(), breaks.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (breaks[i] < a || breaks[i + 1] > b || breaks[i + 1] <= breaks[i]) continue;
        total += integrate_abs(f, breaks[i], breaks[i + 1], abs_tol);
    }
    return total;
}

}  // namespace blochwalk::testing
