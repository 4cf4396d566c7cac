#include "blochwalk/two_scale.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "blochwalk/errors.hpp"
#include "blochwalk/random.hpp"

namespace blochwalk {

void DiffusionRates::validate() const {
    for (double d : {d_ini, d_n, d_q}) {
        if (!(d >= 0.0) || std::isinf(d)) {
            throw DomainError("diffusion rates must be finite and >= 0");
        }
    }
}

DiffusionExposure binomial_exposure(const DiffusionRates& rates, GateCount g) {
    return DiffusionExposure(rates.d_ini + rates.d_n * static_cast<double>(g));
}

DiffusionExposure pool_exposure(const DiffusionRates& rates, GateCount g) {
    return DiffusionExposure(rates.d_q * static_cast<double>(g));
}

double reduced_length(const DiffusionRates& rates, GateCount g) {
    return std::exp(-2.0 * binomial_exposure(rates, g).value());
}

Probability pool_prob(Colatitude theta_q, const DiffusionRates& rates, GateCount g) {
    const double r = reduced_length(rates, g);
    const double upper = 0.5 + 0.5 * r;
    return Probability(std::clamp(0.5 + 0.5 * r * std::cos(theta_q.value()), 1.0 - upper, upper));
}

double pool_prob_complement(double theta_q, const DiffusionRates& rates, GateCount g) {
    // 1 - R cos t = (1 - R) + 2 R sin^2(t/2)
    const double tau = binomial_exposure(rates, g).value();
    const double r = std::exp(-2.0 * tau);
    const double half = std::sin(0.5 * theta_q);
    return std::clamp(0.5 * (-std::expm1(-2.0 * tau) + 2.0 * r * half * half), 0.0, 1.0);
}

Bounds bounds(const DiffusionRates& rates, GateCount g) {
    const double upper = mean_prob(binomial_exposure(rates, g)).value();
    return {Probability(1.0 - upper), Probability(upper)};
}

Probability pool_mean(const DiffusionRates& rates, GateCount g) {
    const double gd = static_cast<double>(g);
    return mean_prob(DiffusionExposure(rates.d_ini + (rates.d_n + rates.d_q) * gd));
}

double overdispersion_variance(const DiffusionRates& rates, GateCount g) {
    return prob_variance(pool_exposure(rates, g).value());
}

double contracted_overdispersion_variance(const DiffusionRates& rates, GateCount g) {
    const double r = reduced_length(rates, g);
    return r * r * overdispersion_variance(rates, g);
}

double pool_pdf(Probability p_bar, const DiffusionRates& rates, GateCount g, const SeriesConfig& cfg) {
    rates.validate();
    const double r = reduced_length(rates, g);
    if (r <= kDegenerateThreshold) {
        throw DegenerateDistribution("reduced Bloch length vanished: pool probability is a point mass at 1/2", 0.5);
    }
    const Bounds b = bounds(rates, g);
    const double tau_q = pool_exposure(rates, g).value();
    if (tau_q <= kDegenerateThreshold) {
        throw DegenerateDistribution("zero pool exposure: pool probability is a point mass at the upper bound",
                                     b.upper.value());
    }
    const double p = p_bar.value();
    if (p < b.lower.value() || p > b.upper.value()) return 0.0;
    const LegendreSeries series(DiffusionExposure(tau_q), cfg);
    const double x = std::clamp((2.0 * p - 1.0) / r, -1.0, 1.0);
    return series.density_sum(x) / r;
}

namespace {

// Colatitude with P(Theta <= theta) = u by bisection on the series CDF.
double theta_quantile(const LegendreSeries& series, double u) {
    double lo = 0.0;
    double hi = std::min(kPi, 12.0 * std::sqrt(series.exposure()));
    for (int iter = 0; iter < 80 && hi - lo > 1e-14; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (series.cdf(std::cos(mid)) < u) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double empirical_quantile(std::vector<double>& sorted, double level) {
    // linear interpolation between order statistics
    const double pos = level * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

}  // namespace

BandCurve band_curve(const DiffusionRates& rates, const std::vector<GateCount>& gates,
                     const std::vector<double>& levels, const SeriesConfig& cfg, std::uint64_t seed) {
    rates.validate();
    cfg.validate();
    for (double level : levels) {
        if (!(level > 0.0 && level < 1.0)) throw DomainError("percentile levels must lie in (0, 1)");
    }
    BandCurve curve;
    curve.reserve(gates.size());
    for (std::size_t gi = 0; gi < gates.size(); ++gi) {
        const GateCount g = gates[gi];
        const Bounds b = bounds(rates, g);
        BandPoint point{g, b.lower, b.upper, pool_mean(rates, g), {}, false};
        const double r = reduced_length(rates, g);
        const double tau_q = pool_exposure(rates, g).value();

        if (tau_q <= kDegenerateThreshold || r <= kDegenerateThreshold) {
            const Probability dirac = tau_q <= kDegenerateThreshold ? b.upper : Probability(0.5);
            for (double level : levels) point.percentiles.emplace_back(level, dirac);
        } else {
            try {
                const LegendreSeries series(DiffusionExposure(tau_q), cfg);
                for (double level : levels) {
                    const double theta = theta_quantile(series, 1.0 - level);
                    point.percentiles.emplace_back(level, pool_prob(Colatitude(theta), rates, g));
                }
            } catch (const ConvergenceError&) {
                std::vector<double> draws(kBandFallbackDraws);
                for (int i = 0; i < kBandFallbackDraws; ++i) {
                    KeyedStream rng(seed, {tag(StreamTag::kBandFallback), gi, static_cast<std::uint64_t>(i)});
                    draws[static_cast<std::size_t>(i)] =
                        pool_prob(Colatitude(small_exposure_theta(tau_q, rng)), rates, g).value();
                }
                std::sort(draws.begin(), draws.end());
                point.percentiles.clear();
                for (double level : levels) {
                    point.percentiles.emplace_back(level, Probability(empirical_quantile(draws, level)));
                }
                point.sampled = true;
            }
        }
        curve.push_back(std::move(point));
    }
    return curve;
}

}  // namespace blochwalk
