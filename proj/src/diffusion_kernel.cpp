#include "blochwalk/diffusion_kernel.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <string>

#include "blochwalk/errors.hpp"

namespace blochwalk {

DiffusionExposure::DiffusionExposure(double tau) : tau_(tau) {
    if (!(tau >= 0.0) || std::isinf(tau)) {
        throw DomainError("diffusion exposure must be finite and >= 0, got " + std::to_string(tau));
    }
}

void SeriesConfig::validate() const {
    if (k_max < 1 || k_max > k_ceiling) {
        throw DomainError("series config requires 1 <= k_max <= k_ceiling");
    }
    if (!(tail_tol > 0.0)) throw DomainError("series tail tolerance must be positive");
}

LegendreSeries::LegendreSeries(DiffusionExposure tau, const SeriesConfig& cfg) : tau_(tau.value()) {
    cfg.validate();
    if (tau_ == 0.0) {
        throw DegenerateDistribution("zero exposure: colatitude is a point mass at theta = 0", 0.0);
    }
    const bool adaptive = tau_ < kSmallExposure;
    const int limit = adaptive ? cfg.k_ceiling : cfg.k_max;
    for (int k = 0;; ++k) {
        const double kd = k;
        const double w = (2.0 * kd + 1.0) * std::exp(-kd * (kd + 1.0) * tau_);
        weights_.push_back(w);
        magnitude_ += w;
        const double next = (2.0 * kd + 3.0) * std::exp(-(kd + 1.0) * (kd + 2.0) * tau_);
        if (next < cfg.tail_tol) break;
        if (k >= limit) {
            if (adaptive) {
                throw ConvergenceError("Legendre series unconverged at order " + std::to_string(limit) +
                                       " for exposure " + std::to_string(tau_));
            }
            break;
        }
    }
}

double LegendreSeries::density_sum(double x) const {
    x = clamp_unit_interval(x);
    LegendreRecurrence rec(x);
    CompensatedSum sum;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        if (k > 0) rec.advance();
        sum.add(weights_[k] * rec.value());
    }
    return sum.value();
}

double LegendreSeries::cdf(double x) const {
    x = clamp_unit_interval(x);
    // int_x^1 L_k = (L_{k-1}(x) - L_{k+1}(x)) / (2k+1) for k >= 1
    LegendreRecurrence rec(x);
    CompensatedSum sum;
    sum.add(0.5 * (1.0 - x));
    rec.advance();  // at L_1
    for (std::size_t k = 1; k < weights_.size(); ++k) {
        const double lower = rec.previous();
        rec.advance();
        const double upper = rec.value();
        const double decay = weights_[k] / (2.0 * static_cast<double>(k) + 1.0);
        sum.add(0.5 * decay * (lower - upper));
    }
    return sum.value();
}

std::pair<double, double> LegendreSeries::endpoint_sums() const {
    CompensatedSum at_one;
    CompensatedSum at_minus_one;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        at_one.add(weights_[k]);
        at_minus_one.add(k % 2 == 0 ? weights_[k] : -weights_[k]);
    }
    return {at_one.value(), at_minus_one.value()};
}

namespace {

SeriesValue finish(double raw, int terms, NegativeDensity policy) {
    SeriesValue out{raw, raw, terms, false};
    if (policy == NegativeDensity::kClamp && raw < 0.0) {
        if (raw <= -kNegativeDensitySlack) {
            throw ConvergenceError("truncated series density " + std::to_string(raw) +
                                   " is below the clamping slack");
        }
        out.value = 0.0;
        out.clamped = true;
    }
    return out;
}

}  // namespace

SeriesValue theta_pdf_eval(Colatitude theta, DiffusionExposure tau, const SeriesConfig& cfg,
                           NegativeDensity policy) {
    const LegendreSeries series(tau, cfg);
    const double t = theta.value();
    const double raw = 0.5 * series.density_sum(std::cos(t)) * std::sin(t);
    return finish(raw, series.terms(), policy);
}

double theta_pdf(Colatitude theta, DiffusionExposure tau, const SeriesConfig& cfg, NegativeDensity policy) {
    return theta_pdf_eval(theta, tau, cfg, policy).value;
}

SeriesValue prob_pdf_eval(Probability p, DiffusionExposure tau, const SeriesConfig& cfg, NegativeDensity policy) {
    const LegendreSeries series(tau, cfg);
    const double raw = series.density_sum(2.0 * p.value() - 1.0);
    return finish(raw, series.terms(), policy);
}

double prob_pdf(Probability p, DiffusionExposure tau, const SeriesConfig& cfg, NegativeDensity policy) {
    return prob_pdf_eval(p, tau, cfg, policy).value;
}

std::pair<double, double> prob_pdf_endpoints(DiffusionExposure tau, const SeriesConfig& cfg) {
    const auto [at_one, at_zero] = LegendreSeries(tau, cfg).endpoint_sums();
    return {at_zero, at_one};
}

double log_theta_pdf(Colatitude theta, const LegendreSeries& series) {
    const double t = theta.value();
    const double s = std::sin(t);
    if (t == 0.0 || s <= 0.0) return -std::numeric_limits<double>::infinity();
    const double bracket = 0.5 * series.density_sum(std::cos(t));
    const double noise = 1e3 * DBL_EPSILON * series.magnitude();
    if (bracket > noise) return std::log(bracket) + std::log(s);
    return log_theta_pdf_asymptotic(t, series.exposure());
}

double log_theta_pdf_asymptotic(double theta, double tau) {
    const double s = std::sin(theta);
    if (theta <= 0.0 || s <= 0.0) return -std::numeric_limits<double>::infinity();
    return -std::log(2.0 * tau) + 0.5 * std::log(theta / s) - theta * theta / (4.0 * tau) + std::log(s);
}

Probability mean_prob(DiffusionExposure tau) { return Probability(0.5 + 0.5 * std::exp(-2.0 * tau.value())); }

double prob_variance(double tau) {
    // with a = exp(-2 tau) - 1 the closed form reduces to a^2 (1/4 + a/6)
    const double a = std::expm1(-2.0 * tau);
    return a * a * (0.25 + a / 6.0);
}

MomentSet moments(DiffusionExposure tau) {
    const double t = tau.value();
    MomentSet m;
    m.mean = mean_prob(tau);
    m.second_raw = 1.0 / 3.0 + 0.5 * std::exp(-2.0 * t) + std::exp(-6.0 * t) / 6.0;
    m.variance = prob_variance(t);
    return m;
}

ThetaSampler::ThetaSampler(DiffusionExposure tau, const SeriesConfig& cfg, int grid_points) {
    if (grid_points < 2) throw DomainError("theta sampler needs at least two grid points");
    const LegendreSeries series(tau, cfg);
    const double theta_hi = std::min(kPi, 12.0 * std::sqrt(tau.value()));
    const auto n = static_cast<std::size_t>(grid_points);
    nodes_.resize(n);
    cdf_.resize(n);
    slope_.resize(n);

    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = i + 1 == n ? theta_hi : theta_hi * static_cast<double>(i) / static_cast<double>(n - 1);
        nodes_[i] = t;
        const double x = std::cos(t);
        running = std::max(running, std::clamp(series.cdf(x), 0.0, 1.0));
        cdf_[i] = i == 0 ? 0.0 : running;
        slope_[i] = std::max(0.0, 0.5 * series.density_sum(x) * std::sin(t));
    }
    const double total = cdf_.back();
    if (!(total > 0.0)) throw ConvergenceError("theta CDF has no mass on the sampling grid");
    for (std::size_t i = 0; i < n; ++i) {
        cdf_[i] /= total;
        slope_[i] /= total;
    }
    cdf_.back() = 1.0;

    // Fritsch-Carlson limiter keeps every Hermite segment monotone.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = nodes_[i + 1] - nodes_[i];
        const double secant = (cdf_[i + 1] - cdf_[i]) / h;
        if (secant <= 0.0) {
            slope_[i] = 0.0;
            slope_[i + 1] = 0.0;
            continue;
        }
        const double a = slope_[i] / secant;
        const double b = slope_[i + 1] / secant;
        const double r = a * a + b * b;
        if (r > 9.0) {
            const double s = 3.0 / std::sqrt(r);
            slope_[i] = s * a * secant;
            slope_[i + 1] = s * b * secant;
        }
    }
}

double ThetaSampler::hermite(std::size_t i, double theta) const {
    const double h = nodes_[i + 1] - nodes_[i];
    const double s = (theta - nodes_[i]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2.0 * s3 - 3.0 * s2 + 1.0) * cdf_[i] + (s3 - 2.0 * s2 + s) * h * slope_[i] +
           (-2.0 * s3 + 3.0 * s2) * cdf_[i + 1] + (s3 - s2) * h * slope_[i + 1];
}

double ThetaSampler::cdf(double theta) const {
    if (theta <= nodes_.front()) return 0.0;
    if (theta >= nodes_.back()) return 1.0;
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), theta);
    const auto i = static_cast<std::size_t>(it - nodes_.begin()) - 1;
    return std::clamp(hermite(i, theta), 0.0, 1.0);
}

double ThetaSampler::quantile(double u) const {
    if (u <= 0.0) return nodes_.front();
    if (u >= 1.0) return nodes_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
    i = std::clamp<std::size_t>(i, 1, cdf_.size() - 1) - 1;
    double lo = nodes_[i];
    double hi = nodes_[i + 1];
    for (int iter = 0; iter < 64 && hi - lo > 1e-15; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (hermite(i, mid) < u) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return std::clamp(0.5 * (lo + hi), 0.0, kPi);
}

Colatitude sample_theta(DiffusionExposure tau, const SeriesConfig& cfg, std::uint64_t seed) {
    const ThetaSampler sampler(tau, cfg);
    KeyedStream rng(seed, {tag(StreamTag::kSingleDraw)});
    return sampler.draw(rng);
}

double small_exposure_theta(double tau, KeyedStream& rng) {
    return std::min(kPi, std::sqrt(-4.0 * tau * std::log(rng.uniform())));
}

}  // namespace blochwalk
