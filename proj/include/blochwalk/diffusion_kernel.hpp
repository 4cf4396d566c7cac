#pragma once

// Single-level rotational diffusion on the Bloch sphere started from the north pole.
//
// Every function takes the accumulated exposure tau = D * t (rad^2) instead of
// the coefficient and the time separately; the solution depends only on the
// product. The colatitude density is the Legendre series
//
//   p(theta; tau) = sum_k (2k+1)/2 exp(-k(k+1) tau) L_k(cos theta) sin theta
//
// and the readout-probability density follows by the change of variables
// P = (1 + cos theta)/2.

#include <cstdint>
#include <utility>
#include <vector>

#include "blochwalk/bloch_core.hpp"
#include "blochwalk/random.hpp"

namespace blochwalk {

/// Accumulated angular diffusion exposure in rad^2, tau >= 0.
class DiffusionExposure {
public:
    explicit DiffusionExposure(double tau);

    double value() const noexcept { return tau_; }

private:
    double tau_;
};

/// Below this exposure the series order grows adaptively up to k_ceiling.
inline constexpr double kSmallExposure = 1e-3;

/// Densities down to this value are treated as truncation noise and clamped on request.
inline constexpr double kNegativeDensitySlack = 1e-9;

struct SeriesConfig {
    int k_max = 1000;
    double tail_tol = 1e-14;
    int k_ceiling = 8192;

    /// Throws DomainError unless 1 <= k_max <= k_ceiling and tail_tol > 0.
    void validate() const;
};

enum class NegativeDensity { kReport, kClamp };

/// Value of a truncated series with the diagnostics needed to audit it.
struct SeriesValue {
    double value = 0.0;  ///< clamped when requested, otherwise equal to raw
    double raw = 0.0;
    int terms = 0;
    bool clamped = false;
};

/// Precomputed weights (2k+1) exp(-k(k+1) tau) for one exposure.
///
/// Construction applies the truncation policy: terms are added until the next
/// weight drops below tail_tol, up to k_max (or k_ceiling when tau is below
/// kSmallExposure, in which case hitting the cap throws ConvergenceError).
/// tau == 0 throws DegenerateDistribution located at theta = 0.
class LegendreSeries {
public:
    LegendreSeries(DiffusionExposure tau, const SeriesConfig& cfg);

    double exposure() const noexcept { return tau_; }
    int terms() const noexcept { return static_cast<int>(weights_.size()); }

    /// sum_k (2k+1) exp(-k(k+1) tau) L_k(x), compensated.
    double density_sum(double x) const;

    /// P(Theta <= theta) with x = cos(theta), integrated term by term.
    double cdf(double x) const;

    /// sum_k |(2k+1) exp(-k(k+1) tau)|, the scale of the rounding noise in density_sum.
    double magnitude() const noexcept { return magnitude_; }

    /// Weight pair (sum over k of w_k, sum over k of (-1)^k w_k).
    std::pair<double, double> endpoint_sums() const;

private:
    double tau_;
    std::vector<double> weights_;
    double magnitude_ = 0.0;
};

/// Colatitude density p(theta; tau).
double theta_pdf(Colatitude theta, DiffusionExposure tau, const SeriesConfig& cfg = {},
                 NegativeDensity policy = NegativeDensity::kReport);
SeriesValue theta_pdf_eval(Colatitude theta, DiffusionExposure tau, const SeriesConfig& cfg = {},
                           NegativeDensity policy = NegativeDensity::kReport);

/// Readout-probability density p_P(P; tau).
double prob_pdf(Probability p, DiffusionExposure tau, const SeriesConfig& cfg = {},
                NegativeDensity policy = NegativeDensity::kReport);
SeriesValue prob_pdf_eval(Probability p, DiffusionExposure tau, const SeriesConfig& cfg = {},
                          NegativeDensity policy = NegativeDensity::kReport);

/// (p_P(0; tau), p_P(1; tau)).
std::pair<double, double> prob_pdf_endpoints(DiffusionExposure tau, const SeriesConfig& cfg = {});

/// log p(theta; tau) that stays finite and smooth in the far tail.
///
/// Where the series bracket falls below its own rounding noise the leading
/// small-exposure heat-kernel asymptote is used instead:
///   p ~ sin(theta)/(2 tau) * sqrt(theta / sin theta) * exp(-theta^2 / (4 tau)).
/// Returns -inf at theta = 0 and theta = pi.
double log_theta_pdf(Colatitude theta, const LegendreSeries& series);

/// The small-exposure asymptote of log p(theta; tau) on its own.
double log_theta_pdf_asymptotic(double theta, double tau);

/// Mean readout probability 1/2 + exp(-2 tau)/2.
Probability mean_prob(DiffusionExposure tau);

struct MomentSet {
    Probability mean{1.0};
    double second_raw = 1.0;
    double variance = 0.0;
};

/// Closed-form first two raw moments and the variance of P under p_P(P; tau).
MomentSet moments(DiffusionExposure tau);

/// Variance 1/12 - exp(-4 tau)/4 + exp(-6 tau)/6 alone.
double prob_variance(double tau);

/// Inverse-CDF sampler for the colatitude density at one exposure.
///
/// The CDF is tabulated on a uniform theta grid (grid_points nodes spanning
/// [0, theta_hi], theta_hi = min(pi, 12 sqrt(tau)), beyond which the mass is
/// below 1e-15) and interpolated by a monotone cubic Hermite spline whose node
/// slopes are the clamped density values.
class ThetaSampler {
public:
    ThetaSampler(DiffusionExposure tau, const SeriesConfig& cfg = {}, int grid_points = 4096);

    /// Colatitude at cumulative probability u in [0, 1].
    double quantile(double u) const;

    /// Interpolated CDF, exposed for goodness-of-fit checks.
    double cdf(double theta) const;

    Colatitude draw(KeyedStream& rng) const { return Colatitude(quantile(rng.uniform())); }

    int grid_points() const noexcept { return static_cast<int>(nodes_.size()); }

private:
    double hermite(std::size_t i, double theta) const;

    std::vector<double> nodes_;
    std::vector<double> cdf_;
    std::vector<double> slope_;
};

/// One exact draw of theta at exposure tau, deterministic in the seed.
Colatitude sample_theta(DiffusionExposure tau, const SeriesConfig& cfg, std::uint64_t seed);

/// Small-exposure approximation theta = sqrt(-4 tau log u): the tangent-plane
/// heat kernel, used only when the series cannot converge.
double small_exposure_theta(double tau, KeyedStream& rng);

}  // namespace blochwalk
