#pragma once

// Two-scale walk: an individual (Binomial-level) walk contracts the mean Bloch
// vector to length R = exp(-2 (d_ini + d_n g)), while a shared pool-level walk
// moves that shortened vector's direction theta_q with coefficient d_q. The
// pool probability is P_q = 1/2 + R cos(theta_q) / 2.
//
// d_ini enters only the individual exposure (one virtual zeroth step); the pool
// level accumulates d_q g from g = 0.

#include <cstdint>
#include <utility>
#include <vector>

#include "blochwalk/bloch_core.hpp"
#include "blochwalk/diffusion_kernel.hpp"

namespace blochwalk {

using GateCount = std::uint64_t;

/// Exposures at or below this are handled as point masses.
inline constexpr double kDegenerateThreshold = 1e-12;

struct DiffusionRates {
    double d_ini = 0.0;  ///< rad^2, applied once before the first gate
    double d_n = 0.0;    ///< rad^2 per gate, individual level
    double d_q = 0.0;    ///< rad^2 per gate, pool level

    /// Throws DomainError for negative or non-finite components.
    void validate() const;
};

struct Bounds {
    Probability lower{0.0};
    Probability upper{1.0};
};

DiffusionExposure binomial_exposure(const DiffusionRates& rates, GateCount g);
DiffusionExposure pool_exposure(const DiffusionRates& rates, GateCount g);

/// R(g) = exp(-2 binomial_exposure).
double reduced_length(const DiffusionRates& rates, GateCount g);

Probability pool_prob(Colatitude theta_q, const DiffusionRates& rates, GateCount g);

/// 1 - pool_prob, computed without cancellation near P = 1.
double pool_prob_complement(double theta_q, const DiffusionRates& rates, GateCount g);

/// Density of the pool probability. Zero outside the closed bounds.
///
/// Throws DegenerateDistribution when R <= 1e-12 (point mass at 1/2) or when the
/// pool exposure d_q g <= 1e-12 (point mass at the upper bound).
double pool_pdf(Probability p_bar, const DiffusionRates& rates, GateCount g, const SeriesConfig& cfg = {});

Bounds bounds(const DiffusionRates& rates, GateCount g);

/// Across-pool mean: mean_prob at d_ini + (d_n + d_q) g.
Probability pool_mean(const DiffusionRates& rates, GateCount g);

/// Variance of the pool scatter before contraction: prob_variance(d_q g).
double overdispersion_variance(const DiffusionRates& rates, GateCount g);

/// R(g)^2 * overdispersion_variance: the variance of pool_prob itself.
double contracted_overdispersion_variance(const DiffusionRates& rates, GateCount g);

struct BandPoint {
    GateCount gates = 0;
    Probability lower{0.0};
    Probability upper{1.0};
    Probability pool_mean{1.0};
    std::vector<std::pair<double, Probability>> percentiles;  ///< (level, value)
    bool sampled = false;  ///< percentiles came from the sampling fallback
};

using BandCurve = std::vector<BandPoint>;

/// Number of draws used when percentiles fall back to sampling.
inline constexpr int kBandFallbackDraws = 100000;

/// Bounds, pool mean and pool-probability percentiles per gate count.
///
/// Percentiles come from inverting the colatitude CDF (P_q decreases in
/// theta_q, so level a of P_q is pool_prob at the 1 - a theta quantile). When
/// the series cannot converge the percentiles are read off kBandFallbackDraws
/// small-exposure draws keyed by (seed, gate index).
BandCurve band_curve(const DiffusionRates& rates, const std::vector<GateCount>& gates,
                     const std::vector<double>& levels, const SeriesConfig& cfg, std::uint64_t seed);

}  // namespace blochwalk
