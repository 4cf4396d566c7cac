#pragma once

#include <cstdint>
#include <vector>

#include "blochwalk/two_scale.hpp"

namespace blochwalk {

enum class SimMode { kStepwise, kDistributional };

struct SimConfig {
    DiffusionRates rates;
    std::vector<GateCount> gates;
    std::int64_t n_shots = 8192;
    std::int64_t m_pools = 1;
    std::uint64_t seed = 0;
    SimMode mode = SimMode::kDistributional;

    void validate() const;
};

/// Shared systematic over-rotation about the Bloch x axis.
struct CoherentErrorConfig {
    double affected_fraction = 0.0;  ///< share of walkers in every pool that receive it
    double over_rotation = 0.0;      ///< rad per gate, signed
};

struct FrequencyDraw {
    std::uint64_t pool = 0;
    GateCount gate_count = 0;
    std::int64_t shots = 0;
    std::int64_t zeros = 0;
    Probability observed_freq{1.0};
    Probability true_pool_prob{1.0};
    Colatitude pool_angle{0.0};
};

struct RunTrajectory {
    std::uint64_t pool = 0;
    std::vector<FrequencyDraw> points;  ///< ascending gate count
};

/// Per-step rates above this break the one-step-per-gate small-angle scheme.
inline constexpr double kStepwiseRateLimit = 0.05;

/// Samples theta_q from the pool-level density, maps it through pool_prob and
/// draws the zero count from Binomial(n, P_q). Every (pool, gate) cell is an
/// independent experiment. Output is pool-major, gates in the given order.
std::vector<FrequencyDraw> simulate_distributional(const SimConfig& cfg, const SeriesConfig& series = {});

/// Brute-force walker simulation of the two-scale walk.
///
/// Every pool holds n_shots unit vectors started at the north pole. Each walker
/// takes one geodesic step of variance 2 d_ini per tangent axis before the
/// first gate, then one step of variance 2 d_n per tangent axis per gate. After
/// the individual steps of a gate, all walkers of the pool are rotated by a
/// common rotation vector drawn from N(0, 2 d_q I_3). Readout at a requested
/// gate count is one Bernoulli draw per walker with P = (1 + z) / 2.
/// true_pool_prob is the walker average of P; pool_angle is the colatitude of
/// the rotated pool axis. Output is pool-major with ascending gate counts.
std::vector<FrequencyDraw> simulate_stepwise(const SimConfig& cfg);

/// simulate_stepwise with an added deterministic rotation of over_rotation
/// rad per gate about x for the first round(fraction * n) walkers of each pool.
std::vector<RunTrajectory> resample_runs(const SimConfig& cfg, const CoherentErrorConfig& coherent);

/// Exposure under the non-Markovian time rescaling: rate * dt * (t / dt)^(1 + kappa).
DiffusionExposure rescale_time_nonmarkovian(double rate, double t, double dt, double kappa);

}  // namespace blochwalk
