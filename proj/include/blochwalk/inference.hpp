#pragma once

// Bayesian fit of (d_ini, d_n, d_q) with one hidden pool angle per record.
//
// Posterior: flat (improper) prior on the positive rates, the colatitude
// density p(theta_q; d_q g_q) as prior of every hidden angle, and the Binomial
// likelihood of each record's zero count given P_q = pool_prob(theta_q).
// Records with g = 0 have zero pool exposure and their angle is pinned at 0.

#include <cstdint>
#include <optional>
#include <vector>

#include "blochwalk/dataset.hpp"
#include "blochwalk/diffusion_kernel.hpp"
#include "blochwalk/two_scale.hpp"

namespace blochwalk {

struct ChainConfig {
    std::int64_t total_iterations = 1'000'000;  ///< after burn-in
    std::int64_t burn_in = 100'000;
    std::int64_t thin = 20;
    double rate_step = 0.05;   ///< initial proposal sd of each log-rate
    double theta_step = 0.05;  ///< initial proposal sd of each hidden angle, rad
    std::uint64_t seed = 0;
    std::int64_t stall_window = 10'000;  ///< zero acceptance this long is an error
    std::optional<DiffusionRates> initial_rates;
    std::optional<DiffusionRates> fixed_rates;  ///< sample hidden angles only
    bool single_level = false;                  ///< d_q = 0 and every angle pinned at 0
    SeriesConfig series;

    void validate() const;
};

struct PosteriorSample {
    std::int64_t iteration = 0;
    DiffusionRates rates;
    std::vector<double> hidden_thetas;
    double log_likelihood = 0.0;
    double log_post = 0.0;
};

struct Chain {
    std::vector<PosteriorSample> samples;
    PosteriorSample best_posterior;   ///< highest log_post visited
    PosteriorSample best_likelihood;  ///< highest log_likelihood visited
    double rate_acceptance = 0.0;     ///< post burn-in
    double theta_acceptance = 0.0;    ///< post burn-in, averaged over free angles
};

/// Sum over records of log Binomial(zeros; shots, pool_prob(theta_q)).
/// -inf when a record is impossible (e.g. P = 1 with zeros < shots).
double log_likelihood(const PoolDataset& data, const DiffusionRates& rates, const std::vector<double>& thetas);

/// Sum over records of log p(theta_q; d_q g_q). g = 0 records contribute 0 at
/// theta = 0 and -inf elsewhere. Throws DegenerateDistribution when d_q g = 0
/// for a record with g >= 1 and DomainError for angles outside [0, pi].
double log_hidden_prior(const std::vector<double>& thetas, const DiffusionRates& rates, const PoolDataset& data,
                        const SeriesConfig& cfg = {});

/// Metropolis-Hastings with a Gibbs split.
///
/// Every iteration makes one block update of the log-rates followed by an
/// independent random-walk update of each free hidden angle (reflected at 0
/// and pi). The block update is, with equal probability, either a plain move
/// (angles held fixed) or a transported move that rescales every angle so
/// each record's P_q stays unchanged; both include the Jacobians required by
/// the flat prior on the rates themselves. During burn-in the proposal scales
/// adapt towards 30% acceptance and the log-rate proposal covariance is
/// learned; both are frozen afterwards. Every thin-th post-burn-in state is
/// kept, total_iterations / thin in all.
Chain run_mcmc(const PoolDataset& data, const ChainConfig& cfg);

struct RateSummary {
    double mean = 0.0;
    double sd = 0.0;
    double p05 = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
};

RateSummary summarize(std::vector<double> values);

struct FitReport {
    RateSummary d_ini;
    RateSummary d_n;
    RateSummary d_q;
    DiffusionRates map_rates;
    double map_log_post = 0.0;
    DiffusionRates single_level_rates;
    /// Maxima of the angle-marginalized log-likelihood; the ratio is their difference.
    double max_loglik_two_level = 0.0;
    double max_loglik_single_level = 0.0;
    double log_likelihood_ratio = 0.0;
    /// Highest joint (angles as parameters) log-likelihood visited by the full chain.
    double max_joint_loglik_two_level = 0.0;
    double rate_acceptance = 0.0;
    double theta_acceptance = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_records = 0;
};

struct Fit {
    Chain chain;
    Chain single_level_chain;
    FitReport report;
};

/// log of the integral over theta of Binomial(zeros; shots, P(theta)) p(theta; d_q g),
/// summed over records.
double marginal_log_likelihood(const PoolDataset& data, const DiffusionRates& rates, const SeriesConfig& cfg = {});

/// Full and single-level chains, MAP refinement and the model comparison.
/// Throws DataError for fewer than 3 records.
Fit fit(const PoolDataset& data, const ChainConfig& cfg);

inline FitReport fit_report(const PoolDataset& data, const ChainConfig& cfg) { return fit(data, cfg).report; }

}  // namespace blochwalk
