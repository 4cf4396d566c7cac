#include "blochwalk/inference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include "blochwalk/errors.hpp"
#include "blochwalk/random.hpp"

namespace blochwalk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kAcceptTarget = 0.3;
constexpr std::int64_t kAdaptBatch = 100;

double log_choose(std::int64_t n, std::int64_t k) {
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

// log Binomial(zeros; shots, P(theta)) with the 0 log 0 = 0 convention.
double record_log_likelihood(const ShotRecord& r, double log_c, const DiffusionRates& rates, double theta) {
    const double p = std::clamp(0.5 + 0.5 * reduced_length(rates, r.gates) * std::cos(theta), 0.0, 1.0);
    const double q = pool_prob_complement(theta, rates, r.gates);
    double out = log_c;
    if (r.zeros > 0) {
        if (p <= 0.0) return kNegInf;
        out += static_cast<double>(r.zeros) * std::log(p);
    }
    if (r.shots - r.zeros > 0) {
        if (q <= 0.0) return kNegInf;
        out += static_cast<double>(r.shots - r.zeros) * std::log(q);
    }
    return out;
}

// Prior of one hidden angle. The series is used when it converges; below its
// reach the small-exposure asymptote takes over, so tiny d_q stays finite.
constexpr double kAsymptoticExposure = 1e-5;

class HiddenPrior {
public:
    HiddenPrior() = default;  // pinned at theta = 0

    HiddenPrior(double tau, const SeriesConfig& cfg) : tau_(tau), pinned_(false) {
        // asymptote log error is about tau / 3; the series needs ~1/sqrt(tau) terms
        if (tau < kAsymptoticExposure) return;
        try {
            series_.emplace(DiffusionExposure(tau), cfg);
        } catch (const ConvergenceError&) {
            series_.reset();
        }
    }

    bool pinned() const noexcept { return pinned_; }
    double exposure() const noexcept { return tau_; }

    double log_density(double theta) const {
        if (pinned_) return theta == 0.0 ? 0.0 : kNegInf;
        if (theta <= 0.0 || theta >= kPi) return kNegInf;
        if (series_) return log_theta_pdf(Colatitude(theta), *series_);
        return log_theta_pdf_asymptotic(theta, tau_);
    }

private:
    double tau_ = 0.0;
    bool pinned_ = true;
    std::optional<LegendreSeries> series_;
};

double reflect(double theta) {
    // symmetric reflection into [0, pi]
    for (int i = 0; i < 64 && (theta < 0.0 || theta > kPi); ++i) {
        if (theta < 0.0) theta = -theta;
        if (theta > kPi) theta = 2.0 * kPi - theta;
    }
    return std::clamp(theta, 0.0, kPi);
}

std::vector<double> log_rates_of(const DiffusionRates& r, std::size_t dims) {
    std::vector<double> out{std::log(r.d_ini), std::log(r.d_n), std::log(r.d_q)};
    out.resize(dims);
    return out;
}

DiffusionRates rates_of(const std::vector<double>& log_rates) {
    DiffusionRates r;
    r.d_ini = std::exp(log_rates[0]);
    r.d_n = std::exp(log_rates[1]);
    r.d_q = log_rates.size() > 2 ? std::exp(log_rates[2]) : 0.0;
    return r;
}

// Lower-triangular Cholesky factor of a small SPD matrix; nullopt when not SPD.
std::optional<std::vector<std::vector<double>>> cholesky(const std::vector<std::vector<double>>& a) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i][j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j) {
                if (!(s > 0.0)) return std::nullopt;
                l[i][i] = std::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    return l;
}

// Moment-matching start: regress -log(2F - 1)/2 on g and split the slope.
DiffusionRates default_start(const PoolDataset& data, bool single_level) {
    double sg = 0.0, sy = 0.0, sgg = 0.0, sgy = 0.0, count = 0.0;
    for (const ShotRecord& r : data.records) {
        const double c = 2.0 * r.frequency() - 1.0;
        if (c < 0.05) continue;
        const double y = -0.5 * std::log(std::min(c, 1.0 - 0.5 / static_cast<double>(r.shots)));
        const double g = static_cast<double>(r.gates);
        sg += g;
        sy += y;
        sgg += g * g;
        sgy += g * y;
        count += 1.0;
    }
    double slope = 1e-4;
    double intercept = 1e-2;
    const double det = count * sgg - sg * sg;
    if (count >= 2.0 && det > 0.0) {
        slope = (count * sgy - sg * sy) / det;
        intercept = (sy - slope * sg) / count;
    }
    slope = std::max(slope, 1e-6);
    intercept = std::max(intercept, 1e-4);
    DiffusionRates start;
    start.d_ini = intercept;
    start.d_n = single_level ? slope : 0.5 * slope;
    start.d_q = single_level ? 0.0 : 0.5 * slope;
    return start;
}

class Sampler {
public:
    Sampler(const PoolDataset& data, const ChainConfig& cfg) : data_(data), cfg_(cfg) {
        const std::size_t m = data.size();
        log_c_.resize(m);
        free_.resize(m);
        for (std::size_t q = 0; q < m; ++q) {
            const ShotRecord& r = data.records[q];
            log_c_[q] = log_choose(r.shots, r.zeros);
            free_[q] = !cfg.single_level && r.gates > 0;
        }
        dims_ = cfg.single_level ? 2 : 3;
        sample_rates_ = !cfg.fixed_rates.has_value();

        rates_ = cfg.fixed_rates ? *cfg.fixed_rates : cfg.initial_rates.value_or(default_start(data, cfg.single_level));
        if (cfg.single_level) rates_.d_q = 0.0;
        rates_.validate();
        if (sample_rates_ && (rates_.d_ini <= 0.0 || rates_.d_n <= 0.0 || (!cfg.single_level && rates_.d_q <= 0.0))) {
            throw DomainError("sampled rates must start strictly positive");
        }

        priors_ = make_priors(rates_);
        thetas_.assign(m, 0.0);
        for (std::size_t q = 0; q < m; ++q) {
            if (!free_[q]) continue;
            const ShotRecord& r = data.records[q];
            const double radius = reduced_length(rates_, r.gates);
            const double c = std::clamp((2.0 * r.frequency() - 1.0) / radius, -1.0, 1.0);
            const double floor = 0.5 * std::sqrt(priors_[q].exposure());
            thetas_[q] = std::clamp(std::acos(c), std::min(floor, 0.5), kPi - 1e-6);
        }
        ll_.resize(m);
        lp_.resize(m);
        for (std::size_t q = 0; q < m; ++q) {
            ll_[q] = record_log_likelihood(data.records[q], log_c_[q], rates_, thetas_[q]);
            lp_[q] = priors_[q].log_density(thetas_[q]);
        }
        if (!std::isfinite(total(ll_) + total(lp_))) {
            throw DomainError("initial MCMC state has zero posterior density");
        }

        theta_scale_.assign(m, cfg.theta_step);
        theta_tries_.assign(m, 0);
        theta_accepts_.assign(m, 0);
        theta_stall_.assign(m, 0);
        cov_.assign(dims_, std::vector<double>(dims_, 0.0));
        for (std::size_t j = 0; j < dims_; ++j) cov_[j][j] = cfg.rate_step * cfg.rate_step;
        chol_ = *cholesky(cov_);
    }

    Chain run() {
        Chain chain;
        const std::int64_t total_iters = cfg_.burn_in + cfg_.total_iterations;
        chain.samples.reserve(static_cast<std::size_t>(cfg_.total_iterations / cfg_.thin));
        chain.best_posterior = snapshot(0);
        chain.best_likelihood = chain.best_posterior;

        const KeyedStream rate_stream(cfg_.seed, {tag(StreamTag::kMcmcRates)});
        std::vector<KeyedStream> theta_streams;
        theta_streams.reserve(data_.size());
        for (std::uint64_t q = 0; q < data_.size(); ++q) {
            theta_streams.emplace_back(cfg_.seed, std::initializer_list<std::uint64_t>{tag(StreamTag::kMcmcHidden), q});
        }

        std::int64_t rate_tries = 0, rate_accepts = 0;
        std::int64_t post_theta_tries = 0, post_theta_accepts = 0;
        std::int64_t rate_stall = 0;
        std::vector<std::vector<double>> burn_trace;

        for (std::int64_t it = 0; it < total_iters; ++it) {
            const bool burning = it < cfg_.burn_in;
            const auto block = static_cast<std::uint64_t>(it);

            if (sample_rates_) {
                KeyedStream rng = rate_stream.block(block);
                const bool transport = !cfg_.single_level && rng.uniform() < 0.5;
                const bool accepted = rate_update(rng, transport);
                auto& stats = transport ? transport_batch_ : plain_batch_;
                ++stats[0];
                if (accepted) ++stats[1];
                rate_stall = accepted ? 0 : rate_stall + 1;
                if (rate_stall >= cfg_.stall_window) {
                    throw AdaptationError("rate block accepted nothing in " + std::to_string(cfg_.stall_window) +
                                          " iterations");
                }
                if (!burning) {
                    ++rate_tries;
                    if (accepted) ++rate_accepts;
                }
            }

            for (std::size_t q = 0; q < data_.size(); ++q) {
                if (!free_[q]) continue;
                KeyedStream rng = theta_streams[q].block(block);
                const bool accepted = theta_update(q, rng);
                ++theta_tries_[q];
                if (accepted) ++theta_accepts_[q];
                theta_stall_[q] = accepted ? 0 : theta_stall_[q] + 1;
                if (theta_stall_[q] >= cfg_.stall_window) {
                    throw AdaptationError("hidden angle " + std::to_string(q) + " accepted nothing in " +
                                          std::to_string(cfg_.stall_window) + " iterations");
                }
                if (!burning) {
                    ++post_theta_tries;
                    if (accepted) ++post_theta_accepts;
                }
            }

            const double ll = total(ll_);
            const double post = ll + total(lp_);
            if (post > chain.best_posterior.log_post) chain.best_posterior = snapshot(it);
            if (ll > chain.best_likelihood.log_likelihood) chain.best_likelihood = snapshot(it);

            if (burning) {
                if (sample_rates_) burn_trace.push_back(log_rates_of(rates_, dims_));
                if ((it + 1) % kAdaptBatch == 0) adapt(it);
                if (sample_rates_ && cfg_.burn_in >= 1000 &&
                    (it + 1 == cfg_.burn_in / 2 || it + 1 == (3 * cfg_.burn_in) / 4)) {
                    learn_covariance(burn_trace, static_cast<std::size_t>(cfg_.burn_in / 4));
                }
            } else if ((it - cfg_.burn_in + 1) % cfg_.thin == 0) {
                chain.samples.push_back(snapshot(it));
            }
        }
        chain.rate_acceptance = rate_tries > 0 ? static_cast<double>(rate_accepts) / static_cast<double>(rate_tries) : 0.0;
        chain.theta_acceptance =
            post_theta_tries > 0 ? static_cast<double>(post_theta_accepts) / static_cast<double>(post_theta_tries) : 0.0;
        return chain;
    }

private:
    static double total(const std::vector<double>& v) {
        CompensatedSum s;
        for (double x : v) s.add(x);
        return s.value();
    }

    std::vector<HiddenPrior> make_priors(const DiffusionRates& rates) const {
        std::vector<HiddenPrior> priors(data_.size());
        for (std::size_t q = 0; q < data_.size(); ++q) {
            if (!free_[q]) continue;
            const double tau = pool_exposure(rates, data_.records[q].gates).value();
            if (tau <= 0.0) {
                throw DegenerateDistribution("pool exposure is zero for a record with gates >= 1; "
                                             "its hidden angle is a point mass at 0",
                                             0.0);
            }
            priors[q] = HiddenPrior(tau, cfg_.series);
        }
        return priors;
    }

    PosteriorSample snapshot(std::int64_t it) const {
        const double ll = total(ll_);
        return {it, rates_, thetas_, ll, ll + total(lp_)};
    }

    bool rate_update(KeyedStream& rng, bool transport) {
        const std::vector<double> current = log_rates_of(rates_, dims_);
        std::vector<double> z(dims_);
        for (double& v : z) v = rng.normal();
        const double scale = transport ? transport_scale_ : plain_scale_;
        std::vector<double> proposed = current;
        for (std::size_t i = 0; i < dims_; ++i) {
            for (std::size_t j = 0; j <= i; ++j) proposed[i] += scale * chol_[i][j] * z[j];
        }
        DiffusionRates next = rates_of(proposed);
        if (!std::isfinite(next.d_ini + next.d_n + next.d_q) || next.d_ini <= 0.0 || next.d_n <= 0.0) return false;
        if (!cfg_.single_level && next.d_q <= 0.0) return false;

        double log_jacobian = 0.0;
        for (std::size_t j = 0; j < dims_; ++j) log_jacobian += proposed[j] - current[j];

        std::vector<double> thetas = thetas_;
        if (transport) {
            for (std::size_t q = 0; q < data_.size(); ++q) {
                if (!free_[q]) continue;
                const GateCount g = data_.records[q].gates;
                const double ratio = reduced_length(rates_, g) / reduced_length(next, g);
                const double c = ratio * std::cos(thetas_[q]);
                if (!(std::abs(c) < 1.0)) return false;
                thetas[q] = std::acos(c);
                const double s_new = std::sin(thetas[q]);
                const double s_old = std::sin(thetas_[q]);
                if (!(s_new > 0.0 && s_old > 0.0)) return false;
                log_jacobian += std::log(ratio) + std::log(s_old) - std::log(s_new);
            }
        }

        std::vector<HiddenPrior> priors = make_priors(next);
        std::vector<double> ll(data_.size());
        std::vector<double> lp(data_.size());
        for (std::size_t q = 0; q < data_.size(); ++q) {
            ll[q] = record_log_likelihood(data_.records[q], log_c_[q], next, thetas[q]);
            lp[q] = priors[q].log_density(thetas[q]);
        }
        const double proposed_post = total(ll) + total(lp);
        if (!std::isfinite(proposed_post)) return false;
        const double log_alpha = proposed_post - (total(ll_) + total(lp_)) + log_jacobian;
        if (log_alpha >= 0.0 || std::log(rng.uniform()) < log_alpha) {
            rates_ = next;
            thetas_ = std::move(thetas);
            priors_ = std::move(priors);
            ll_ = std::move(ll);
            lp_ = std::move(lp);
            return true;
        }
        return false;
    }

    bool theta_update(std::size_t q, KeyedStream& rng) {
        const double proposed = reflect(thetas_[q] + theta_scale_[q] * rng.normal());
        const double lp = priors_[q].log_density(proposed);
        if (!std::isfinite(lp)) return false;
        const double ll = record_log_likelihood(data_.records[q], log_c_[q], rates_, proposed);
        if (!std::isfinite(ll)) return false;
        const double log_alpha = ll + lp - ll_[q] - lp_[q];
        if (log_alpha >= 0.0 || std::log(rng.uniform()) < log_alpha) {
            thetas_[q] = proposed;
            ll_[q] = ll;
            lp_[q] = lp;
            return true;
        }
        return false;
    }

    void adapt(std::int64_t it) {
        const double batch = static_cast<double>((it + 1) / kAdaptBatch);
        const double gain = std::min(1.0, 5.0 / std::sqrt(batch));
        auto tune = [gain](double& scale, std::array<std::int64_t, 2>& stats) {
            if (stats[0] == 0) return;
            const double rate = static_cast<double>(stats[1]) / static_cast<double>(stats[0]);
            scale *= std::exp(gain * (rate - kAcceptTarget));
            stats = {0, 0};
        };
        tune(plain_scale_, plain_batch_);
        tune(transport_scale_, transport_batch_);
        for (std::size_t q = 0; q < data_.size(); ++q) {
            if (!free_[q] || theta_tries_[q] == 0) continue;
            const double rate = static_cast<double>(theta_accepts_[q]) / static_cast<double>(theta_tries_[q]);
            theta_scale_[q] = std::clamp(theta_scale_[q] * std::exp(gain * (rate - kAcceptTarget)), 1e-8, kPi);
            theta_tries_[q] = 0;
            theta_accepts_[q] = 0;
        }
    }

    void learn_covariance(const std::vector<std::vector<double>>& trace, std::size_t from) {
        if (trace.size() < from + 2 * dims_ + 10) return;
        std::vector<double> mean(dims_, 0.0);
        const double count = static_cast<double>(trace.size() - from);
        for (std::size_t t = from; t < trace.size(); ++t) {
            for (std::size_t j = 0; j < dims_; ++j) mean[j] += trace[t][j] / count;
        }
        std::vector<std::vector<double>> cov(dims_, std::vector<double>(dims_, 0.0));
        for (std::size_t t = from; t < trace.size(); ++t) {
            for (std::size_t i = 0; i < dims_; ++i) {
                for (std::size_t j = 0; j < dims_; ++j) {
                    cov[i][j] += (trace[t][i] - mean[i]) * (trace[t][j] - mean[j]) / (count - 1.0);
                }
            }
        }
        const double optimal = 2.38 * 2.38 / static_cast<double>(dims_);
        for (std::size_t i = 0; i < dims_; ++i) {
            for (std::size_t j = 0; j < dims_; ++j) cov[i][j] *= optimal;
            cov[i][i] += 1e-12;
        }
        if (auto l = cholesky(cov)) {
            cov_ = std::move(cov);
            chol_ = std::move(*l);
            plain_scale_ = 1.0;
            transport_scale_ = 1.0;
        }
    }

    const PoolDataset& data_;
    const ChainConfig& cfg_;
    std::size_t dims_ = 3;
    bool sample_rates_ = true;
    std::vector<double> log_c_;
    std::vector<bool> free_;

    DiffusionRates rates_;
    std::vector<double> thetas_;
    std::vector<HiddenPrior> priors_;
    std::vector<double> ll_;
    std::vector<double> lp_;

    std::vector<std::vector<double>> cov_;
    std::vector<std::vector<double>> chol_;
    double plain_scale_ = 1.0;
    double transport_scale_ = 1.0;
    std::array<std::int64_t, 2> plain_batch_{0, 0};
    std::array<std::int64_t, 2> transport_batch_{0, 0};
    std::vector<double> theta_scale_;
    std::vector<std::int64_t> theta_tries_;
    std::vector<std::int64_t> theta_accepts_;
    std::vector<std::int64_t> theta_stall_;
};

// Per-record joint objective ll(theta) + log prior(theta) and its maximizer.
struct RecordPeak {
    double theta = 0.0;
    double value = kNegInf;
};

RecordPeak maximize_record(const ShotRecord& r, double log_c, const DiffusionRates& rates, const HiddenPrior& prior,
                           std::optional<double> hint = std::nullopt) {
    if (prior.pinned()) return {0.0, record_log_likelihood(r, log_c, rates, 0.0)};
    auto objective = [&](double theta) {
        const double v = record_log_likelihood(r, log_c, rates, theta) + prior.log_density(theta);
        return std::isfinite(v) ? v : kNegInf;
    };
    const double radius = reduced_length(rates, r.gates);
    const double data_theta = std::acos(std::clamp((2.0 * r.frequency() - 1.0) / radius, -1.0, 1.0));
    const double hi = std::min(kPi, std::max(12.0 * std::sqrt(prior.exposure()), 1.5 * data_theta + 0.05));
    const auto [theta, neg] = boost::math::tools::brent_find_minima(
        [&](double t) {
            const double v = objective(t);
            return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
        },
        0.0, hi, 40);
    RecordPeak best{theta, objective(theta)};
    for (double candidate : {data_theta, hint.value_or(data_theta)}) {
        const double v = objective(candidate);
        if (v > best.value) best = {candidate, v};
    }
    return best;
}

// The integrand peaks at 1, so an absolute target keeps tail segments from refining on noise.
template <typename F>
double integrate_abs(const F& f, double a, double b, double abs_tol, int depth) {
    double err = 0.0;
    const double est = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0, &err);
    if (err <= abs_tol || depth == 0) return est;
    const double mid = 0.5 * (a + b);
    return integrate_abs(f, a, mid, 0.5 * abs_tol, depth - 1) + integrate_abs(f, mid, b, 0.5 * abs_tol, depth - 1);
}

double record_marginal(const ShotRecord& r, double log_c, const DiffusionRates& rates, const HiddenPrior& prior) {
    if (prior.pinned()) return record_log_likelihood(r, log_c, rates, 0.0);
    const RecordPeak peak = maximize_record(r, log_c, rates, prior);
    if (!std::isfinite(peak.value)) return kNegInf;
    auto integrand = [&](double theta) {
        const double v = record_log_likelihood(r, log_c, rates, theta) + prior.log_density(theta);
        return std::isfinite(v) ? std::exp(v - peak.value) : 0.0;
    };
    // breakpoints around the peak at the narrower of the prior and likelihood widths
    const double f = r.frequency();
    const double sd_p = std::sqrt((f * (1.0 - f) + 1.0 / static_cast<double>(r.shots)) / static_cast<double>(r.shots));
    const double radius = reduced_length(rates, r.gates);
    const double sd_theta_lik = 2.0 * sd_p / (radius * std::max(std::sin(peak.theta), 1e-3));
    const double width = std::max(1e-9, std::min(std::sqrt(prior.exposure()), sd_theta_lik));
    std::vector<double> cuts{0.0, kPi};
    for (double k : {0.0, 1.0, 3.0, 10.0, 30.0, 100.0}) {
        for (double sign : {-1.0, 1.0}) {
            const double c = peak.theta + sign * k * width;
            if (c > 0.0 && c < kPi) cuts.push_back(c);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        integral += integrate_abs(integrand, cuts[i], cuts[i + 1], 1e-9 * width, 12);
    }
    if (!(integral > 0.0)) return kNegInf;
    return peak.value + std::log(integral);
}

// Coordinate ascent over log-rates, one Brent line search per coordinate.
template <typename Objective>
double coordinate_ascent(Objective&& objective, std::vector<double>& x, int sweeps = 25) {
    double best = objective(x);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        const double start = best;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double half_width = sweep == 0 ? 1.0 : 0.25;
            auto line = [&](double v) {
                std::vector<double> y = x;
                y[j] = v;
                const double f = objective(y);
                return std::isfinite(f) ? -f : std::numeric_limits<double>::max();
            };
            const auto [v, neg] =
                boost::math::tools::brent_find_minima(line, x[j] - half_width, x[j] + half_width, 30);
            if (-neg > best) {
                best = -neg;
                x[j] = v;
            }
        }
        if (best - start < 1e-8) break;
    }
    return best;
}

std::vector<HiddenPrior> priors_for(const PoolDataset& data, const DiffusionRates& rates, const SeriesConfig& cfg,
                                    bool single_level) {
    std::vector<HiddenPrior> priors(data.size());
    if (single_level) return priors;
    for (std::size_t q = 0; q < data.size(); ++q) {
        if (data.records[q].gates == 0) continue;
        const double tau = pool_exposure(rates, data.records[q].gates).value();
        if (tau <= 0.0) return std::vector<HiddenPrior>(data.size());
        priors[q] = HiddenPrior(tau, cfg);
    }
    return priors;
}

double profile_log_post(const PoolDataset& data, const std::vector<double>& log_c, const DiffusionRates& rates,
                        const SeriesConfig& cfg, const std::vector<double>& hints) {
    const auto priors = priors_for(data, rates, cfg, false);
    double sum = 0.0;
    for (std::size_t q = 0; q < data.size(); ++q) {
        sum += maximize_record(data.records[q], log_c[q], rates, priors[q], hints[q]).value;
    }
    return sum;
}

}  // namespace

void ChainConfig::validate() const {
    if (thin < 1) throw DomainError("thin must be >= 1");
    if (burn_in < 0) throw DomainError("burn_in must be >= 0");
    if (total_iterations < 0) throw DomainError("total_iterations must be >= 0");
    if (!(rate_step > 0.0) || !(theta_step > 0.0)) throw DomainError("proposal scales must be positive");
    if (stall_window < 1) throw DomainError("stall_window must be >= 1");
    series.validate();
}

double log_likelihood(const PoolDataset& data, const DiffusionRates& rates, const std::vector<double>& thetas) {
    if (thetas.size() != data.size()) {
        throw DomainError("expected " + std::to_string(data.size()) + " hidden angles, got " +
                          std::to_string(thetas.size()));
    }
    rates.validate();
    CompensatedSum sum;
    for (std::size_t q = 0; q < data.size(); ++q) {
        const ShotRecord& r = data.records[q];
        const double v = record_log_likelihood(r, log_choose(r.shots, r.zeros), rates, Colatitude(thetas[q]).value());
        if (!std::isfinite(v)) return kNegInf;
        sum.add(v);
    }
    return sum.value();
}

double log_hidden_prior(const std::vector<double>& thetas, const DiffusionRates& rates, const PoolDataset& data,
                        const SeriesConfig& cfg) {
    if (thetas.size() != data.size()) throw DomainError("hidden angle count does not match the record count");
    rates.validate();
    CompensatedSum sum;
    for (std::size_t q = 0; q < data.size(); ++q) {
        const double theta = Colatitude(thetas[q]).value();
        const GateCount g = data.records[q].gates;
        if (g == 0) {
            if (theta != 0.0) return kNegInf;
            continue;
        }
        const double tau = pool_exposure(rates, g).value();
        if (tau <= 0.0) {
            throw DegenerateDistribution("pool exposure d_q * g is zero; handle the hidden angle as a point mass at 0",
                                         0.0);
        }
        const double v = HiddenPrior(tau, cfg).log_density(theta);
        if (!std::isfinite(v)) return kNegInf;
        sum.add(v);
    }
    return sum.value();
}

Chain run_mcmc(const PoolDataset& data, const ChainConfig& cfg) {
    cfg.validate();
    data.validate();
    if (data.size() < 1) throw DataError("MCMC needs at least one record");
    Sampler sampler(data, cfg);
    return sampler.run();
}

RateSummary summarize(std::vector<double> values) {
    RateSummary s;
    if (values.empty()) return s;
    CompensatedSum sum;
    for (double v : values) sum.add(v);
    const double n = static_cast<double>(values.size());
    s.mean = sum.value() / n;
    CompensatedSum sq;
    for (double v : values) sq.add((v - s.mean) * (v - s.mean));
    s.sd = values.size() > 1 ? std::sqrt(sq.value() / (n - 1.0)) : 0.0;
    std::sort(values.begin(), values.end());
    auto quantile = [&](double level) {
        const double pos = level * (n - 1.0);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        if (i + 1 >= values.size()) return values.back();
        return values[i] + (pos - static_cast<double>(i)) * (values[i + 1] - values[i]);
    };
    s.p05 = quantile(0.05);
    s.p50 = quantile(0.5);
    s.p95 = quantile(0.95);
    return s;
}

double marginal_log_likelihood(const PoolDataset& data, const DiffusionRates& rates, const SeriesConfig& cfg) {
    rates.validate();
    const bool single = rates.d_q <= 0.0;
    const auto priors = priors_for(data, rates, cfg, single);
    CompensatedSum sum;
    for (std::size_t q = 0; q < data.size(); ++q) {
        const ShotRecord& r = data.records[q];
        const double v = record_marginal(r, log_choose(r.shots, r.zeros), rates, priors[q]);
        if (!std::isfinite(v)) return kNegInf;
        sum.add(v);
    }
    return sum.value();
}

Fit fit(const PoolDataset& data, const ChainConfig& cfg) {
    data.validate();
    if (data.size() < 3) throw DataError("a fit needs at least 3 records; the flat-prior posterior may be improper");
    ChainConfig full_cfg = cfg;
    full_cfg.single_level = false;
    full_cfg.fixed_rates.reset();
    ChainConfig single_cfg = full_cfg;
    single_cfg.single_level = true;
    single_cfg.seed = KeyedStream(cfg.seed, {tag(StreamTag::kMcmcRates), 1})();
    if (single_cfg.initial_rates) single_cfg.initial_rates->d_q = 0.0;

    Fit out;
    out.chain = run_mcmc(data, full_cfg);
    out.single_level_chain = run_mcmc(data, single_cfg);
    const Chain& chain = out.chain;
    FitReport& rep = out.report;

    std::vector<double> d_ini, d_n, d_q;
    for (const auto& s : chain.samples) {
        d_ini.push_back(s.rates.d_ini);
        d_n.push_back(s.rates.d_n);
        d_q.push_back(s.rates.d_q);
    }
    rep.d_ini = summarize(d_ini);
    rep.d_n = summarize(d_n);
    rep.d_q = summarize(d_q);
    rep.n_samples = chain.samples.size();
    rep.n_records = data.size();
    rep.rate_acceptance = chain.rate_acceptance;
    rep.theta_acceptance = chain.theta_acceptance;
    rep.max_joint_loglik_two_level = chain.best_likelihood.log_likelihood;

    std::vector<double> log_c(data.size());
    for (std::size_t q = 0; q < data.size(); ++q) {
        log_c[q] = log_choose(data.records[q].shots, data.records[q].zeros);
    }

    // MAP: best visited state, then coordinate ascent with the angles re-optimized.
    const PosteriorSample& best = chain.best_posterior;
    std::vector<double> x = log_rates_of(best.rates, 3);
    auto profile = [&](const std::vector<double>& y) {
        return profile_log_post(data, log_c, rates_of(y), cfg.series, best.hidden_thetas);
    };
    const double refined = coordinate_ascent(profile, x);
    if (refined > best.log_post) {
        rep.map_rates = rates_of(x);
        rep.map_log_post = refined;
    } else {
        rep.map_rates = best.rates;
        rep.map_log_post = best.log_post;
    }

    // Single-level maximum likelihood: d_q = 0, every angle at 0.
    const std::vector<double> zeros(data.size(), 0.0);
    std::vector<double> xs = log_rates_of(out.single_level_chain.best_likelihood.rates, 2);
    auto single_objective = [&](const std::vector<double>& y) { return log_likelihood(data, rates_of(y), zeros); };
    const double single_max =
        std::max(coordinate_ascent(single_objective, xs), out.single_level_chain.best_likelihood.log_likelihood);
    rep.single_level_rates =
        single_objective(xs) >= out.single_level_chain.best_likelihood.log_likelihood
            ? rates_of(xs)
            : out.single_level_chain.best_likelihood.rates;
    rep.max_loglik_single_level = single_max;

    // Two-level maximum of the angle-marginalized likelihood. The single-level
    // model is its d_q -> 0 limit, so that value bounds it from below.
    DiffusionRates start{rep.d_ini.mean, rep.d_n.mean, rep.d_q.mean};
    if (rep.n_samples == 0) start = rep.map_rates;
    std::vector<double> xm = log_rates_of(start, 3);
    auto marginal = [&](const std::vector<double>& y) { return marginal_log_likelihood(data, rates_of(y), cfg.series); };
    const double two_max = coordinate_ascent(marginal, xm);
    rep.max_loglik_two_level = std::max(two_max, single_max);
    rep.log_likelihood_ratio = rep.max_loglik_two_level - rep.max_loglik_single_level;
    return out;
}

}  // namespace blochwalk
