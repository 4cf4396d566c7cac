#include <doctest.h>

#include <cmath>
#include <vector>

#include "blochwalk/errors.hpp"
#include "blochwalk/inference.hpp"
#include "blochwalk/simulate.hpp"
#include "stats.hpp"

using namespace blochwalk;

namespace {

PoolDataset synthetic(const DiffusionRates& rates, const std::vector<GateCount>& gates, std::int64_t shots,
                      std::uint64_t seed) {
    SimConfig cfg;
    cfg.rates = rates;
    cfg.gates = gates;
    cfg.n_shots = shots;
    cfg.seed = seed;
    PoolDataset data;
    for (const FrequencyDraw& d : simulate_distributional(cfg)) data.records.push_back({d.gate_count, d.shots, d.zeros, {}});
    return data;
}

double log_binomial(std::int64_t n, std::int64_t k, double p) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("log likelihood examples") {
    PoolDataset one{{{0, 10, 10, {}}}};
    CHECK(log_likelihood(one, {}, {0.0}) == 0.0);
    PoolDataset half{{{5, 2, 1, {}}}};
    CHECK(log_likelihood(half, {0.0, 0.0, 0.0}, {kPi / 2}) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(std::isinf(log_likelihood(PoolDataset{{{0, 10, 9, {}}}}, {}, {0.0})));
    CHECK_THROWS_AS(log_likelihood(one, {}, {0.0, 0.1}), DomainError);
}

TEST_CASE("log likelihood is additive over records") {
    const DiffusionRates r{0.02, 5e-4, 3e-4};
    PoolDataset data{{{4, 100, 97, {}}, {40, 100, 90, {}}, {400, 100, 61, {}}}};
    const std::vector<double> th{0.1, 0.3, 0.9};
    double sum = 0.0;
    for (std::size_t q = 0; q < 3; ++q) {
        const auto& rec = data.records[q];
        sum += log_binomial(rec.shots, rec.zeros, pool_prob(Colatitude(th[q]), r, rec.gates).value());
    }
    CHECK(log_likelihood(data, r, th) == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("hidden prior") {
    const PoolDataset data{{{0, 10, 10, {}}, {1000, 10, 5, {}}}};
    const DiffusionRates wide{0.0, 0.0, 0.05};
    // d_q g = 50: the prior is the Sine density
    CHECK(log_hidden_prior({0.0, 1.2}, wide, data) == doctest::Approx(std::log(std::sin(1.2) / 2)).epsilon(1e-12));
    CHECK(std::isinf(log_hidden_prior({0.1, 1.2}, wide, data)));
    const double peak = log_hidden_prior({0.0, std::sqrt(2 * 0.3)}, {0.0, 0.0, 3e-4}, data);
    CHECK(std::isfinite(peak));
    CHECK_THROWS_AS(log_hidden_prior({0.0, 1.0}, {0.0, 1e-3, 0.0}, data), DegenerateDistribution);
    CHECK_THROWS_AS(log_hidden_prior({0.0, 4.0}, wide, data), DomainError);
}

TEST_CASE("chain length, determinism and configuration errors") {
    const PoolDataset data = synthetic({0.02, 5e-4, 3e-4}, {4, 100, 400, 1000, 2000}, 2000, 1);
    ChainConfig cfg;
    cfg.total_iterations = 2000;
    cfg.burn_in = 500;
    cfg.thin = 20;
    cfg.seed = 8;
    const Chain a = run_mcmc(data, cfg);
    CHECK(a.samples.size() == 100);
    CHECK(a.samples.front().iteration == 500 + 19);
    const Chain b = run_mcmc(data, cfg);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].rates.d_q == b.samples[i].rates.d_q);
        CHECK(a.samples[i].hidden_thetas == b.samples[i].hidden_thetas);
    }
    CHECK(a.rate_acceptance > 0.0);
    CHECK(a.best_posterior.log_post >= a.samples[0].log_post);
    cfg.thin = 0;
    CHECK_THROWS_AS(run_mcmc(data, cfg), DomainError);
}

TEST_CASE("stall detection") {
    PoolDataset data{{{100, 1'000'000'000, 900'000'000, {}}}};
    ChainConfig cfg;
    cfg.fixed_rates = DiffusionRates{0.0, 1e-4, 1e-3};
    cfg.total_iterations = 1000;
    cfg.burn_in = 0;
    cfg.theta_step = 1.0;
    cfg.stall_window = 30;
    CHECK_THROWS_AS(run_mcmc(data, cfg), AdaptationError);
}

TEST_CASE("fit needs three records") {
    PoolDataset data{{{4, 10, 10, {}}, {8, 10, 9, {}}}};
    CHECK_THROWS_AS(fit(data, ChainConfig{}), DataError);
}

TEST_CASE("marginal likelihood matches brute-force quadrature") {
    const DiffusionRates r{0.02, 5e-4, 3e-4};
    for (const ShotRecord& rec : {ShotRecord{400, 8192, 6000, {}}, ShotRecord{40, 8192, 7900, {}},
                                  ShotRecord{2000, 500, 260, {}}}) {
        const PoolDataset data{{rec}};
        const double tau = pool_exposure(r, rec.gates).value();
        auto integrand = [&](double t) {
            if (t <= 0.0) return 0.0;
            return std::exp(log_binomial(rec.shots, rec.zeros, pool_prob(Colatitude(t), r, rec.gates).value())) *
                   theta_pdf(Colatitude(t), DiffusionExposure(tau));
        };
        std::vector<double> breaks;
        for (int i = 1; i < 400; ++i) breaks.push_back(kPi * i / 400);
        const double oracle = std::log(testing::integrate(integrand, 0.0, kPi, breaks));
        CHECK(marginal_log_likelihood(data, r) == doctest::Approx(oracle).epsilon(1e-7));
    }
}

TEST_CASE("property: detailed balance smoke test across proposal scales") {
    PoolDataset data{{{500, 2000, 1500, {}}}};
    std::vector<double> means;
    for (double step : {0.02, 0.08}) {
        ChainConfig cfg;
        cfg.fixed_rates = DiffusionRates{0.01, 4e-4, 4e-4};
        cfg.total_iterations = 40000;
        cfg.burn_in = 0;
        cfg.thin = 1;
        cfg.theta_step = step;
        cfg.seed = 2;
        const Chain c = run_mcmc(data, cfg);
        std::vector<double> t;
        for (const auto& s : c.samples) t.push_back(s.hidden_thetas[0]);
        means.push_back(testing::mean_se(t).mean);
        // autocorrelated draws: compare against a loose batch-means error
        CHECK(c.theta_acceptance > 0.05);
    }
    CHECK(std::abs(means[0] - means[1]) < 0.02);
}

TEST_CASE("property: nested-model ordering and report consistency") {
    const PoolDataset data =
        synthetic({0.02, 5e-4, 0.0}, {4, 40, 80, 160, 240, 400, 600, 800, 1200, 1600, 2000}, 8192, 3);
    ChainConfig cfg;
    cfg.total_iterations = 3000;
    cfg.burn_in = 1000;
    cfg.thin = 10;
    cfg.seed = 4;
    const FitReport r = fit(data, cfg).report;
    CHECK(r.max_loglik_two_level >= r.max_loglik_single_level);
    CHECK(r.log_likelihood_ratio == r.max_loglik_two_level - r.max_loglik_single_level);
    CHECK(r.log_likelihood_ratio < 5.0);
    CHECK(r.n_samples == 300);
    CHECK(r.n_records == data.size());
    CHECK(r.single_level_rates.d_q == 0.0);
    CHECK(r.single_level_rates.d_n == doctest::Approx(5e-4).epsilon(0.1));
}

TEST_CASE("summaries") {
    const RateSummary s = summarize({1.0, 2.0, 3.0, 4.0, 5.0});
    CHECK(s.mean == 3.0);
    CHECK(s.p50 == 3.0);
    CHECK(s.sd == doctest::Approx(std::sqrt(2.5)));
    CHECK(s.p05 == doctest::Approx(1.2));
    CHECK(s.p95 == doctest::Approx(4.8));
}

}  // TEST_SUITE
