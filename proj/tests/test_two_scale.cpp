#include <doctest.h>

#include <cmath>
#include <vector>

#include "blochwalk/errors.hpp"
#include "blochwalk/two_scale.hpp"
#include "stats.hpp"

using namespace blochwalk;

namespace {

const DiffusionRates kReference{0.0218, 4.9764e-4, 3.2418e-4};
const DiffusionRates kCenter{0.0, 5e-4, 3e-4};

}  // namespace

TEST_SUITE("two_scale") {

TEST_CASE("exposures") {
    CHECK(binomial_exposure({0, 1e-3, 0}, 4).value() == doctest::Approx(4e-3).epsilon(1e-15));
    CHECK(binomial_exposure(kReference, 0).value() == 0.0218);
    CHECK(binomial_exposure({}, 1000).value() == 0.0);
    CHECK(pool_exposure(kReference, 0).value() == 0.0);
    CHECK(pool_exposure(kReference, 10).value() == doctest::Approx(3.2418e-3).epsilon(1e-15));
    CHECK_THROWS_AS((DiffusionRates{-1e-3, 0, 0}.validate()), DomainError);
}

TEST_CASE("reduced length") {
    CHECK(reduced_length({}, 7) == 1.0);
    DiffusionRates r{0.49764, 0.0, 0.0};
    CHECK(reduced_length(r, 0) == doctest::Approx(0.36961993647139307).epsilon(1e-14));
    for (GateCount g : {0u, 10u, 1000u}) {
        CHECK(0.5 + reduced_length(kReference, g) / 2 ==
              doctest::Approx(mean_prob(binomial_exposure(kReference, g)).value()).epsilon(1e-15));
    }
}

TEST_CASE("pool probability at special angles") {
    for (GateCount g : {0u, 50u, 2000u}) {
        const Bounds b = bounds(kReference, g);
        CHECK(pool_prob(Colatitude(kPi / 2), kReference, g).value() == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(pool_prob(Colatitude(0.0), kReference, g).value() == doctest::Approx(b.upper.value()).epsilon(1e-15));
        CHECK(pool_prob(Colatitude(kPi), kReference, g).value() == doctest::Approx(b.lower.value()).epsilon(1e-15));
    }
}

TEST_CASE("complement is accurate near P = 1") {
    const DiffusionRates tiny{1e-12, 1e-13, 0};
    const double q = pool_prob_complement(1e-7, tiny, 3);
    const double expected = 0.5 * (-std::expm1(-2 * (1e-12 + 3e-13))) +
                            std::exp(-2 * (1e-12 + 3e-13)) * std::pow(std::sin(0.5e-7), 2);
    CHECK(q == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bounds") {
    const Bounds b0 = bounds({0, 5e-4, 3e-4}, 0);
    CHECK(b0.lower.value() == 0.0);
    CHECK(b0.upper.value() == 1.0);
    CHECK(bounds(kReference, 0).upper.value() == doctest::Approx(0.97866840781128051).epsilon(1e-14));
    const Bounds far = bounds(kReference, 200000);
    CHECK(far.lower.value() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(far.upper.value() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("pool mean") {
    const DiffusionRates no_pool{0.01, 5e-4, 0.0};
    for (GateCount g : {0u, 10u, 500u}) {
        CHECK(pool_mean(no_pool, g).value() == doctest::Approx(bounds(no_pool, g).upper.value()).epsilon(1e-15));
    }
    for (GateCount g = 0; g <= 20000; g += 50) {
        const Bounds b = bounds(kCenter, g);
        const double m = pool_mean(kCenter, g).value();
        REQUIRE(m >= b.lower.value());
        REQUIRE(m <= b.upper.value());
    }
    CHECK(pool_mean(kCenter, 100000).value() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("overdispersion variance") {
    CHECK(overdispersion_variance(kCenter, 0) == 0.0);
    CHECK(overdispersion_variance(kCenter, 1000000) == doctest::Approx(1.0 / 12).epsilon(1e-12));
    const double r = reduced_length(kCenter, 1000);
    CHECK(contracted_overdispersion_variance(kCenter, 1000) ==
          doctest::Approx(r * r * overdispersion_variance(kCenter, 1000)).epsilon(1e-15));
}

TEST_CASE("contracted variance matches sampled pool probabilities") {
    const GateCount g = 1000;
    const ThetaSampler sampler(pool_exposure(kCenter, g));
    KeyedStream rng(3, {99});
    std::vector<double> p(100000);
    for (double& v : p) v = pool_prob(sampler.draw(rng), kCenter, g).value();
    // standard error of a sample variance from the sample fourth central moment
    const auto s = testing::mean_se(p);
    double m4 = 0.0;
    for (double v : p) m4 += std::pow(v - s.mean, 4);
    m4 /= static_cast<double>(p.size());
    const double se_var = std::sqrt((m4 - s.variance * s.variance) / static_cast<double>(p.size()));
    CHECK(std::abs(s.variance - contracted_overdispersion_variance(kCenter, g)) < 3 * se_var);
    CHECK(std::abs(s.mean - pool_mean(kCenter, g).value()) < 3 * s.se);
}

TEST_CASE("pool pdf degeneracies") {
    CHECK_THROWS_AS(pool_pdf(Probability(0.5), {0.0, 5e-4, 0.0}, 100), DegenerateDistribution);
    try {
        pool_pdf(Probability(0.5), {0.0, 5e-4, 0.0}, 100);
    } catch (const DegenerateDistribution& e) {
        CHECK(e.location() == doctest::Approx(bounds({0.0, 5e-4, 0.0}, 100).upper.value()));
    }
    try {
        pool_pdf(Probability(0.5), {20.0, 0.0, 1e-3}, 10);
        FAIL("expected a degenerate signal");
    } catch (const DegenerateDistribution& e) {
        CHECK(e.location() == 0.5);
    }
}

TEST_CASE("pool pdf vanishes outside the bounds") {
    const Bounds b = bounds(kReference, 400);
    CHECK(pool_pdf(Probability(b.upper.value() + 1e-6), kReference, 400) == 0.0);
    CHECK(pool_pdf(Probability(b.lower.value() - 1e-6), kReference, 400) == 0.0);
    CHECK(pool_pdf(Probability(1.0), kReference, 400) == 0.0);
}

TEST_CASE("property: pool pdf normalizes over the bounds") {
    for (const DiffusionRates& r : {kReference, kCenter, DiffusionRates{0.0, 1e-3, 2e-3}}) {
        for (GateCount g : {4u, 100u, 1000u, 4000u}) {
            const Bounds b = bounds(r, g);
            const double tau = pool_exposure(r, g).value();
            std::vector<double> breaks;
            for (double k : {0.5, 1.0, 2.0, 4.0, 8.0}) {
                if (k * std::sqrt(tau) < kPi) {
                    breaks.push_back(pool_prob(Colatitude(k * std::sqrt(tau)), r, g).value());
                }
            }
            const double total = testing::integrate(
                [&](double p) { return pool_pdf(Probability(p), r, g); }, b.lower.value(), b.upper.value(), breaks);
            CHECK(total == doctest::Approx(1.0).epsilon(1e-7));
        }
    }
}

TEST_CASE("property: reduction to the single-level density") {
    const DiffusionRates r{0.0, 0.0, 4e-4};
    for (GateCount g : {10u, 300u, 2000u}) {
        for (int i = 1; i < 100; ++i) {
            const double p = i / 100.0;
            const double a = pool_pdf(Probability(p), r, g);
            const double b = prob_pdf(Probability(p), pool_exposure(r, g));
            REQUIRE(std::abs(a - b) <= 1e-9 * std::max(1.0, b));
        }
    }
}

TEST_CASE("property: containment, symmetry and monotone decay") {
    for (const DiffusionRates& r : {kReference, kCenter, DiffusionRates{0.1, 1e-2, 1e-3}}) {
        double prev_upper = 2.0;
        for (GateCount g = 0; g <= 5000; g += 37) {
            const Bounds b = bounds(r, g);
            REQUIRE(b.lower.value() == 1.0 - b.upper.value());
            REQUIRE((b.upper.value() < prev_upper || (b.upper.value() == prev_upper && b.upper.value() - 0.5 < 1e-15)));
            prev_upper = b.upper.value();
            for (int i = 0; i <= 64; ++i) {
                const double p = pool_prob(Colatitude(kPi * i / 64), r, g).value();
                REQUIRE(p >= b.lower.value());
                REQUIRE(p <= b.upper.value());
            }
        }
    }
}

TEST_CASE("property: large pool exposure gives a Sine-distributed angle") {
    const ThetaSampler sampler(pool_exposure({0, 0, 1e-2}, 1000));
    KeyedStream rng(8, {2});
    std::vector<double> t(50000);
    for (double& v : t) v = sampler.draw(rng).value();
    CHECK(testing::ks_one_sample(t, [](double x) { return std::pow(std::sin(x / 2), 2); }).p_value > 0.01);
}

TEST_CASE("band curve") {
    const std::vector<double> levels{0.05, 0.5, 0.95};
    SUBCASE("no pool walk collapses onto the upper bound") {
        const BandCurve c = band_curve({0.0, 5e-4, 0.0}, {0, 100, 1000}, levels, {}, 0);
        for (const BandPoint& b : c) {
            for (const auto& [a, v] : b.percentiles) CHECK(v.value() == doctest::Approx(b.upper.value()));
            CHECK(b.lower.value() == doctest::Approx(1.0 - b.upper.value()));
        }
    }
    SUBCASE("percentiles are ordered and bracket the mean") {
        std::vector<GateCount> gates;
        for (GateCount g = 1; g <= 20000; g += 199) gates.push_back(g);
        const BandCurve c = band_curve({0.0, 5e-4, 5e-4}, gates, levels, {}, 0);
        std::vector<double> width;
        for (const BandPoint& b : c) {
            CHECK_FALSE(b.sampled);
            CHECK(b.percentiles[0].second.value() <= b.percentiles[1].second.value());
            CHECK(b.percentiles[1].second.value() <= b.percentiles[2].second.value());
            CHECK(b.percentiles[0].second.value() <= b.pool_mean.value());
            CHECK(b.pool_mean.value() <= b.percentiles[2].second.value());
            width.push_back(b.percentiles[2].second.value() - b.percentiles[0].second.value());
        }
        const auto peak = std::max_element(width.begin(), width.end()) - width.begin();
        CHECK(peak > 0);
        CHECK(peak < static_cast<long>(width.size()) - 1);
        for (long i = 1; i <= peak; ++i) CHECK(width[i] > width[i - 1]);
        for (long i = peak + 1; i < static_cast<long>(width.size()); ++i) CHECK(width[i] < width[i - 1]);
    }
    SUBCASE("percentiles match sampling") {
        const DiffusionRates r{0.01, 5e-4, 5e-4};
        const BandCurve c = band_curve(r, {800}, levels, {}, 0);
        const ThetaSampler sampler(pool_exposure(r, 800));
        KeyedStream rng(1, {1});
        std::vector<double> p(200000);
        for (double& v : p) v = pool_prob(sampler.draw(rng), r, 800).value();
        std::sort(p.begin(), p.end());
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const double emp = p[static_cast<std::size_t>(levels[i] * p.size())];
            CHECK(c[0].percentiles[i].second.value() == doctest::Approx(emp).epsilon(2e-3));
        }
    }
    SUBCASE("sampling fallback at unconvergeable exposure") {
        SeriesConfig capped;
        capped.k_ceiling = 1000;
        const DiffusionRates r{0.0, 1e-4, 1e-9};
        const BandCurve c = band_curve(r, {100}, levels, capped, 7);
        CHECK(c[0].sampled);
        CHECK(c[0].percentiles[0].second.value() <= c[0].percentiles[2].second.value());
        CHECK(c[0].percentiles[2].second.value() <= c[0].upper.value());
        const BandCurve again = band_curve(r, {100}, levels, capped, 7);
        CHECK(again[0].percentiles[1].second.value() == c[0].percentiles[1].second.value());
    }
}

}  // TEST_SUITE
