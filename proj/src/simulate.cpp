#include "blochwalk/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>

#include "blochwalk/errors.hpp"
#include "blochwalk/random.hpp"

namespace blochwalk {

void SimConfig::validate() const {
    rates.validate();
    if (n_shots < 1) throw DomainError("n_shots must be >= 1");
    if (m_pools < 1) throw DomainError("m_pools must be >= 1");
    if (gates.empty()) throw DomainError("at least one gate count is required");
}

std::vector<FrequencyDraw> simulate_distributional(const SimConfig& cfg, const SeriesConfig& series) {
    cfg.validate();
    if (cfg.mode != SimMode::kDistributional) throw DomainError("simulate_distributional needs distributional mode");
    const auto pools = static_cast<std::uint64_t>(cfg.m_pools);
    std::vector<std::optional<ThetaSampler>> samplers;
    samplers.reserve(cfg.gates.size());
    for (GateCount g : cfg.gates) {
        const double tau_q = pool_exposure(cfg.rates, g).value();
        if (tau_q <= kDegenerateThreshold) {
            samplers.emplace_back(std::nullopt);
        } else {
            samplers.emplace_back(ThetaSampler(DiffusionExposure(tau_q), series));
        }
    }

    std::vector<FrequencyDraw> out;
    out.reserve(pools * cfg.gates.size());
    for (std::uint64_t q = 0; q < pools; ++q) {
        for (std::size_t gi = 0; gi < cfg.gates.size(); ++gi) {
            const GateCount g = cfg.gates[gi];
            double theta = 0.0;
            if (samplers[gi]) {
                KeyedStream rng(cfg.seed, {tag(StreamTag::kThetaDraw), q, gi});
                theta = samplers[gi]->draw(rng).value();
            }
            const Probability p = pool_prob(Colatitude(theta), cfg.rates, g);
            KeyedStream readout(cfg.seed, {tag(StreamTag::kBinomialReadout), q, gi});
            const std::int64_t zeros = binomial_draw(readout, cfg.n_shots, p.value());
            out.push_back({q, g, cfg.n_shots, zeros,
                           Probability(static_cast<double>(zeros) / static_cast<double>(cfg.n_shots)), p,
                           Colatitude(theta)});
        }
    }
    return out;
}

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

Vec3 rotate(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

void normalize(Vec3& v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    for (double& c : v) c /= n;
}

// Rodrigues rotation matrix for rotation vector w.
Mat3 rotation(const Vec3& w) {
    const double angle = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    Mat3 m{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
    if (angle == 0.0) return m;
    const Vec3 k{w[0] / angle, w[1] / angle, w[2] / angle};
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double t = 1.0 - c;
    m[0] = {c + t * k[0] * k[0], t * k[0] * k[1] - s * k[2], t * k[0] * k[2] + s * k[1]};
    m[1] = {t * k[1] * k[0] + s * k[2], c + t * k[1] * k[1], t * k[1] * k[2] - s * k[0]};
    m[2] = {t * k[2] * k[0] - s * k[1], t * k[2] * k[1] + s * k[0], c + t * k[2] * k[2]};
    return m;
}

// Geodesic step with an isotropic Gaussian tangent displacement of standard
// deviation sigma per tangent axis.
void diffuse(Vec3& v, double sigma, KeyedStream& rng) {
    const Vec3 helper = std::abs(v[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
    const double proj = helper[0] * v[0] + helper[1] * v[1] + helper[2] * v[2];
    Vec3 e1{helper[0] - proj * v[0], helper[1] - proj * v[1], helper[2] - proj * v[2]};
    normalize(e1);
    const Vec3 e2{v[1] * e1[2] - v[2] * e1[1], v[2] * e1[0] - v[0] * e1[2], v[0] * e1[1] - v[1] * e1[0]};
    const double a = sigma * rng.normal();
    const double b = sigma * rng.normal();
    const double len = std::hypot(a, b);
    if (len == 0.0) return;
    const double c = std::cos(len);
    const double s = std::sin(len) / len;
    for (int j = 0; j < 3; ++j) v[j] = c * v[j] + s * (a * e1[j] + b * e2[j]);
    normalize(v);
}

void warn_large_rates(const DiffusionRates& rates) {
    for (const auto& [name, d] : {std::pair{"d_ini", rates.d_ini}, {"d_n", rates.d_n}, {"d_q", rates.d_q}}) {
        if (d > kStepwiseRateLimit) {
            std::clog << "warning: " << name << " = " << d << " exceeds " << kStepwiseRateLimit
                      << " rad^2/step; single-step walker moves lose accuracy\n";
        }
    }
}

std::vector<RunTrajectory> run_walkers(const SimConfig& cfg, const CoherentErrorConfig& coherent) {
    cfg.validate();
    if (!(coherent.affected_fraction >= 0.0 && coherent.affected_fraction <= 1.0)) {
        throw DomainError("coherent affected_fraction must lie in [0, 1]");
    }
    if (!std::isfinite(coherent.over_rotation)) throw DomainError("over_rotation must be finite");
    warn_large_rates(cfg.rates);

    std::vector<GateCount> gates = cfg.gates;
    std::sort(gates.begin(), gates.end());
    gates.erase(std::unique(gates.begin(), gates.end()), gates.end());
    const GateCount last = gates.back();

    const auto n = static_cast<std::size_t>(cfg.n_shots);
    const auto affected =
        static_cast<std::size_t>(std::llround(coherent.affected_fraction * static_cast<double>(n)));
    const double sigma_ini = std::sqrt(2.0 * cfg.rates.d_ini);
    const double sigma_n = std::sqrt(2.0 * cfg.rates.d_n);
    const double sigma_q = std::sqrt(2.0 * cfg.rates.d_q);
    const Mat3 over = rotation({coherent.over_rotation, 0.0, 0.0});

    std::vector<RunTrajectory> runs;
    runs.reserve(static_cast<std::size_t>(cfg.m_pools));
    std::vector<Vec3> walkers(n);
    std::vector<KeyedStream> step_streams;
    std::vector<KeyedStream> readout_streams;
    step_streams.reserve(n);
    readout_streams.reserve(n);

    for (std::uint64_t q = 0; q < static_cast<std::uint64_t>(cfg.m_pools); ++q) {
        step_streams.clear();
        readout_streams.clear();
        for (std::uint64_t i = 0; i < n; ++i) {
            step_streams.emplace_back(cfg.seed, std::initializer_list<std::uint64_t>{tag(StreamTag::kWalkerStep), q, i});
            readout_streams.emplace_back(cfg.seed,
                                         std::initializer_list<std::uint64_t>{tag(StreamTag::kWalkerReadout), q, i});
        }
        const KeyedStream pool_stream(cfg.seed, {tag(StreamTag::kPoolStep), q});
        std::fill(walkers.begin(), walkers.end(), Vec3{0.0, 0.0, 1.0});
        Vec3 axis{0.0, 0.0, 1.0};

        if (sigma_ini > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                KeyedStream rng = step_streams[i].block(0);
                diffuse(walkers[i], sigma_ini, rng);
            }
        }

        RunTrajectory run{q, {}};
        run.points.reserve(gates.size());
        auto next_gate = gates.begin();
        for (GateCount s = 0;; ++s) {
            if (s > 0) {
                if (coherent.over_rotation != 0.0) {
                    for (std::size_t i = 0; i < affected; ++i) walkers[i] = rotate(over, walkers[i]);
                }
                if (sigma_n > 0.0) {
                    for (std::size_t i = 0; i < n; ++i) {
                        KeyedStream rng = step_streams[i].block(s);
                        diffuse(walkers[i], sigma_n, rng);
                    }
                }
                if (sigma_q > 0.0) {
                    KeyedStream rng = pool_stream.block(s);
                    const Vec3 w{sigma_q * rng.normal(), sigma_q * rng.normal(), sigma_q * rng.normal()};
                    const Mat3 shared = rotation(w);
                    for (auto& v : walkers) v = rotate(shared, v);
                    axis = rotate(shared, axis);
                    normalize(axis);
                }
            }
            if (s == *next_gate) {
                std::int64_t zeros = 0;
                double mean_p = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double p = std::clamp(0.5 * (1.0 + walkers[i][2]), 0.0, 1.0);
                    mean_p += p;
                    KeyedStream rng = readout_streams[i].block(s);
                    if (rng.uniform() < p) ++zeros;
                }
                mean_p /= static_cast<double>(n);
                run.points.push_back({q, s, cfg.n_shots, zeros,
                                      Probability(static_cast<double>(zeros) / static_cast<double>(n)),
                                      Probability(std::clamp(mean_p, 0.0, 1.0)),
                                      Colatitude(std::acos(std::clamp(axis[2], -1.0, 1.0)))});
                ++next_gate;
            }
            if (s == last) break;
        }
        runs.push_back(std::move(run));
    }
    return runs;
}

}  // namespace

std::vector<FrequencyDraw> simulate_stepwise(const SimConfig& cfg) {
    if (cfg.mode != SimMode::kStepwise) throw DomainError("simulate_stepwise needs stepwise mode");
    std::vector<FrequencyDraw> out;
    for (auto& run : run_walkers(cfg, {})) {
        for (auto& point : run.points) out.push_back(point);
    }
    return out;
}

std::vector<RunTrajectory> resample_runs(const SimConfig& cfg, const CoherentErrorConfig& coherent) {
    if (cfg.mode != SimMode::kStepwise) throw DomainError("resample_runs needs stepwise mode");
    return run_walkers(cfg, coherent);
}

DiffusionExposure rescale_time_nonmarkovian(double rate, double t, double dt, double kappa) {
    if (!(kappa >= 0.0 && kappa <= 2.0)) {
        throw DomainError("kappa must lie in [0, 2], got " + std::to_string(kappa));
    }
    if (!(dt > 0.0)) throw DomainError("reference step dt must be positive");
    if (!(t >= 0.0)) throw DomainError("time must be non-negative");
    return DiffusionExposure(rate * dt * std::pow(t / dt, 1.0 + kappa));
}

}  // namespace blochwalk
