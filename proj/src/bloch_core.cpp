#include "blochwalk/bloch_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "blochwalk/errors.hpp"

namespace blochwalk {

namespace {
constexpr double kClampSlack = 1e-12;
}

Colatitude::Colatitude(double theta) : theta_(theta) {
    if (!(theta >= 0.0 && theta <= kPi)) {
        throw DomainError("colatitude outside [0, pi]: " + std::to_string(theta));
    }
}

Probability::Probability(double p) : p_(p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("probability outside [0, 1]: " + std::to_string(p));
    }
}

Probability prob_from_colatitude(Colatitude theta) {
    const double p = 0.5 + 0.5 * std::cos(theta.value());
    return Probability(std::clamp(p, 0.0, 1.0));
}

Colatitude colatitude_from_prob(Probability p) {
    return Colatitude(std::acos(std::clamp(2.0 * p.value() - 1.0, -1.0, 1.0)));
}

double jacobian_dtheta_dp(Probability p) {
    const double v = p.value();
    if (v <= 0.0 || v >= 1.0) {
        throw SingularityError("jacobian d theta / dP is singular at P = " + std::to_string(v));
    }
    return -1.0 / std::sqrt(v - v * v);
}

double clamp_unit_interval(double x) {
    if (std::isnan(x) || std::abs(x) > 1.0 + kClampSlack) {
        throw DomainError("legendre argument outside [-1, 1]: " + std::to_string(x));
    }
    return std::clamp(x, -1.0, 1.0);
}

double legendre(int k, double x) {
    if (k < 0) throw DomainError("negative Legendre order");
    x = clamp_unit_interval(x);
    LegendreRecurrence rec(x);
    while (rec.order() < k) rec.advance();
    return rec.value();
}

double shifted_legendre(int k, double x) {
    if (std::isnan(x) || x < -kClampSlack || x > 1.0 + kClampSlack) {
        throw DomainError("shifted Legendre argument outside [0, 1]: " + std::to_string(x));
    }
    return legendre(k, std::clamp(2.0 * x - 1.0, -1.0, 1.0));
}

}  // namespace blochwalk
