#pragma once

#include <numbers>

namespace blochwalk {

inline constexpr double kPi = std::numbers::pi;

/// Polar angle measured from the north pole (|0>) of the Bloch sphere, in [0, pi].
class Colatitude {
public:
    /// Throws DomainError outside [0, pi]; values are never wrapped.
    explicit Colatitude(double theta);

    double value() const noexcept { return theta_; }

private:
    double theta_;
};

/// Readout probability of the zero state, in [0, 1].
class Probability {
public:
    /// Throws DomainError outside [0, 1].
    explicit Probability(double p);

    double value() const noexcept { return p_; }

private:
    double p_;
};

/// P = cos^2(theta/2) = 1/2 + cos(theta)/2.
Probability prob_from_colatitude(Colatitude theta);

/// theta = arccos(2P - 1).
Colatitude colatitude_from_prob(Probability p);

/// d theta / dP = -1 / sqrt(P - P^2). Throws SingularityError at P = 0 or P = 1.
double jacobian_dtheta_dp(Probability p);

/// Legendre polynomial L_k(x) by upward three-term recurrence.
///
/// Arguments with |x| <= 1 + 1e-12 are clamped to [-1, 1]; anything further out
/// throws DomainError. Negative orders throw DomainError.
double legendre(int k, double x);

/// Shifted Legendre polynomial L_k(2x - 1) on [0, 1], same clamping policy.
double shifted_legendre(int k, double x);

/// Clamps x into [-1, 1] when the overshoot is at most 1e-12; throws otherwise.
double clamp_unit_interval(double x);

/// Kahan-compensated running sum.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double y = v - carry_;
        const double t = sum_ + y;
        carry_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const noexcept { return sum_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

/// Walks L_0(x), L_1(x), ... one order at a time.
class LegendreRecurrence {
public:
    explicit LegendreRecurrence(double x) noexcept : x_(x), prev_(0.0), cur_(1.0) {}

    int order() const noexcept { return k_; }
    double value() const noexcept { return cur_; }
    double previous() const noexcept { return prev_; }

    void advance() noexcept {
        // (k+1) L_{k+1} = (2k+1) x L_k - k L_{k-1}
        const double next = (static_cast<double>(2 * k_ + 1) * x_ * cur_ - static_cast<double>(k_) * prev_) /
                            static_cast<double>(k_ + 1);
        prev_ = cur_;
        cur_ = next;
        ++k_;
    }

private:
    double x_;
    double prev_;
    double cur_;
    int k_ = 0;
};

}  // namespace blochwalk
