#ifndef SMS_INTEGRATE_HPP
#define SMS_INTEGRATE_HPP

#include <functional>

#include "sms/rng.hpp"
#include "sms/types.hpp"

namespace sms {

using GradFn = std::function<Vec(const Vec&)>;

// Coefficients of the exact Ornstein-Uhlenbeck flow over a duration t with
// friction gamma. Every map is parameterized by its own duration, so the same
// coefficients serve the UBU half-steps (t = h/2) and the BAOAB full-step
// refresh (t = h). Below gamma*t = 1e-6 the coefficients are evaluated by
// series expansion; the closed forms cancel catastrophically there.
struct OUCoeffs {
    double t = 0.0;
    double gamma = 0.0;
    double eta = 0.0;       // exp(-gamma t)
    double F = 0.0;         // (1 - exp(-gamma t)) / gamma
    double c = 0.0;         // mixing coefficient sqrt((1-eta)/(1+eta) * 2/(gamma t))
    double s = 0.0;         // sqrt(1 - c^2)
    double z2_scale = 0.0;  // sqrt((1 - eta^2) / (2 gamma))
    double var_zx = 0.0;    // (2/gamma) (t - 2F + (1-eta^2)/(2 gamma))
    double var_zv = 0.0;    // 1 - eta^2
    double cov_zx_zv = 0.0; // (1 - eta)^2 / gamma

    static OUCoeffs make(double t, double gamma);
};

// Position/velocity noise over one OU segment, built per coordinate from two
// standard Gaussians. Never sampled from a Cholesky factor so coupled-chain
// machinery can intercept the xi draws slot by slot.
struct NoisePair {
    Vec zx;
    Vec zv;
};

NoisePair sample_ou_noise(const OUCoeffs& cf, Eigen::Index d, NoiseSource& noise);

// Exact OU flow: x' = x + F v + Zx, v' = eta v + Zv. Consumes two noise slots.
PhaseState ou_step(const PhaseState& state, double t, double gamma, NoiseSource& noise);

// Gradient impulse: v' = v - h * grad_value.
PhaseState b_kick(const PhaseState& state, double h, const Vec& grad_value);

// Free position drift: x' = x + t v.
PhaseState a_drift(const PhaseState& state, double t);

// Velocity refresh: v' = exp(-gamma t) v + sqrt(1 - exp(-2 gamma t)) xi.
// Consumes one noise slot.
Vec o_refresh(const Vec& v, double t, double gamma, NoiseSource& noise);

// U(h/2) B(h) U(h/2); grad_at is called exactly once, at the midpoint
// position. Consumes four noise slots.
PhaseState ubu_step(const PhaseState& state, double h, double gamma, const GradFn& grad_at,
                    NoiseSource& noise);

// B(h/2) A(h/2) O(h) A(h/2) B(h/2) with one-step-delayed gradient caching:
// the incoming half kick uses cached_grad (the gradient at the current x) and
// the outgoing half kick uses a fresh evaluation at the new x, which is
// returned for the next step. Consumes one noise slot.
struct BaoabResult {
    PhaseState state;
    Vec new_cached_grad;
};
BaoabResult baoab_step(const PhaseState& state, double h, double gamma, const Vec& cached_grad,
                       const GradFn& grad_at, NoiseSource& noise);

// Euler-Maruyama: x' = x + h v, v' = v - h grad(x) - h gamma v + sqrt(2 gamma h) xi,
// gradient at the pre-step x. Consumes one noise slot.
PhaseState euler_step(const PhaseState& state, double h, double gamma, const GradFn& grad_at,
                      NoiseSource& noise);

// Deterministic leapfrog: x += (h/2) v; v -= h grad(x); x += (h/2) v.
PhaseState leapfrog_kick_drift(const PhaseState& state, double h, const GradFn& grad_at);

// Elastic bounces off the hypercube {x : |x_j - center_j| <= rho_max}: each
// violated coordinate is folded across the face (x <- 2 boundary - x) with
// the velocity component negated, until inside. Each fold strictly reduces
// the excess, so the loop terminates.
PhaseState reflect_hypercube(const PhaseState& state, const Vec& center, double rho_max);

}  // namespace sms

#endif  // SMS_INTEGRATE_HPP
