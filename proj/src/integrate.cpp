#include "sms/integrate.hpp"

#include <cmath>

namespace sms {

OUCoeffs OUCoeffs::make(double t, double gamma) {
    require(t > 0.0, "duration must be positive");
    require(gamma > 0.0, "friction must be positive");
    OUCoeffs cf;
    cf.t = t;
    cf.gamma = gamma;
    const double u = gamma * t;

    double em;  // 1 - eta, kept cancellation-free in both branches
    if (u < 1e-6) {
        em = u * (1.0 - u / 2.0 + u * u / 6.0 - u * u * u / 24.0);
        cf.eta = 1.0 - em;
        cf.F = t * (1.0 - u / 2.0 + u * u / 6.0 - u * u * u / 24.0 + u * u * u * u / 120.0);
        cf.c = std::sqrt(1.0 - u * u / 12.0 + u * u * u * u / 120.0);
    } else {
        em = -std::expm1(-u);
        cf.eta = std::exp(-u);
        cf.F = em / gamma;
        cf.c = std::sqrt(std::min(1.0, em / (2.0 - em) * 2.0 / u));
    }

    // 1 - c^2 = u^2/12 - u^4/120 + 17 u^6/20160 - ...; the direct difference
    // cancels below u ~ 1e-3.
    double one_minus_c2;
    if (u < 1e-3) {
        const double u2 = u * u;
        one_minus_c2 = u2 / 12.0 - u2 * u2 / 120.0 + 17.0 * u2 * u2 * u2 / 20160.0;
    } else {
        one_minus_c2 = std::max(0.0, 1.0 - cf.c * cf.c);
    }
    cf.s = std::sqrt(one_minus_c2);

    const double one_minus_eta2 = u < 1e-6 ? em * (1.0 + cf.eta) : -std::expm1(-2.0 * u);
    cf.z2_scale = std::sqrt(one_minus_eta2 / (2.0 * gamma));
    cf.var_zv = one_minus_eta2;
    cf.cov_zx_zv = em * em / gamma;
    if (u < 1e-3) {
        // t - 2F + (1-eta^2)/(2 gamma) = t (u^2/3 - u^3/4 + 7u^4/60 - u^5/24 + ...)
        cf.var_zx = (2.0 / gamma) * t *
                    (u * u / 3.0 - u * u * u / 4.0 + 7.0 * u * u * u * u / 60.0 -
                     u * u * u * u * u / 24.0);
    } else {
        cf.var_zx = (2.0 / gamma) * (t - 2.0 * cf.F + one_minus_eta2 / (2.0 * gamma));
    }
    return cf;
}

NoisePair sample_ou_noise(const OUCoeffs& cf, Eigen::Index d, NoiseSource& noise) {
    const Vec xi1 = noise.draw(d);
    const Vec xi2 = noise.draw(d);
    const double sqrt_t = std::sqrt(cf.t);
    NoisePair np;
    // Z1 = sqrt(t) xi1, Z2 = z2_scale (c xi1 + s xi2)
    Vec z2 = cf.z2_scale * (cf.c * xi1 + cf.s * xi2);
    np.zx = std::sqrt(2.0 / cf.gamma) * (sqrt_t * xi1 - z2);
    np.zv = std::sqrt(2.0 * cf.gamma) * z2;
    return np;
}

PhaseState ou_step(const PhaseState& state, double t, double gamma, NoiseSource& noise) {
    const OUCoeffs cf = OUCoeffs::make(t, gamma);
    const NoisePair np = sample_ou_noise(cf, state.x.size(), noise);
    return {state.x + cf.F * state.v + np.zx, cf.eta * state.v + np.zv};
}

PhaseState b_kick(const PhaseState& state, double h, const Vec& grad_value) {
    require(h > 0.0, "stepsize must be positive");
    require(grad_value.size() == state.v.size(), "gradient dimension mismatch");
    return {state.x, state.v - h * grad_value};
}

PhaseState a_drift(const PhaseState& state, double t) {
    require(t > 0.0, "duration must be positive");
    return {state.x + t * state.v, state.v};
}

Vec o_refresh(const Vec& v, double t, double gamma, NoiseSource& noise) {
    require(t > 0.0, "duration must be positive");
    require(gamma > 0.0, "friction must be positive");
    const double eta = std::exp(-gamma * t);
    const double amp = std::sqrt(-std::expm1(-2.0 * gamma * t));
    return eta * v + amp * noise.draw(v.size());
}

PhaseState ubu_step(const PhaseState& state, double h, double gamma, const GradFn& grad_at,
                    NoiseSource& noise) {
    require(h > 0.0, "stepsize must be positive");
    PhaseState mid = ou_step(state, h / 2.0, gamma, noise);
    mid = b_kick(mid, h, grad_at(mid.x));
    return ou_step(mid, h / 2.0, gamma, noise);
}

BaoabResult baoab_step(const PhaseState& state, double h, double gamma, const Vec& cached_grad,
                       const GradFn& grad_at, NoiseSource& noise) {
    require(h > 0.0, "stepsize must be positive");
    PhaseState s = b_kick(state, h / 2.0, cached_grad);
    s = a_drift(s, h / 2.0);
    s.v = o_refresh(s.v, h, gamma, noise);
    s = a_drift(s, h / 2.0);
    Vec g = grad_at(s.x);
    s = b_kick(s, h / 2.0, g);
    return {std::move(s), std::move(g)};
}

PhaseState euler_step(const PhaseState& state, double h, double gamma, const GradFn& grad_at,
                      NoiseSource& noise) {
    require(h > 0.0, "stepsize must be positive");
    require(gamma > 0.0, "friction must be positive");
    const Vec g = grad_at(state.x);
    const Vec xi = noise.draw(state.v.size());
    return {state.x + h * state.v,
            state.v - h * g - h * gamma * state.v + std::sqrt(2.0 * gamma * h) * xi};
}

PhaseState leapfrog_kick_drift(const PhaseState& state, double h, const GradFn& grad_at) {
    require(h > 0.0, "stepsize must be positive");
    PhaseState s = a_drift(state, h / 2.0);
    s = b_kick(s, h, grad_at(s.x));
    return a_drift(s, h / 2.0);
}

PhaseState reflect_hypercube(const PhaseState& state, const Vec& center, double rho_max) {
    require(rho_max > 0.0, "rho_max must be positive");
    require(center.size() == state.x.size(), "center dimension mismatch");
    PhaseState s = state;
    for (Eigen::Index j = 0; j < s.x.size(); ++j) {
        while (std::abs(s.x[j] - center[j]) > rho_max) {
            const double boundary = center[j] + (s.x[j] > center[j] ? rho_max : -rho_max);
            s.x[j] = 2.0 * boundary - s.x[j];
            s.v[j] = -s.v[j];
        }
    }
    return s;
}

}  // namespace sms
