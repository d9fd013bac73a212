#include <mpfr.h>

#include <cmath>

#include "doctest.h"
#include "sms/diagnose.hpp"
#include "sms/integrate.hpp"
#include "support.hpp"

using namespace sms;

namespace {

// 200-bit evaluation of the mixing coefficient sqrt((1-e^-u)/(1+e^-u) * 2/u).
double mpfr_mixing_coefficient(double u) {
    mpfr_t mu, e, num, den, c;
    mpfr_inits2(200, mu, e, num, den, c, (mpfr_ptr)nullptr);
    mpfr_set_d(mu, u, MPFR_RNDN);
    mpfr_neg(e, mu, MPFR_RNDN);
    mpfr_exp(e, e, MPFR_RNDN);
    mpfr_ui_sub(num, 1, e, MPFR_RNDN);
    mpfr_add_ui(den, e, 1, MPFR_RNDN);
    mpfr_div(c, num, den, MPFR_RNDN);
    mpfr_mul_ui(c, c, 2, MPFR_RNDN);
    mpfr_div(c, c, mu, MPFR_RNDN);
    mpfr_sqrt(c, c, MPFR_RNDN);
    const double out = mpfr_get_d(c, MPFR_RNDN);
    mpfr_clears(mu, e, num, den, c, (mpfr_ptr)nullptr);
    return out;
}

struct CountingGrad {
    GradFn fn;
    long calls = 0;
    CountingGrad(GradFn inner) : inner_(std::move(inner)) {
        fn = [this](const Vec& x) {
            ++calls;
            return inner_(x);
        };
    }
    GradFn inner_;
};

PhaseState one_dim_state(double x, double v) {
    Vec xv(1), vv(1);
    xv << x;
    vv << v;
    return {xv, vv};
}

}  // namespace

TEST_CASE("OU coefficients against the closed forms") {
    const OUCoeffs cf = OUCoeffs::make(0.5, 2.0);
    CHECK(cf.eta == doctest::Approx(std::exp(-1.0)));
    CHECK(cf.F == doctest::Approx((1.0 - std::exp(-1.0)) / 2.0));
    CHECK(cf.var_zv == doctest::Approx(1.0 - std::exp(-2.0)));
    CHECK(cf.cov_zx_zv == doctest::Approx(std::pow(1.0 - std::exp(-1.0), 2) / 2.0));
    CHECK(cf.c <= 1.0);
    CHECK(cf.F > 0.0);
    CHECK(cf.F < 0.5);
}

TEST_CASE("mixing coefficient matches the 200-bit oracle at tiny gamma t") {
    for (double u : {1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 0.5, 2.0}) {
        const OUCoeffs cf = OUCoeffs::make(u, 1.0);  // t = u, gamma = 1
        const double oracle = mpfr_mixing_coefficient(u);
        CHECK(std::abs(cf.c - oracle) <= 1e-8 * oracle);
    }
}

TEST_CASE("no NaN across fourteen decades of gamma t") {
    GaussianNoise noise(1);
    for (double u = 1e-14; u <= 10.0; u *= 3.7) {
        const OUCoeffs cf = OUCoeffs::make(u, 1.0);
        for (double field : {cf.eta, cf.F, cf.c, cf.s, cf.z2_scale, cf.var_zx, cf.var_zv,
                             cf.cov_zx_zv}) {
            CHECK(std::isfinite(field));
        }
        const PhaseState out = ou_step(one_dim_state(0.3, -0.7), u, 1.0, noise);
        CHECK(std::isfinite(out.x[0]));
        CHECK(std::isfinite(out.v[0]));
    }
}

TEST_CASE("ou_step deterministic part") {
    ZeroNoise none;
    const PhaseState out = ou_step(one_dim_state(0.0, 1.0), 0.5, 2.0, none);
    CHECK(out.x[0] == doctest::Approx((1.0 - std::exp(-1.0)) / 2.0));
    CHECK(out.v[0] == doctest::Approx(std::exp(-1.0)));

    const PhaseState fixed = ou_step(one_dim_state(0.8, 0.0), 0.5, 2.0, none);
    CHECK(fixed.x[0] == doctest::Approx(0.8));
    CHECK(fixed.v[0] == doctest::Approx(0.0));

    CHECK_THROWS_AS(ou_step(one_dim_state(0, 0), -0.1, 1.0, none), std::invalid_argument);
}

TEST_CASE("OU noise covariances match the analytic integrals") {
    const double gamma = 1.0, t = 0.25;
    const OUCoeffs cf = OUCoeffs::make(t, gamma);
    GaussianNoise noise(2025);
    const long n = 1000000;
    double sxx = 0, svv = 0, sxv = 0;
    for (long k = 0; k < n; ++k) {
        const NoisePair np = sample_ou_noise(cf, 1, noise);
        sxx += np.zx[0] * np.zx[0];
        svv += np.zv[0] * np.zv[0];
        sxv += np.zx[0] * np.zv[0];
    }
    const double mxx = sxx / n, mvv = svv / n, mxv = sxv / n;
    // standard errors of second-moment estimators of a centered Gaussian pair
    const double se_xx = std::sqrt(2.0 * cf.var_zx * cf.var_zx / n);
    const double se_vv = std::sqrt(2.0 * cf.var_zv * cf.var_zv / n);
    const double se_xv = std::sqrt((cf.var_zx * cf.var_zv + cf.cov_zx_zv * cf.cov_zx_zv) / n);
    CHECK(std::abs(mxx - cf.var_zx) <= 4.0 * se_xx);
    CHECK(std::abs(mvv - cf.var_zv) <= 4.0 * se_vv);
    CHECK(std::abs(mxv - cf.cov_zx_zv) <= 4.0 * se_xv);
    // spot value: cov = (1 - e^{-1/4})^2
    CHECK(cf.cov_zx_zv == doctest::Approx(0.04892909).epsilon(1e-4));
}

TEST_CASE("b_kick") {
    const PhaseState s = one_dim_state(0.0, 0.0);
    Vec zero(1), one(1);
    zero << 0.0;
    one << 1.0;
    CHECK(b_kick(s, 0.1, zero).v[0] == doctest::Approx(0.0));
    CHECK(b_kick(s, 0.1, one).v[0] == doctest::Approx(-0.1));

    Vec g1(1), g2(1);
    g1 << 0.4;
    g2 << -1.3;
    const PhaseState twice = b_kick(b_kick(s, 0.1, g1), 0.1, g2);
    const PhaseState once = b_kick(s, 0.1, Vec(g1 + g2));
    CHECK(twice.v[0] == doctest::Approx(once.v[0]));
    CHECK_THROWS_AS(b_kick(s, 0.1, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("a_drift flow property") {
    PhaseState s{Vec::Zero(2), Vec::Zero(2)};
    s.v << 1.0, 2.0;
    const PhaseState out = a_drift(s, 0.5);
    CHECK(out.x[0] == doctest::Approx(0.5));
    CHECK(out.x[1] == doctest::Approx(1.0));
    CHECK(a_drift(PhaseState{s.x, Vec::Zero(2)}, 0.7).x.norm() == doctest::Approx(0.0));

    const PhaseState split = a_drift(a_drift(s, 0.3), 0.45);
    const PhaseState joint = a_drift(s, 0.75);
    CHECK((split.x - joint.x).norm() < 1e-15);
}

TEST_CASE("o_refresh") {
    ZeroNoise none;
    Vec v(1);
    v << 0.8;
    CHECK(o_refresh(v, std::log(2.0), 1.0, none)[0] == doctest::Approx(0.4));

    SUBCASE("full refresh limit") {
        GaussianNoise noise(5);
        const long n = 100000;
        double sq = 0.0;
        for (long k = 0; k < n; ++k) {
            const Vec out = o_refresh(v, 50.0, 1.0, noise);
            sq += out[0] * out[0];
        }
        CHECK(std::abs(sq / n - 1.0) <= 4.0 * std::sqrt(2.0 / n));
    }
    SUBCASE("stationarity of the unit Gaussian") {
        GaussianNoise noise(6);
        Rng rng(7);
        const long n = 100000;
        double sq = 0.0;
        for (long k = 0; k < n; ++k) {
            Vec vin(1);
            vin << draw_normal(rng);
            const Vec out = o_refresh(vin, 0.3, 1.5, noise);
            sq += out[0] * out[0];
        }
        CHECK(std::abs(sq / n - 1.0) <= 4.0 * std::sqrt(2.0 / n));
    }
}

TEST_CASE("ubu_step composes the OU semigroup on a zero potential") {
    const double h = 0.3, gamma = 1.7;
    const OUCoeffs half = OUCoeffs::make(h / 2.0, gamma);
    const OUCoeffs full = OUCoeffs::make(h, gamma);
    CHECK(half.F * (1.0 + half.eta) == doctest::Approx(full.F).epsilon(1e-14));

    ZeroNoise none;
    CountingGrad grad([](const Vec& x) { return Vec(Vec::Zero(x.size())); });
    const PhaseState in = one_dim_state(0.4, -1.1);
    const PhaseState via_ubu = ubu_step(in, h, gamma, grad.fn, none);
    const PhaseState via_ou = ou_step(in, h, gamma, none);
    CHECK(via_ubu.x[0] == doctest::Approx(via_ou.x[0]).epsilon(1e-14));
    CHECK(via_ubu.v[0] == doctest::Approx(via_ou.v[0]).epsilon(1e-14));
    CHECK(grad.calls == 1);
}

TEST_CASE("one gradient evaluation per step") {
    GaussianNoise noise(8);
    CountingGrad grad([](const Vec& x) { return Vec(2.0 * x); });
    PhaseState s = one_dim_state(0.4, 0.2);
    for (int k = 1; k <= 10; ++k) s = ubu_step(s, 0.05, 2.0, grad.fn, noise);
    CHECK(grad.calls == 10);

    CountingGrad bg([](const Vec& x) { return Vec(2.0 * x); });
    Vec cached = bg.fn(s.x);
    for (int k = 0; k < 10; ++k) {
        BaoabResult r = baoab_step(s, 0.05, 2.0, cached, bg.fn, noise);
        s = r.state;
        cached = r.new_cached_grad;
    }
    CHECK(bg.calls == 11);  // one fresh evaluation per step after the initial cache

    CountingGrad eg([](const Vec& x) { return Vec(2.0 * x); });
    for (int k = 0; k < 10; ++k) s = euler_step(s, 0.05, 2.0, eg.fn, noise);
    CHECK(eg.calls == 10);
}

TEST_CASE("baoab zero-potential composite is drift-refresh-drift") {
    ZeroNoise none;
    const double h = 0.4, gamma = 1.3;
    const PhaseState in = one_dim_state(0.2, 0.9);
    const Vec zero = Vec::Zero(1);
    const BaoabResult r =
        baoab_step(in, h, gamma, zero, [](const Vec&) { return Vec(Vec::Zero(1)); }, none);

    PhaseState manual = a_drift(in, h / 2.0);
    manual.v = o_refresh(manual.v, h, gamma, none);
    manual = a_drift(manual, h / 2.0);
    CHECK(r.state.x[0] == doctest::Approx(manual.x[0]).epsilon(1e-15));
    CHECK(r.state.v[0] == doctest::Approx(manual.v[0]).epsilon(1e-15));
}

TEST_CASE("euler_step deterministic part and small-h OU agreement") {
    ZeroNoise none;
    const PhaseState out = euler_step(
        one_dim_state(0.0, 1.0), 0.1, 1.0, [](const Vec&) { return Vec(Vec::Zero(1)); }, none);
    CHECK(out.x[0] == doctest::Approx(0.1));
    CHECK(out.v[0] == doctest::Approx(0.9));

    const double h = 1e-3;
    const PhaseState eul = euler_step(
        one_dim_state(0.2, 0.7), h, 1.0, [](const Vec&) { return Vec(Vec::Zero(1)); }, none);
    const PhaseState ou = ou_step(one_dim_state(0.2, 0.7), h, 1.0, none);
    CHECK(std::abs(eul.x[0] - ou.x[0]) < 1e-5);
    CHECK(std::abs(eul.v[0] - ou.v[0]) < 1e-5);
}

TEST_CASE("leapfrog is symplectic and time reversible") {
    Mat a(2, 2);
    a << 1.5, 0.2, 0.2, 0.8;
    const QuadraticModel q(a, Vec::Zero(2), 1);
    const GradFn grad = [&](const Vec& x) { return q.gradient(x); };

    SUBCASE("zero gradient reduces to a full drift") {
        const GradFn zero = [](const Vec& x) { return Vec(Vec::Zero(x.size())); };
        PhaseState s{Vec::Zero(2), Vec::Ones(2)};
        const PhaseState out = leapfrog_kick_drift(s, 0.3, zero);
        CHECK((out.x - 0.3 * Vec::Ones(2)).norm() < 1e-15);
        CHECK((out.v - Vec::Ones(2)).norm() < 1e-15);
    }
    SUBCASE("numerical Jacobian determinant is one") {
        const double h = 0.21, eps = 1e-6;
        Vec z0(4);
        z0 << 0.3, -0.4, 0.8, 0.1;
        auto map = [&](const Vec& z) {
            const PhaseState out = leapfrog_kick_drift({z.head(2), z.tail(2)}, h, grad);
            Vec r(4);
            r << out.x, out.v;
            return r;
        };
        Mat jac(4, 4);
        for (int j = 0; j < 4; ++j) {
            Vec zp = z0, zm = z0;
            zp[j] += eps;
            zm[j] -= eps;
            jac.col(j) = (map(zp) - map(zm)) / (2.0 * eps);
        }
        CHECK(std::abs(jac.determinant() - 1.0) < 1e-10);
    }
    SUBCASE("flip-evolve-flip returns the initial state") {
        PhaseState s{Vec::Zero(2), Vec::Zero(2)};
        s.x << 0.7, -0.2;
        s.v << 0.4, 1.1;
        PhaseState t = leapfrog_kick_drift(s, 0.17, grad);
        t.v = -t.v;
        t = leapfrog_kick_drift(t, 0.17, grad);
        t.v = -t.v;
        CHECK((t.x - s.x).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((t.v - s.v).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("hypercube reflection") {
    Vec center = Vec::Zero(1);
    SUBCASE("interior states are untouched") {
        const PhaseState s = one_dim_state(0.4, -2.0);
        const PhaseState out = reflect_hypercube(s, center, 1.0);
        CHECK(out.x[0] == doctest::Approx(0.4));
        CHECK(out.v[0] == doctest::Approx(-2.0));
    }
    SUBCASE("single fold") {
        const PhaseState out = reflect_hypercube(one_dim_state(1.3, 2.0), center, 1.0);
        CHECK(out.x[0] == doctest::Approx(0.7));
        CHECK(out.v[0] == doctest::Approx(-2.0));
    }
    SUBCASE("double fold flips the velocity twice") {
        const PhaseState out = reflect_hypercube(one_dim_state(3.5, 2.0), center, 1.0);
        CHECK(out.x[0] == doctest::Approx(-0.5));
        CHECK(out.v[0] == doctest::Approx(2.0));
    }
    SUBCASE("each coordinate reflects independently") {
        Vec c2 = Vec::Zero(2);
        PhaseState s{Vec::Zero(2), Vec::Ones(2)};
        s.x << 1.2, -1.7;
        const PhaseState out = reflect_hypercube(s, c2, 1.0);
        CHECK(out.x[0] == doctest::Approx(0.8));
        CHECK(out.x[1] == doctest::Approx(-0.3));
        CHECK(out.v[0] == doctest::Approx(-1.0));
        CHECK(out.v[1] == doctest::Approx(-1.0));
    }
}

TEST_CASE("ubu invariant variance matches the Lyapunov oracle") {
    Mat a = Mat::Identity(1, 1);
    const QuadraticModel q(a, Vec::Zero(1), 1);
    const double h = 0.25, gamma = std::sqrt(8.0);
    const LyapunovOracle oracle = lyapunov_invariant_covariance(q, IntegratorKind::Ubu, h, gamma);

    GaussianNoise noise(31415);
    const GradFn grad = [&](const Vec& x) { return q.gradient(x); };
    PhaseState s = one_dim_state(0.0, 0.0);
    for (int k = 0; k < 10000; ++k) s = ubu_step(s, h, gamma, grad, noise);

    const int n_chunks = 20;
    const long per_chunk = 50000;
    std::vector<double> chunk_mean(n_chunks, 0.0);
    for (int c = 0; c < n_chunks; ++c) {
        double sq = 0.0;
        for (long k = 0; k < per_chunk; ++k) {
            s = ubu_step(s, h, gamma, grad, noise);
            sq += s.x[0] * s.x[0];
        }
        chunk_mean[c] = sq / per_chunk;
    }
    double mean = 0.0;
    for (double m : chunk_mean) mean += m;
    mean /= n_chunks;
    double var = 0.0;
    for (double m : chunk_mean) var += (m - mean) * (m - mean);
    var /= (n_chunks - 1);
    const double se = std::sqrt(var / n_chunks);
    CHECK(std::abs(mean - oracle.position_var()) <= 3.0 * se);
}
