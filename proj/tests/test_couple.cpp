#include <cmath>

#include "doctest.h"
#include "sms/couple.hpp"
#include "sms/diagnose.hpp"
#include "support.hpp"

using namespace sms;

TEST_CASE("degenerate equal-stepsize coupling gives exactly zero differences") {
    Rng rng(3);
    auto m = test::make_logreg(rng, 12, 2, 2, 1.0);
    CoupledLevelConfig cfg;
    cfg.kind = Chain::Kind::Ubu;
    cfg.h_coarse = 0.05;
    cfg.gamma = 3.0;
    cfg.coarse_steps = 200;
    cfg.seed = 11;
    cfg.step_ratio = 1;

    SUBCASE("sweep estimator") {
        cfg.estimator = EstimatorSpec::sweep(3);
        const LevelEstimate est = run_coupled_level(*m, cfg, {[](const Vec& x) { return x[0]; }});
        CHECK(est.delta[0] == 0.0);
        CHECK(est.max_coupling_distance == 0.0);
    }
    SUBCASE("iid estimator") {
        cfg.estimator = EstimatorSpec::iid(4);
        const LevelEstimate est = run_coupled_level(*m, cfg, {[](const Vec& x) { return x[0]; }});
        CHECK(est.delta[0] == 0.0);
    }
}

TEST_CASE("zero potential has statistically zero bias at every level") {
    test::ZeroModel zero(1);
    CoupledLevelConfig cfg;
    cfg.kind = Chain::Kind::Ubu;
    cfg.estimator = EstimatorSpec::full();
    cfg.h_coarse = 0.2;
    cfg.gamma = 2.0;
    cfg.coarse_steps = 20000;
    cfg.seed = 17;
    const LevelEstimate est =
        run_coupled_level(zero, cfg, {[](const Vec& x) { return x[0] * x[0]; }});
    CHECK(std::abs(est.delta[0]) <= 4.0 * est.std_err[0]);
}

TEST_CASE("coupled level reproduces the Lyapunov variance gap") {
    const QuadraticModel q(Mat::Identity(1, 1), Vec::Zero(1), 1);
    const double gamma = std::sqrt(8.0), h = 0.2;
    CoupledLevelConfig cfg;
    cfg.kind = Chain::Kind::Ubu;
    cfg.estimator = EstimatorSpec::full();
    cfg.h_coarse = h;
    cfg.gamma = gamma;
    cfg.coarse_steps = 60000;
    cfg.seed = 23;
    const LevelEstimate est =
        run_coupled_level(q, cfg, {[](const Vec& x) { return x[0] * x[0]; }});

    const double var_coarse =
        lyapunov_invariant_covariance(q, IntegratorKind::Ubu, h, gamma).position_var();
    const double var_fine =
        lyapunov_invariant_covariance(q, IntegratorKind::Ubu, h / 2.0, gamma).position_var();
    CHECK(std::abs(est.delta[0] - (var_coarse - var_fine)) <= 4.0 * est.std_err[0]);
}

TEST_CASE("coupled chains stay close on a strongly convex target") {
    const QuadraticModel q(Mat::Identity(2, 2), Vec::Zero(2), 1);
    CoupledLevelConfig cfg;
    cfg.kind = Chain::Kind::Ubu;
    cfg.estimator = EstimatorSpec::full();
    cfg.h_coarse = 0.01;
    cfg.gamma = std::sqrt(8.0);
    cfg.coarse_steps = 20000;
    cfg.seed = 29;
    const LevelEstimate est =
        run_coupled_level(q, cfg, {[](const Vec& x) { return x.squaredNorm(); }});
    CHECK(est.max_coupling_distance < 10.0 * cfg.h_coarse);
}

TEST_CASE("telescoping") {
    auto level = [](double h, double delta) {
        LevelEstimate e;
        e.h_coarse = h;
        e.delta = {delta};
        e.std_err = {0.01};
        return e;
    };
    SUBCASE("single level") {
        const BiasCurve c = telescope({level(0.2, 0.5)});
        CHECK(c.bias[0][0] == doctest::Approx(0.5));
    }
    SUBCASE("geometric ladder sums to seven epsilon") {
        const double eps = 1e-3;
        const BiasCurve c = telescope({level(0.4, 4 * eps), level(0.2, 2 * eps), level(0.1, eps)});
        CHECK(c.bias[0][0] == doctest::Approx(7 * eps));
        CHECK(c.bias[1][0] == doctest::Approx(3 * eps));
        CHECK(c.bias[2][0] == doctest::Approx(eps));
    }
    SUBCASE("consistency: adjacent biases differ by the level estimate") {
        const BiasCurve c = telescope({level(0.4, 0.12), level(0.2, 0.03), level(0.1, 0.0075)});
        CHECK(c.bias[1][0] - c.bias[0][0] == doctest::Approx(-0.12).epsilon(1e-12));
    }
    SUBCASE("order-two pattern fits slope two") {
        const BiasCurve c =
            telescope({level(0.4, 0.12), level(0.2, 0.03), level(0.1, 0.0075),
                       level(0.05, 0.001875)});
        const std::vector<double> mean = c.mean_bias();
        // truncating the sum at the finest level steepens the fit slightly
        CHECK(fit_slope(c.stepsizes, mean) == doctest::Approx(2.0).epsilon(0.1));
    }
    SUBCASE("non-halving ladders are rejected") {
        CHECK_THROWS_AS(telescope({level(0.4, 1.0), level(0.3, 1.0)}), std::invalid_argument);
    }
}

TEST_CASE("fit_slope") {
    const std::vector<double> hs{0.4, 0.2, 0.1, 0.05};
    SUBCASE("exact powers") {
        std::vector<double> quad(4), lin(4);
        for (int i = 0; i < 4; ++i) {
            quad[i] = 3.0 * hs[i] * hs[i];
            lin[i] = 0.7 * hs[i];
        }
        CHECK(std::abs(fit_slope(hs, quad) - 2.0) < 1e-9);
        CHECK(std::abs(fit_slope(hs, lin) - 1.0) < 1e-9);
    }
    SUBCASE("noisy three-halves power") {
        Rng rng(31);
        std::vector<double> b(4);
        std::uniform_real_distribution<double> noise(-0.01, 0.01);
        for (int i = 0; i < 4; ++i) b[i] = std::pow(hs[i], 1.5) * (1.0 + noise(rng));
        const double slope = fit_slope(hs, b);
        CHECK(slope >= 1.4);
        CHECK(slope <= 1.6);
    }
    SUBCASE("sign changes and zeros are unusable") {
        CHECK_THROWS_AS(fit_slope(hs, std::vector<double>{1.0, -1.0, 1.0, 1.0}),
                        unusable_data_error);
        CHECK_THROWS_AS(fit_slope(hs, std::vector<double>{1.0, 0.0, 1.0, 1.0}),
                        unusable_data_error);
        CHECK_THROWS_AS(fit_slope(std::vector<double>{0.1, 0.2}, std::vector<double>{1.0, 2.0}),
                        unusable_data_error);
    }
}

TEST_CASE("chunked_std") {
    SUBCASE("constant series") {
        const std::vector<double> s(100, 2.5);
        CHECK(chunked_std(s) == doctest::Approx(0.0));
    }
    SUBCASE("hand-computed two-chunk value") {
        const std::vector<double> s{1.0, 1.0, 3.0, 3.0};
        CHECK(chunked_std(s, 2) == doctest::Approx(1.0));
    }
    SUBCASE("iid standard normals match the CLT rate") {
        Rng rng(31);
        std::vector<double> s(40000);
        for (auto& v : s) v = draw_normal(rng);
        const double se = chunked_std(s);
        CHECK(se > (1.0 / 200.0) / 1.5);
        CHECK(se < (1.0 / 200.0) * 1.5);
    }
    SUBCASE("short series are rejected") {
        CHECK_THROWS_AS(chunked_std(std::vector<double>{1.0, 2.0}, 4), std::invalid_argument);
    }
}

TEST_CASE("aggregated coarse noise has standard normal marginals") {
    Rng rng(41);
    const long n = 100000;
    double sum = 0.0, sq = 0.0;
    for (long i = 0; i < n; ++i) {
        const double z = (draw_normal(rng) + draw_normal(rng)) / std::sqrt(2.0);
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / static_cast<double>(n)));
}
