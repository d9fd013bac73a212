#include "sms/diagnose.hpp"

#include <cmath>

namespace sms {

double weighted_norm(const Vec& x, const Vec& v, const WeightedNormParams& params) {
    require(params.a > 0.0 && params.b >= 0.0, "weighted norm needs a > 0, b >= 0");
    require(params.b * params.b <= params.a / 4.0,
            "weighted norm outside the equivalence regime b^2 <= a/4");
    require(x.size() == v.size(), "position/velocity dimension mismatch");
    const double q = x.squaredNorm() + 2.0 * params.b * x.dot(v) + params.a * v.squaredNorm();
    return std::sqrt(q);
}

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
    require(chains.size() >= 2, "need at least two chains");
    const std::size_t n = chains.front().size();
    require(n >= 2, "need at least two samples per chain");
    for (const auto& c : chains) require(c.size() == n, "chains must have equal length");

    const double nn = static_cast<double>(n);
    double w = 0.0;
    std::vector<double> means;
    means.reserve(chains.size());
    for (const auto& c : chains) {
        double mean = 0.0;
        for (double v : c) mean += v;
        mean /= nn;
        double var = 0.0;
        for (double v : c) var += (v - mean) * (v - mean);
        var /= (nn - 1.0);
        w += var;
        means.push_back(mean);
    }
    w /= static_cast<double>(chains.size());
    if (w == 0.0) throw undefined_diagnostic_error("zero within-chain variance");

    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= static_cast<double>(means.size());
    double b_bar = 0.0;
    for (double m : means) b_bar += (m - grand) * (m - grand);
    b_bar /= static_cast<double>(means.size() - 1);

    return std::sqrt(((nn - 1.0) / nn * w + b_bar) / w);
}

PowerIterationResult hessian_norm_power_iteration(const Model& model, const Vec& x, int max_iters,
                                                  double tol, Rng& rng, double fd_eps) {
    require(tol > 0.0, "tolerance must be positive");
    require(max_iters >= 1, "need at least one iteration");
    Vec v = draw_normal_vec(rng, model.dim());
    v.normalize();
    double rayleigh = 0.0;
    bool have_prev = false;
    PowerIterationResult res;
    for (int it = 1; it <= max_iters; ++it) {
        res.iterations = it;
        const Vec w = model.hessian_vector_product(x, v, fd_eps);
        const double lambda = v.dot(w);
        res.rayleigh_history.push_back(lambda);
        const double wn = w.norm();
        if (wn == 0.0) {
            res.value = 0.0;
            res.converged = true;
            return res;
        }
        const double residual = (w - lambda * v).norm();
        const bool rq_settled = have_prev && std::abs(lambda - rayleigh) <=
                                                 tol * std::max(1.0, std::abs(lambda));
        rayleigh = lambda;
        have_prev = true;
        v = w / wn;
        if (residual <= tol * std::max(1.0, std::abs(lambda)) || rq_settled) {
            res.value = std::abs(lambda);
            res.converged = true;
            return res;
        }
    }
    res.value = std::abs(rayleigh);
    res.converged = false;
    return res;
}

namespace {

struct AffineStep {
    Mat T;
    Mat Q;
};

Mat ou_mean_map(const OUCoeffs& cf, Eigen::Index d) {
    Mat m = Mat::Zero(2 * d, 2 * d);
    m.topLeftCorner(d, d).setIdentity();
    m.topRightCorner(d, d) = cf.F * Mat::Identity(d, d);
    m.bottomRightCorner(d, d) = cf.eta * Mat::Identity(d, d);
    return m;
}

Mat ou_noise_cov(const OUCoeffs& cf, Eigen::Index d) {
    Mat q = Mat::Zero(2 * d, 2 * d);
    q.topLeftCorner(d, d) = cf.var_zx * Mat::Identity(d, d);
    q.topRightCorner(d, d) = cf.cov_zx_zv * Mat::Identity(d, d);
    q.bottomLeftCorner(d, d) = cf.cov_zx_zv * Mat::Identity(d, d);
    q.bottomRightCorner(d, d) = cf.var_zv * Mat::Identity(d, d);
    return q;
}

Mat kick_map(const Mat& precision, double h) {
    const Eigen::Index d = precision.rows();
    Mat m = Mat::Identity(2 * d, 2 * d);
    m.bottomLeftCorner(d, d) = -h * precision;
    return m;
}

Mat drift_map(Eigen::Index d, double t) {
    Mat m = Mat::Identity(2 * d, 2 * d);
    m.topRightCorner(d, d) = t * Mat::Identity(d, d);
    return m;
}

AffineStep one_step_map(const QuadraticModel& target, IntegratorKind kind, double h,
                        double gamma) {
    const Eigen::Index d = target.dim();
    const Mat& A = target.precision();
    switch (kind) {
        case IntegratorKind::Ubu: {
            const OUCoeffs half = OUCoeffs::make(h / 2.0, gamma);
            const Mat mu = ou_mean_map(half, d);
            const Mat cu = ou_noise_cov(half, d);
            const Mat mb = kick_map(A, h);
            const Mat tail = mu * mb;  // maps applied to the first U's output
            return {tail * mu, tail * cu * tail.transpose() + cu};
        }
        case IntegratorKind::Baoab: {
            const OUCoeffs full = OUCoeffs::make(h, gamma);
            Mat mo = Mat::Identity(2 * d, 2 * d);
            mo.bottomRightCorner(d, d) = full.eta * Mat::Identity(d, d);
            Mat co = Mat::Zero(2 * d, 2 * d);
            co.bottomRightCorner(d, d) = full.var_zv * Mat::Identity(d, d);
            const Mat mb = kick_map(A, h / 2.0);
            const Mat ma = drift_map(d, h / 2.0);
            const Mat tail = mb * ma;  // maps applied after the O refresh
            return {tail * mo * ma * mb, tail * co * tail.transpose()};
        }
        case IntegratorKind::Euler: {
            Mat t = Mat::Zero(2 * d, 2 * d);
            t.topLeftCorner(d, d).setIdentity();
            t.topRightCorner(d, d) = h * Mat::Identity(d, d);
            t.bottomLeftCorner(d, d) = -h * A;
            t.bottomRightCorner(d, d) = (1.0 - h * gamma) * Mat::Identity(d, d);
            Mat q = Mat::Zero(2 * d, 2 * d);
            q.bottomRightCorner(d, d) = 2.0 * gamma * h * Mat::Identity(d, d);
            return {t, q};
        }
    }
    throw std::logic_error("unknown integrator kind");
}

}  // namespace

LyapunovOracle lyapunov_invariant_covariance(const QuadraticModel& target, IntegratorKind kind,
                                             double h, double gamma) {
    require(h > 0.0 && gamma > 0.0, "stepsize and friction must be positive");
    auto [T, Q] = one_step_map(target, kind, h, gamma);

    Eigen::EigenSolver<Mat> es(T, /*computeEigenvectors=*/false);
    const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
    if (rho >= 1.0) throw instability_error("one-step map is not contractive", rho);

    // Fixed point by horizon doubling: S_k = sum_{j < 2^k} T^j Q (T^j)', with
    // M_k = T^{2^k}. Converges geometrically even when rho(T) is close to 1.
    Mat S = Q;
    Mat M = T;
    for (int it = 0; it < 128; ++it) {
        const Mat add = M * S * M.transpose();
        S += add;
        if (add.norm() <= 1e-16 * S.norm()) break;
        M = M * M;
    }

    LyapunovOracle oracle{kind, std::move(T), std::move(Q), std::move(S)};
    const Mat resid = oracle.sigma - oracle.T * oracle.sigma * oracle.T.transpose() - oracle.Q;
    if (resid.norm() > 1e-12 * oracle.sigma.norm())
        throw std::runtime_error("Lyapunov fixed point residual too large");
    return oracle;
}

ContractionResult contraction_check(const QuadraticModel& target, double h, double gamma,
                                    int n_steps,
                                    const std::vector<std::pair<PhaseState, PhaseState>>& starts,
                                    Rng& rng) {
    require(n_steps >= 1, "need at least one step");
    require(!starts.empty(), "need at least one pair");
    const double m = target.min_eigenvalue();
    const double M = target.max_eigenvalue();
    ContractionResult res;
    // b = 1/gamma except when violated hypotheses would leave the norm's
    // equivalence regime; under gamma >= sqrt(8M) the clamp never binds.
    const double a = 1.0 / M;
    res.norm = {a, std::min(1.0 / gamma, 0.5 * std::sqrt(a))};
    res.bound = 1.0 - m * h / (8.0 * gamma);
    res.hypotheses_ok = gamma >= std::sqrt(8.0 * M) && h < 1.0 / (2.0 * gamma);

    const GradFn grad = [&](const Vec& x) { return target.gradient(x); };

    double worst_rate = 0.0;
    double worst_step = 0.0;
    for (const auto& [start_a, start_b] : starts) {
        PhaseState za = start_a;
        PhaseState zb = start_b;
        const double d0 = weighted_norm(za.x - zb.x, za.v - zb.v, res.norm);
        require(d0 > 0.0, "coupled pair must start from distinct states");

        std::vector<Vec> slots;
        GaussianNoise fresh(make_rng(rng(), 0));
        double prev = d0;
        for (int k = 0; k < n_steps; ++k) {
            slots.clear();
            RecordingNoise rec(fresh, slots);
            za = ubu_step(za, h, gamma, grad, rec);
            ReplayNoise replay(slots);
            zb = ubu_step(zb, h, gamma, grad, replay);
            const double dist = weighted_norm(za.x - zb.x, za.v - zb.v, res.norm);
            worst_step = std::max(worst_step, dist / prev);
            prev = dist;
        }
        const double pair_rate = std::pow(prev / d0, 1.0 / n_steps);
        res.pair_rates.push_back(pair_rate);
        worst_rate = std::max(worst_rate, pair_rate);
    }
    res.measured_rate = worst_rate;
    res.max_step_ratio = worst_step;
    return res;
}

ContractionResult contraction_check(const QuadraticModel& target, double h, double gamma,
                                    int n_steps, int n_pairs, Rng& rng) {
    require(n_pairs >= 1, "need at least one pair");
    const Eigen::Index d = target.dim();
    std::vector<std::pair<PhaseState, PhaseState>> starts;
    starts.reserve(static_cast<std::size_t>(n_pairs));
    for (int p = 0; p < n_pairs; ++p) {
        starts.push_back({{draw_normal_vec(rng, d), draw_normal_vec(rng, d)},
                          {draw_normal_vec(rng, d), draw_normal_vec(rng, d)}});
    }
    return contraction_check(target, h, gamma, n_steps, starts, rng);
}

}  // namespace sms
