#include "sms/optimize.hpp"

#include <cmath>

#include "sms/sgrad.hpp"

namespace sms {

namespace {

// Shared ADAM loop; calls on_iterate with each post-update point.
Vec adam_loop(const Model& model, const Vec& x0, const AdamConfig& cfg,
              const std::function<void(const Vec&)>& on_iterate) {
    require(cfg.epochs >= 0, "epoch count must be non-negative");
    require(cfg.batch_size >= 1, "batch size must be positive");
    require(model.num_terms() % cfg.batch_size == 0, "batch size must divide the dataset");
    require(x0.size() == model.dim(), "initial point dimension mismatch");

    const long n_batches = model.num_terms() / cfg.batch_size;
    const double nm = static_cast<double>(n_batches);
    const long total_steps = cfg.epochs * n_batches;

    Vec x = x0;
    Vec m = Vec::Zero(x.size());
    Vec v = Vec::Zero(x.size());
    Rng rng = make_rng(cfg.seed, 0xada0);
    long t = 0;
    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        const SweepSchedule sched = sample_partition(rng, model.num_terms(), cfg.batch_size);
        for (long b = 0; b < n_batches; ++b) {
            ++t;
            const Vec g = model.prior_grad(x) + nm * model.term_gradient_sum(x, sched.partition[b]);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
            // power-one decay reaching lr0/10 at the end of the run
            const double lr = cfg.polynomial_decay
                                  ? cfg.lr0 / (1.0 + 9.0 * static_cast<double>(t) /
                                                         static_cast<double>(total_steps))
                                  : cfg.lr0;
            x -= lr * (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + cfg.eps).matrix());
            for (Eigen::Index j = 0; j < x.size(); ++j)
                if (std::isnan(x[j]) || std::abs(x[j]) > 1e100)
                    throw diverged_error("optimizer diverged", t);
            if (on_iterate) on_iterate(x);
        }
    }
    return x;
}

}  // namespace

Vec adam_optimize(const Model& model, const Vec& x0, const AdamConfig& cfg) {
    return adam_loop(model, x0, cfg, {});
}

Vec stochastic_weight_average(const Model& model, const Vec& start, long epochs, double lr,
                              long batch_size, std::uint64_t seed) {
    require(epochs >= 1, "SWA needs at least one epoch");
    AdamConfig cfg;
    cfg.lr0 = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    cfg.polynomial_decay = false;
    SwaAccumulator acc;
    adam_loop(model, start, cfg, [&acc](const Vec& w) { acc.add(w); });
    if (acc.count() == 0) return start;  // lr irrelevant; zero steps
    return acc.mean();
}

Vec optimize_to_tolerance(const Model& model, const Vec& x0, const AdamConfig& cfg, double tol,
                          int polish_iters) {
    Vec x = adam_optimize(model, x0, cfg);
    double step = 1.0;
    Vec g = model.gradient(x);
    double f = model.potential(x);
    for (int it = 0; it < polish_iters && g.norm() >= tol; ++it) {
        Vec trial = x - step * g;
        double f_trial = model.potential(trial);
        int backtracks = 0;
        while (f_trial > f - 0.5 * step * g.squaredNorm() && backtracks < 60) {
            step *= 0.5;
            trial = x - step * g;
            f_trial = model.potential(trial);
            ++backtracks;
        }
        x = std::move(trial);
        f = f_trial;
        g = model.gradient(x);
        step = std::min(step * 2.0, 1e6);
    }
    return x;
}

}  // namespace sms
