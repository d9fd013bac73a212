#include "sms/sample.hpp"

#include <cmath>
#include <fstream>

namespace sms {

bool detect_divergence(const PhaseState& state) {
    auto bad = [](const Vec& z) {
        for (Eigen::Index i = 0; i < z.size(); ++i)
            if (std::isnan(z[i]) || std::abs(z[i]) > 1e100) return true;
        return false;
    };
    return bad(state.x) || bad(state.v);
}

Chain::Chain(const Model& model, std::unique_ptr<GradientEstimator> estimator, Kind kind, double h,
             double gamma, std::optional<Reflection> reflect, PhaseState init)
    : model_(model),
      estimator_(std::move(estimator)),
      kind_(kind),
      h_(h),
      gamma_(gamma),
      reflect_(std::move(reflect)),
      state_(std::move(init)) {
    require(h_ > 0.0, "stepsize must be positive");
    require(gamma_ > 0.0, "friction must be positive");
    require(state_.x.size() == model_.dim() && state_.v.size() == model_.dim(),
            "initial state dimension mismatch");
}

void Chain::step(NoiseSource& noise) {
    const GradFn grad_at = [this](const Vec& x) { return estimator_->estimate(model_, x); };
    switch (kind_) {
        case Kind::Ubu:
            state_ = ubu_step(state_, h_, gamma_, grad_at, noise);
            break;
        case Kind::Baoab: {
            if (!cached_grad_) cached_grad_ = estimator_->estimate(model_, state_.x);
            BaoabResult r = baoab_step(state_, h_, gamma_, *cached_grad_, grad_at, noise);
            state_ = std::move(r.state);
            cached_grad_ = std::move(r.new_cached_grad);
            break;
        }
        case Kind::Euler:
            state_ = euler_step(state_, h_, gamma_, grad_at, noise);
            break;
    }
    if (reflect_) state_ = reflect_hypercube(state_, reflect_->center, reflect_->rho_max);
    ++steps_;
    if (detect_divergence(state_)) throw diverged_error("chain diverged", steps_);
}

namespace {

void validate_config(const SamplerConfig& cfg) {
    require(cfg.h > 0.0, "stepsize must be positive");
    require(cfg.gamma > 0.0, "friction must be positive");
    require(cfg.steps >= 1, "need at least one step");
    require(cfg.thin >= 1, "thinning interval must be positive");
    require(cfg.burn_in_fraction >= 0.0 && cfg.burn_in_fraction < 1.0,
            "burn-in fraction must lie in [0, 1)");
}

PhaseState initial_state(const Model& model, const SamplerConfig& cfg, NoiseSource& noise) {
    const Eigen::Index d = model.dim();
    Vec x0 = cfg.x0 ? *cfg.x0 : Vec::Zero(d);
    Vec v0 = cfg.v0 ? *cfg.v0 : noise.draw(d);
    require(x0.size() == d && v0.size() == d, "initial state dimension mismatch");
    return {std::move(x0), std::move(v0)};
}

}  // namespace

Trace run_chain(const Model& model, const EstimatorSpec& estimator, Chain::Kind kind,
                const SamplerConfig& cfg) {
    validate_config(cfg);
    GaussianNoise noise(make_rng(cfg.seed, kNoiseStream));
    auto est = make_estimator(estimator, model, mix_seed(cfg.seed, kBatchStream),
                              Chain::sweep_style(kind));
    Chain chain(model, std::move(est), kind, cfg.h, cfg.gamma, cfg.reflect,
                initial_state(model, cfg, noise));

    const long recorded_total = cfg.steps / cfg.thin;
    const long burn = static_cast<long>(cfg.burn_in_fraction * static_cast<double>(recorded_total));
    require(recorded_total - burn >= 1, "no samples remain after burn-in");

    Trace trace;
    trace.seed = cfg.seed;
    trace.samples.reserve(static_cast<std::size_t>(recorded_total - burn));
    long recorded = 0;
    for (long k = 1; k <= cfg.steps; ++k) {
        chain.step(noise);
        if (k % cfg.thin != 0) continue;
        ++recorded;
        if (recorded <= burn) continue;
        trace.samples.push_back(chain.state().x);
        if (cfg.record_potential) trace.potentials.push_back(model.potential(chain.state().x));
        if (cfg.summary) trace.summaries.push_back(cfg.summary(chain.state().x));
    }
    trace.estimator_calls = chain.estimator_calls();
    return trace;
}

Trace run_sg_ubu(const Model& model, const EstimatorSpec& estimator, const SamplerConfig& cfg) {
    require(estimator.kind != EstimatorSpec::Kind::Sweep,
            "SG-UBU takes full or i.i.d. minibatch estimators; use run_sms_ubu for sweeps");
    return run_chain(model, estimator, Chain::Kind::Ubu, cfg);
}

Trace run_sms_ubu(const Model& model, const SamplerConfig& cfg, long n_minibatches,
                  const std::optional<Vec>& vr_anchor) {
    EstimatorSpec spec = vr_anchor ? EstimatorSpec::sweep_vr(n_minibatches, *vr_anchor)
                                   : EstimatorSpec::sweep(n_minibatches);
    return run_chain(model, spec, Chain::Kind::Ubu, cfg);
}

Trace run_sg_baoab(const Model& model, const EstimatorSpec& estimator, const SamplerConfig& cfg) {
    require(estimator.kind != EstimatorSpec::Kind::Sweep,
            "SG-BAOAB takes full or i.i.d. minibatch estimators; use run_sms_baoab for sweeps");
    return run_chain(model, estimator, Chain::Kind::Baoab, cfg);
}

Trace run_sms_baoab(const Model& model, const SamplerConfig& cfg, long n_minibatches,
                    const std::optional<Vec>& vr_anchor) {
    EstimatorSpec spec = vr_anchor ? EstimatorSpec::sweep_vr(n_minibatches, *vr_anchor)
                                   : EstimatorSpec::sweep(n_minibatches);
    return run_chain(model, spec, Chain::Kind::Baoab, cfg);
}

Trace run_sg_hmc(const Model& model, const EstimatorSpec& estimator, const SamplerConfig& cfg) {
    require(estimator.kind != EstimatorSpec::Kind::Sweep,
            "SG-HMC takes full or i.i.d. minibatch estimators");
    return run_chain(model, estimator, Chain::Kind::Euler, cfg);
}

Trace run_sms_ghmc(const Model& model, const GhmcConfig& cfg) {
    require(cfg.h > 0.0, "stepsize must be positive");
    require(cfg.iterations >= 1, "need at least one iteration");
    require(cfg.refresh_alpha >= 0.0 && cfg.refresh_alpha < 1.0, "alpha must lie in [0, 1)");
    require(cfg.sweeps_per_proposal >= 1, "need at least one sweep per proposal");
    require(cfg.burn_in_fraction >= 0.0 && cfg.burn_in_fraction < 1.0,
            "burn-in fraction must lie in [0, 1)");

    const Eigen::Index d = model.dim();
    GaussianNoise noise(make_rng(cfg.seed, kNoiseStream));
    Rng mh_rng = make_rng(cfg.seed, kMhStream);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    SweepEstimator estimator(model.num_terms(), cfg.n_minibatches,
                             mix_seed(cfg.seed, kBatchStream), SweepStyle::KickCentered,
                             PriorMode::FullPriorEachStep, {}, cfg.sweeps_per_proposal);
    if (cfg.vr_anchor) estimator.set_anchor(model, *cfg.vr_anchor);

    PhaseState state{cfg.x0 ? *cfg.x0 : Vec::Zero(d), noise.draw(d)};
    const GradFn grad_at = [&](const Vec& x) { return estimator.estimate(model, x); };

    const long burn = static_cast<long>(cfg.burn_in_fraction * static_cast<double>(cfg.iterations));
    Trace trace;
    trace.seed = cfg.seed;
    trace.samples.reserve(static_cast<std::size_t>(cfg.iterations - burn));

    double current_potential = model.potential(state.x);
    for (long k = 1; k <= cfg.iterations; ++k) {
        PhaseState prop = state;
        for (int sweep = 0; sweep < 2 * cfg.sweeps_per_proposal; ++sweep) {
            for (long b = 0; b < cfg.n_minibatches; ++b) {
                prop = leapfrog_kick_drift(prop, cfg.h, grad_at);
            }
            if (detect_divergence(prop)) throw diverged_error("GHMC proposal diverged", k);
        }
        const double prop_potential = model.potential(prop.x);
        const double log_ratio = current_potential + 0.5 * state.v.squaredNorm() -
                                 prop_potential - 0.5 * prop.v.squaredNorm();
        ++trace.proposals;
        if (std::log(unif(mh_rng)) < log_ratio) {
            state = std::move(prop);
            current_potential = prop_potential;
            ++trace.accepted;
        } else {
            state.v = -state.v;
        }
        state.v = cfg.refresh_alpha * state.v +
                  std::sqrt(1.0 - cfg.refresh_alpha * cfg.refresh_alpha) * noise.draw(d);
        if (k > burn) {
            trace.samples.push_back(state.x);
            trace.velocities.push_back(state.v);
        }
    }
    trace.estimator_calls = estimator.calls();
    return trace;
}

void write_trace_csv(const Trace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    out << "sample";
    if (!trace.potentials.empty()) out << ",potential";
    if (!trace.summaries.empty()) out << ",summary";
    const Eigen::Index d = trace.samples.empty() ? 0 : trace.samples.front().size();
    for (Eigen::Index j = 0; j < d; ++j) out << ",x" << j;
    out << "\n";
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        out << i;
        if (!trace.potentials.empty()) out << "," << trace.potentials[i];
        if (!trace.summaries.empty()) out << "," << trace.summaries[i];
        for (Eigen::Index j = 0; j < d; ++j) out << "," << trace.samples[i][j];
        out << "\n";
    }
}

}  // namespace sms
