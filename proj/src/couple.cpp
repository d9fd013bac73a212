#include "sms/couple.hpp"

#include <cmath>

namespace sms {

namespace {

std::function<long(long)> coarse_index_map(const EstimatorSpec& spec, int ratio) {
    const long r = ratio;
    if (spec.kind == EstimatorSpec::Kind::Iid) {
        // Coarse call c shares the draw of the fine call at the same physical
        // time: fine call r*c - (r-1).
        return [r](long c) { return r * c - (r - 1); };
    }
    if (spec.kind == EstimatorSpec::Kind::Sweep) {
        // One coarse period spans r fine periods; re-draw at coarse period
        // boundaries from the shared partition stream.
        return [r](long p) { return r * p; };
    }
    return {};
}

}  // namespace

LevelEstimate run_coupled_level(const Model& model, const CoupledLevelConfig& cfg,
                                const std::vector<TestFn>& test_fns) {
    require(cfg.h_coarse > 0.0 && cfg.gamma > 0.0, "stepsize and friction must be positive");
    require(cfg.coarse_steps >= 1, "need at least one coarse step");
    require(cfg.step_ratio >= 1, "step ratio must be positive");
    require(cfg.n_chunks >= 2, "need at least two chunks");
    require(!test_fns.empty(), "need at least one test function");
    require(cfg.burn_in_fraction >= 0.0 && cfg.burn_in_fraction < 1.0,
            "burn-in fraction must lie in [0, 1)");

    const Eigen::Index d = model.dim();
    const double h_fine = cfg.h_coarse / static_cast<double>(cfg.step_ratio);
    const std::uint64_t batch_seed = mix_seed(cfg.seed, kBatchStream);

    auto fine_est =
        make_estimator(cfg.estimator, model, batch_seed, Chain::sweep_style(cfg.kind));
    auto coarse_est = make_estimator(cfg.estimator, model, batch_seed,
                                     Chain::sweep_style(cfg.kind),
                                     coarse_index_map(cfg.estimator, cfg.step_ratio));

    GaussianNoise master(make_rng(cfg.seed, kNoiseStream));
    const Vec x0 = cfg.x0 ? *cfg.x0 : Vec::Zero(d);
    const Vec v0 = master.draw(d);

    Chain fine(model, std::move(fine_est), cfg.kind, h_fine, cfg.gamma, cfg.reflect, {x0, v0});
    Chain coarse(model, std::move(coarse_est), cfg.kind, cfg.h_coarse, cfg.gamma, cfg.reflect,
                 {x0, v0});

    const long burn = static_cast<long>(cfg.burn_in_fraction * static_cast<double>(cfg.coarse_steps));
    const long kept = cfg.coarse_steps - burn;
    require(kept >= cfg.n_chunks, "too few post-burn-in steps for the requested chunks");

    const std::size_t n_fns = test_fns.size();
    const int slots = Chain::noise_slots_per_step(cfg.kind);
    const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(cfg.step_ratio));

    std::vector<std::vector<double>> chunk_sum(n_fns,
                                               std::vector<double>(cfg.n_chunks, 0.0));
    std::vector<long> chunk_count(static_cast<std::size_t>(cfg.n_chunks), 0);
    double max_dist = 0.0;

    std::vector<Vec> log;
    std::vector<Vec> aggregated(static_cast<std::size_t>(slots));
    for (long k = 1; k <= cfg.coarse_steps; ++k) {
        log.clear();
        RecordingNoise rec(master, log);
        for (int r = 0; r < cfg.step_ratio; ++r) fine.step(rec);

        for (int j = 0; j < slots; ++j) {
            Vec sum = log[static_cast<std::size_t>(j)];
            for (int r = 1; r < cfg.step_ratio; ++r)
                sum += log[static_cast<std::size_t>(r * slots + j)];
            aggregated[static_cast<std::size_t>(j)] = inv_sqrt_r * sum;
        }
        ReplayNoise replay(aggregated);
        coarse.step(replay);

        max_dist = std::max(max_dist, (coarse.state().x - fine.state().x).norm());
        if (k <= burn) continue;
        const long i = k - burn - 1;  // 0-based kept index
        const std::size_t chunk = static_cast<std::size_t>(i * cfg.n_chunks / kept);
        ++chunk_count[chunk];
        for (std::size_t g = 0; g < n_fns; ++g) {
            chunk_sum[g][chunk] += test_fns[g](coarse.state().x) - test_fns[g](fine.state().x);
        }
    }

    LevelEstimate est;
    est.h_coarse = cfg.h_coarse;
    est.coarse_steps = cfg.coarse_steps;
    est.max_coupling_distance = max_dist;
    est.delta.resize(n_fns);
    est.std_err.resize(n_fns);
    const double nk = static_cast<double>(cfg.n_chunks);
    for (std::size_t g = 0; g < n_fns; ++g) {
        std::vector<double> means(static_cast<std::size_t>(cfg.n_chunks));
        double total = 0.0;
        long count = 0;
        for (int c = 0; c < cfg.n_chunks; ++c) {
            means[static_cast<std::size_t>(c)] =
                chunk_sum[g][static_cast<std::size_t>(c)] /
                static_cast<double>(chunk_count[static_cast<std::size_t>(c)]);
            total += chunk_sum[g][static_cast<std::size_t>(c)];
            count += chunk_count[static_cast<std::size_t>(c)];
        }
        est.delta[g] = total / static_cast<double>(count);
        double mean_of_means = 0.0;
        for (double m : means) mean_of_means += m;
        mean_of_means /= nk;
        double var = 0.0;
        for (double m : means) var += (m - mean_of_means) * (m - mean_of_means);
        var /= (nk - 1.0);
        est.std_err[g] = std::sqrt(var / nk);
    }
    return est;
}

std::vector<double> BiasCurve::mean_bias() const {
    std::vector<double> out(bias.size());
    for (std::size_t l = 0; l < bias.size(); ++l) {
        double s = 0.0;
        for (double b : bias[l]) s += b;
        out[l] = s / static_cast<double>(bias[l].size());
    }
    return out;
}

BiasCurve telescope(const std::vector<LevelEstimate>& levels) {
    require(!levels.empty(), "need at least one level");
    const std::size_t n_fns = levels.front().delta.size();
    for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
        const double expected = levels[l].h_coarse / 2.0;
        require(std::abs(levels[l + 1].h_coarse - expected) <= 1e-9 * levels[l].h_coarse,
                "levels must form a halving stepsize ladder");
        require(levels[l + 1].delta.size() == n_fns, "level test-function counts differ");
    }

    BiasCurve curve;
    curve.stepsizes.resize(levels.size());
    curve.bias.assign(levels.size(), std::vector<double>(n_fns, 0.0));
    curve.std_err.assign(levels.size(), std::vector<double>(n_fns, 0.0));
    for (std::size_t l = levels.size(); l-- > 0;) {
        curve.stepsizes[l] = levels[l].h_coarse;
        for (std::size_t g = 0; g < n_fns; ++g) {
            curve.bias[l][g] = levels[l].delta[g];
            double var = levels[l].std_err[g] * levels[l].std_err[g];
            if (l + 1 < levels.size()) {
                curve.bias[l][g] += curve.bias[l + 1][g];
                var += curve.std_err[l + 1][g] * curve.std_err[l + 1][g];
            }
            curve.std_err[l][g] = std::sqrt(var);
        }
    }
    return curve;
}

double fit_slope(std::span<const double> stepsizes, std::span<const double> biases) {
    require(stepsizes.size() == biases.size(), "stepsize/bias length mismatch");
    if (stepsizes.size() < 3) throw unusable_data_error("slope fit needs at least three points");
    std::string offenders;
    const double sign = biases.front() > 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < biases.size(); ++i) {
        if (biases[i] == 0.0 || biases[i] * sign < 0.0)
            offenders += (offenders.empty() ? "" : ", ") + std::to_string(stepsizes[i]);
    }
    if (!offenders.empty())
        throw unusable_data_error("bias values change sign or vanish at h = " + offenders);

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(stepsizes.size());
    for (std::size_t i = 0; i < stepsizes.size(); ++i) {
        const double x = std::log(stepsizes[i]);
        const double y = std::log(std::abs(biases[i]));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double chunked_std(std::span<const double> series, int n_chunks) {
    require(n_chunks >= 2, "need at least two chunks");
    const long n = static_cast<long>(series.size());
    require(n >= n_chunks, "series shorter than the requested chunk count");
    std::vector<double> means(static_cast<std::size_t>(n_chunks));
    for (int c = 0; c < n_chunks; ++c) {
        const long lo = n * c / n_chunks;
        const long hi = n * (c + 1) / n_chunks;
        double s = 0.0;
        for (long i = lo; i < hi; ++i) s += series[static_cast<std::size_t>(i)];
        means[static_cast<std::size_t>(c)] = s / static_cast<double>(hi - lo);
    }
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(n_chunks);
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(n_chunks - 1);
    return std::sqrt(var / static_cast<double>(n_chunks));
}

}  // namespace sms
