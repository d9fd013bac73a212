#include "sms/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace sms {

// --------------------------------------------------------------------------
// Plot data

void emit_plot_data(const std::vector<PlotSeries>& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    bool with_err = false;
    for (const auto& s : series) with_err = with_err || !s.err.empty();
    out << (with_err ? "series,x,y,err\n" : "series,x,y\n");
    for (const auto& s : series) {
        require(s.x.size() == s.y.size(), "plot series length mismatch");
        require(s.err.empty() || s.err.size() == s.y.size(), "plot error length mismatch");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out << s.name << "," << s.x[i] << "," << s.y[i];
            if (with_err) out << "," << (s.err.empty() ? 0.0 : s.err[i]);
            out << "\n";
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<PlotSeries> read_plot_data(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
    const bool with_err = line == "series,x,y,err";
    if (!with_err && line != "series,x,y") throw std::runtime_error(path + ": bad header");

    std::vector<PlotSeries> series;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string name, xs, ys, es;
        std::getline(ss, name, ',');
        std::getline(ss, xs, ',');
        std::getline(ss, ys, ',');
        if (with_err) std::getline(ss, es, ',');
        if (series.empty() || series.back().name != name) series.push_back({name, {}, {}, {}});
        series.back().x.push_back(std::stod(xs));
        series.back().y.push_back(std::stod(ys));
        if (with_err) series.back().err.push_back(std::stod(es));
    }
    return series;
}

// --------------------------------------------------------------------------
// Bias study

SamplerChoice parse_sampler(const std::string& name) {
    if (name == "sms-ubu") return {name, Chain::Kind::Ubu, true};
    if (name == "sg-ubu") return {name, Chain::Kind::Ubu, false};
    if (name == "sms-baoab") return {name, Chain::Kind::Baoab, true};
    if (name == "sg-baoab") return {name, Chain::Kind::Baoab, false};
    if (name == "sg-hmc") return {name, Chain::Kind::Euler, false};
    throw std::invalid_argument("unknown sampler '" + name + "'");
}

double find_stability_edge(const Model& model, const SamplerChoice& sampler,
                           const EstimatorSpec& estimator, double gamma, double h_start,
                           long probe_steps, std::uint64_t seed, const std::optional<Vec>& x0,
                           double rms_factor) {
    require(h_start > 0.0, "probe stepsize must be positive");
    require(rms_factor > 1.0, "rms factor must exceed one");
    const Vec center = x0 ? *x0 : Vec::Zero(model.dim());

    // RMS distance from the start point over the probe run; infinity on
    // divergence.
    auto probe_rms = [&](double h) {
        SamplerConfig cfg;
        cfg.h = h;
        cfg.gamma = gamma;
        cfg.steps = probe_steps;
        cfg.burn_in_fraction = 0.0;
        cfg.seed = seed;
        cfg.x0 = x0;
        cfg.summary = [&center](const Vec& x) { return (x - center).squaredNorm(); };
        try {
            const Trace t = run_chain(model, estimator, sampler.kind, cfg);
            double mean = 0.0;
            for (double v : t.summaries) mean += v;
            return std::sqrt(mean / static_cast<double>(t.summaries.size()));
        } catch (const diverged_error&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    double h = h_start;
    double base = probe_rms(h);
    int shrink = 0;
    while (!std::isfinite(base) && shrink++ < 60) {
        h /= 2.0;
        base = probe_rms(h);
    }
    if (!std::isfinite(base))
        throw std::runtime_error("no stable stepsize found for sampler " + sampler.name);

    // Doubling stops once the invariant spread inflates past rms_factor times
    // the reference run at the (safely small) starting stepsize.
    for (int i = 0; i < 60; ++i) {
        const double rms = probe_rms(2.0 * h);
        if (!std::isfinite(rms) || rms > rms_factor * base) return h;
        h *= 2.0;
    }
    return h;
}

std::pair<double, double> BiasLadder::bias_at(double h) const {
    for (std::size_t l = 0; l < curve.stepsizes.size(); ++l) {
        if (std::abs(curve.stepsizes[l] - h) <= 1e-9 * h) {
            double mean = 0.0;
            double var = 0.0;
            for (double b : curve.bias[l]) mean += b;
            mean /= static_cast<double>(curve.bias[l].size());
            for (double e : curve.std_err[l]) var += e * e;
            return {mean, std::sqrt(var) / static_cast<double>(curve.std_err[l].size())};
        }
    }
    throw std::invalid_argument("stepsize is not a ladder level");
}

const BiasLadder& BiasStudyResult::ladder(const std::string& sampler) const {
    for (const auto& l : ladders)
        if (l.sampler == sampler) return l;
    throw std::invalid_argument("no ladder for sampler '" + sampler + "'");
}

double BiasStudyResult::largest_common_h() const {
    if (ladders.empty()) return 0.0;
    double best = 0.0;
    for (double h : ladders.front().curve.stepsizes) {
        bool in_all = true;
        for (const auto& lad : ladders) {
            bool found = false;
            for (double g : lad.curve.stepsizes) {
                if (std::abs(g - h) <= 1e-9 * h) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                in_all = false;
                break;
            }
        }
        if (in_all) best = std::max(best, h);
    }
    return best;
}

BiasLadder run_bias_ladder(const Model& model, const SamplerChoice& sampler,
                           const EstimatorSpec& estimator, double h0, double gamma, int levels,
                           double epochs0, long steps_per_epoch, const std::vector<TestFn>& fns,
                           std::uint64_t seed, const std::optional<Vec>& x0) {
    require(levels >= 1, "need at least one level");
    require(steps_per_epoch >= 1, "steps per epoch must be positive");

    std::vector<std::future<LevelEstimate>> futures;
    for (int l = 0; l < levels; ++l) {
        futures.push_back(std::async(std::launch::async, [&, l] {
            CoupledLevelConfig cfg;
            cfg.kind = sampler.kind;
            cfg.estimator = estimator;
            cfg.h_coarse = h0 * std::pow(2.0, -l);
            cfg.gamma = gamma;
            const double epochs = epochs0 * std::pow(2.0, l);
            cfg.coarse_steps =
                std::max<long>(20, std::lround(epochs * static_cast<double>(steps_per_epoch)));
            cfg.seed = mix_seed(seed, 0xb1a5 + static_cast<std::uint64_t>(l));
            cfg.x0 = x0;
            return run_coupled_level(model, cfg, fns);
        }));
    }
    BiasLadder ladder;
    ladder.sampler = sampler.name;
    ladder.h0 = h0;
    for (auto& f : futures) ladder.levels.push_back(f.get());
    ladder.curve = telescope(ladder.levels);

    try {
        ladder.slope = fit_slope(ladder.curve.stepsizes, ladder.curve.mean_bias());
    } catch (const unusable_data_error&) {
        ladder.slope = std::numeric_limits<double>::quiet_NaN();
    }
    return ladder;
}

BiasStudyResult run_bias_study(const std::shared_ptr<const Classifier>& model,
                               const Dataset& test, const BiasStudyConfig& cfg) {
    require(static_cast<bool>(model), "model required");
    require(cfg.levels >= 1, "need at least one level");
    const long n_data = model->num_terms();
    require(n_data % cfg.n_minibatches == 0, "minibatch count must divide the dataset");
    const long batch = n_data / cfg.n_minibatches;

    BiasStudyResult result;

    // Anchor at the (near-)minimizer.
    AdamConfig opt;
    opt.epochs = cfg.optimizer_epochs;
    opt.batch_size = cfg.optimizer_batch > 0 ? cfg.optimizer_batch : batch;
    opt.seed = mix_seed(cfg.seed, 0x0b7);
    const Vec anchor = optimize_to_tolerance(
        *model, Vec::Zero(model->dim()), opt,
        1e-5 * std::sqrt(static_cast<double>(model->dim())));
    result.anchor = anchor;

    {
        Rng rng = make_rng(cfg.seed, 0x9e55);
        const auto pi = hessian_norm_power_iteration(*model, anchor, 200, 1e-8, rng);
        result.hessian_norm = pi.value;
    }
    result.gamma = cfg.gamma > 0.0 ? cfg.gamma : std::sqrt(8.0 * result.hessian_norm);

    // Test functions: predicted probability of the true class on fixed test
    // rows. Rows the anchor classifies confidently but not saturated respond
    // to discretization bias with one sign, so their signed average does not
    // cancel; fall back to the leading rows when too few qualify.
    std::vector<long> chosen;
    {
        const Mat anchor_probs = model->predict_probs(anchor, test.features);
        for (long j = 0; j < test.size() && static_cast<int>(chosen.size()) < cfg.n_test_fns; ++j) {
            const double p = anchor_probs(j, test.labels[static_cast<std::size_t>(j)]);
            if (p >= 0.65 && p <= 0.95) chosen.push_back(j);
        }
        for (long j = 0; j < test.size() && static_cast<int>(chosen.size()) < cfg.n_test_fns; ++j) {
            if (std::find(chosen.begin(), chosen.end(), j) == chosen.end()) chosen.push_back(j);
        }
    }
    require(!chosen.empty(), "need at least one test row");
    std::vector<TestFn> fns;
    for (long j : chosen) {
        const Mat row = test.features.row(j);
        const int label = test.labels[static_cast<std::size_t>(j)];
        fns.push_back([model, row, label](const Vec& x) {
            return model->predict_probs(x, row)(0, label);
        });
    }

    auto estimator_for = [&](const SamplerChoice& s) {
        if (s.sweep) {
            return cfg.variance_reduction ? EstimatorSpec::sweep_vr(cfg.n_minibatches, anchor)
                                          : EstimatorSpec::sweep(cfg.n_minibatches);
        }
        return cfg.variance_reduction ? EstimatorSpec::iid_vr(batch, anchor)
                                      : EstimatorSpec::iid(batch);
    };

    // Each sampler runs its ladder from its own stability edge, snapped onto
    // a shared power-of-two grid so ladders can be compared at common h.
    const double h_probe_start = 0.05 / std::sqrt(result.hessian_norm);
    for (const auto& name : cfg.samplers) {
        const SamplerChoice s = parse_sampler(name);
        double h0 = cfg.h0;
        if (h0 <= 0.0) {
            const double edge =
                find_stability_edge(*model, s, estimator_for(s), result.gamma, h_probe_start,
                                    200 * cfg.n_minibatches, mix_seed(cfg.seed, 0xede), anchor,
                                    cfg.edge_rms_factor);
            h0 = std::pow(2.0, std::floor(std::log2(edge)));
        }
        result.ladders.push_back(run_bias_ladder(
            *model, s, estimator_for(s), h0, result.gamma, cfg.levels, cfg.epochs0 * cfg.scale,
            cfg.n_minibatches, fns, mix_seed(cfg.seed, std::hash<std::string>{}(name)), anchor));
    }
    return result;
}

std::vector<PlotSeries> bias_study_plot_data(const BiasStudyResult& result) {
    std::vector<PlotSeries> series;
    for (const auto& ladder : result.ladders) {
        PlotSeries s;
        s.name = ladder.sampler;
        const std::vector<double> mean = ladder.curve.mean_bias();
        for (std::size_t l = 0; l < ladder.curve.stepsizes.size(); ++l) {
            s.x.push_back(std::log2(ladder.curve.stepsizes[l]));
            s.y.push_back(mean[l]);
            double err = 0.0;
            for (double e : ladder.curve.std_err[l]) err += e * e;
            s.err.push_back(std::sqrt(err) / static_cast<double>(ladder.curve.std_err[l].size()));
        }
        series.push_back(std::move(s));
    }
    return series;
}

// --------------------------------------------------------------------------
// Ensemble pipeline

namespace {

EnsembleMember run_member(const std::shared_ptr<const Model>& model, const EnsembleConfig& cfg,
                          std::uint64_t member_seed) {
    const Eigen::Index d = model->dim();
    Rng init_rng = make_rng(member_seed, 1);
    const Vec x_init = cfg.init_scale * draw_normal_vec(init_rng, d);

    AdamConfig train;
    train.lr0 = cfg.lr0;
    train.epochs = cfg.train_epochs;
    train.batch_size = cfg.batch_size;
    train.seed = mix_seed(member_seed, 2);
    const Vec trained = adam_optimize(*model, x_init, train);

    EnsembleMember member;
    member.swa_point = stochastic_weight_average(*model, trained, cfg.swa_epochs, cfg.swa_lr,
                                                 cfg.batch_size, mix_seed(member_seed, 3));

    const double rho_max = cfg.resolved_rho_max();
    auto localized =
        std::make_shared<LocalizedModel>(model, member.swa_point, cfg.rho, rho_max);

    const long n_minibatches = model->num_terms() / cfg.batch_size;
    SamplerConfig sampler;
    sampler.h = cfg.h;
    sampler.gamma = cfg.resolved_gamma();
    sampler.steps = cfg.sample_epochs * n_minibatches;
    sampler.burn_in_fraction = cfg.burn_in_fraction;
    sampler.seed = mix_seed(member_seed, 4);
    sampler.thin = cfg.thin;
    sampler.x0 = member.swa_point;
    sampler.reflect = Reflection{member.swa_point, rho_max};
    member.trace = run_sms_ubu(*localized, sampler, n_minibatches);

    for (const Vec& x : member.trace.samples) {
        if ((x - member.swa_point).cwiseAbs().maxCoeff() > rho_max + 1e-12)
            throw std::runtime_error("sample left the localization hypercube");
    }
    return member;
}

}  // namespace

EnsembleResult ensemble_sms_ubu(const std::shared_ptr<const Model>& model,
                                const EnsembleConfig& cfg) {
    require(static_cast<bool>(model), "model required");
    require(cfg.members >= 1, "need at least one ensemble member");
    require(model->num_terms() % cfg.batch_size == 0, "batch size must divide the dataset");

    std::vector<std::future<EnsembleMember>> futures;
    for (int m = 0; m < cfg.members; ++m) {
        const std::uint64_t member_seed = mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(m));
        futures.push_back(
            std::async(std::launch::async, [&, member_seed] { return run_member(model, cfg, member_seed); }));
    }
    EnsembleResult result;
    for (int m = 0; m < cfg.members; ++m) {
        try {
            result.members.push_back(futures[static_cast<std::size_t>(m)].get());
        } catch (const std::exception& e) {
            throw std::runtime_error("ensemble member " + std::to_string(m) +
                                     " failed: " + e.what());
        }
    }
    return result;
}

double ensemble_rhat(const std::shared_ptr<const Model>& model, const Vec& swa_point,
                     const EnsembleConfig& cfg, int n_chains, std::uint64_t seed) {
    require(n_chains >= 2, "need at least two chains");
    const double rho_max = cfg.resolved_rho_max();
    auto localized = std::make_shared<LocalizedModel>(model, swa_point, cfg.rho, rho_max);
    const long n_minibatches = model->num_terms() / cfg.batch_size;
    const double n_data = static_cast<double>(model->num_terms());

    auto run_one = [&](int c) {
        Rng perturb = make_rng(seed, 100 + static_cast<std::uint64_t>(c));
        SamplerConfig sampler;
        sampler.h = cfg.h;
        sampler.gamma = cfg.resolved_gamma();
        sampler.steps = cfg.sample_epochs * n_minibatches;
        sampler.burn_in_fraction = cfg.burn_in_fraction;
        sampler.seed = mix_seed(seed, 200 + static_cast<std::uint64_t>(c));
        sampler.thin = cfg.thin;
        sampler.x0 = swa_point + cfg.rho * draw_normal_vec(perturb, model->dim());
        sampler.reflect = Reflection{swa_point, rho_max};
        sampler.summary = [&model, n_data](const Vec& x) {
            return (model->potential(x) - model->prior_potential(x)) / n_data;
        };
        return run_sms_ubu(*localized, sampler, n_minibatches).summaries;
    };

    std::vector<std::future<std::vector<double>>> futures;
    for (int c = 0; c < n_chains; ++c)
        futures.push_back(std::async(std::launch::async, run_one, c));
    std::vector<std::vector<double>> chains;
    for (auto& f : futures) chains.push_back(f.get());
    return gelman_rubin(chains);
}

// --------------------------------------------------------------------------
// Config file and manifest

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::from_string(const std::string& text) {
    ConfigFile cf;
    std::stringstream in(text);
    std::string line;
    std::string section = "";
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw format_error("config line " + std::to_string(line_no) + ": bad section");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw format_error("config line " + std::to_string(line_no) + ": expected key = value");
        cf.sections_[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return cf;
}

ConfigFile ConfigFile::parse(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw format_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    const std::string v = get(section, key, "");
    return v.empty() ? fallback : std::stod(v);
}

long ConfigFile::get_long(const std::string& section, const std::string& key, long fallback) const {
    const std::string v = get(section, key, "");
    return v.empty() ? fallback : std::stol(v);
}

std::string content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path + " for hashing");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

void write_manifest(const std::string& output_dir,
                    const std::vector<std::pair<std::string, std::string>>& resolved,
                    const std::vector<std::string>& overridden,
                    const std::vector<std::string>& input_files) {
    std::filesystem::create_directories(output_dir);
    const std::string path = output_dir + "/manifest.txt";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# resolved configuration\n";
    for (const auto& [k, v] : resolved) out << k << " = " << v << "\n";
    if (!overridden.empty()) {
        out << "# overridden defaults\n";
        for (const auto& k : overridden) out << "override " << k << "\n";
    }
    if (!input_files.empty()) {
        out << "# inputs\n";
        for (const auto& f : input_files) out << "input " << f << " " << content_hash(f) << "\n";
    }
}

}  // namespace sms
