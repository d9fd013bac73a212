// Command-line front end: experiment subcommands driven by a key = value
// config file, writing CSV outputs plus a manifest into the output directory.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "sms/runner.hpp"
#include "sms/sample.hpp"

using namespace sms;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    double scale = 1.0;
    bool scale_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--scale", args.scale, "run-length scale factor")
        ->each([&args](const std::string&) { args.scale_set = true; });
}

// Resolved settings and override bookkeeping for the manifest.
struct Resolved {
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<std::string> overridden;
    std::vector<std::string> inputs;

    void note(const std::string& key, const std::string& value, bool overridden_flag) {
        entries.push_back({key, value});
        if (overridden_flag) overridden.push_back(key);
    }
    void note_num(const std::string& key, double value, bool overridden_flag) {
        std::ostringstream s;
        s.precision(17);
        s << value;
        note(key, s.str(), overridden_flag);
    }
};

std::shared_ptr<Classifier> build_classifier(const ConfigFile& cfg, std::uint64_t seed,
                                             Resolved& manifest, Dataset& train, Dataset& test) {
    const std::string kind = cfg.get("model", "kind", "synthetic-logreg");
    manifest.note("model.kind", kind, cfg.has("model", "kind"));
    const double prior_variance = cfg.get_double("model", "prior_variance", 1.0);
    manifest.note_num("model.prior_variance", prior_variance, cfg.has("model", "prior_variance"));

    if (kind == "synthetic-logreg" || kind == "synthetic-mlp") {
        const long n = cfg.get_long("model", "n", 1000);
        const int p = static_cast<int>(cfg.get_long("model", "p", 5));
        const int classes = static_cast<int>(cfg.get_long("model", "classes", 2));
        const double separation = cfg.get_double("model", "separation", 2.0);
        const long label_noise = cfg.get_long("model", "label_noise", 0);
        const double noise_scale = cfg.get_double("model", "noise_scale", 0.3);
        const long n_test = cfg.get_long("model", "n_test", 200);
        Rng rng = make_rng(static_cast<std::uint64_t>(cfg.get_long("model", "data_seed", 7)), 0);
        train = make_synthetic_classification(rng, n - label_noise, p, classes, separation);
        if (label_noise > 0) {
            Mat f(n, p);
            f.topRows(n - label_noise) = train.features;
            std::uniform_int_distribution<int> lab(0, classes - 1);
            for (long i = n - label_noise; i < n; ++i) {
                f.row(i) = noise_scale * draw_normal_vec(rng, p).transpose();
                train.labels.push_back(lab(rng));
            }
            train.features = std::move(f);
        }
        test = make_synthetic_classification(rng, n_test, p, classes, separation);
        manifest.note_num("model.n", static_cast<double>(n), cfg.has("model", "n"));
        if (kind == "synthetic-mlp") {
            const int hidden = static_cast<int>(cfg.get_long("model", "hidden", 8));
            return std::make_shared<MlpModel>(train.features, train.labels, classes, hidden,
                                              prior_variance);
        }
        return std::make_shared<LogRegModel>(train.features, train.labels, classes,
                                             prior_variance);
    }
    if (kind == "csv-logreg") {
        const std::string train_path = cfg.get("model", "train", "");
        const std::string test_path = cfg.get("model", "test", train_path);
        const std::string label_column = cfg.get("model", "label_column", "label");
        require(!train_path.empty(), "model.train path required for csv-logreg");
        train = load_csv(train_path, label_column);
        test = load_csv(test_path, label_column);
        manifest.inputs.push_back(train_path);
        if (test_path != train_path) manifest.inputs.push_back(test_path);
        return std::make_shared<LogRegModel>(train.features, train.labels, train.num_classes,
                                             prior_variance);
    }
    if (kind == "idx-logreg") {
        const std::string images = cfg.get("model", "images", "");
        const std::string labels = cfg.get("model", "labels", "");
        require(!images.empty() && !labels.empty(), "model.images and model.labels required");
        train = load_idx(images, labels);
        manifest.inputs.push_back(images);
        manifest.inputs.push_back(labels);
        const std::string test_images = cfg.get("model", "test_images", "");
        if (!test_images.empty()) {
            const std::string test_labels = cfg.get("model", "test_labels", "");
            test = load_idx(test_images, test_labels);
            manifest.inputs.push_back(test_images);
            manifest.inputs.push_back(test_labels);
        } else {
            test = train;
        }
        return std::make_shared<LogRegModel>(train.features, train.labels, train.num_classes,
                                             prior_variance);
    }
    throw std::invalid_argument("unknown model kind '" + kind + "'");
}

QuadraticModel build_quadratic(const ConfigFile& cfg) {
    const long dim = cfg.get_long("model", "dim", 2);
    const double min_eig = cfg.get_double("model", "min_eigenvalue", 1.0);
    const double max_eig = cfg.get_double("model", "max_eigenvalue", 1.0);
    const long shares = cfg.get_long("model", "shares", 10);
    Mat a = Mat::Zero(dim, dim);
    for (long i = 0; i < dim; ++i)
        a(i, i) = dim == 1 ? min_eig
                           : min_eig + (max_eig - min_eig) * static_cast<double>(i) /
                                           static_cast<double>(dim - 1);
    return QuadraticModel(a, Vec::Zero(dim), shares);
}

int cmd_sample(const CommonArgs& args) {
    const ConfigFile cfg = ConfigFile::parse(args.config_path);
    Resolved manifest;
    manifest.inputs.push_back(args.config_path);
    const std::uint64_t seed =
        args.seed_set ? args.seed
                      : static_cast<std::uint64_t>(cfg.get_long("experiment", "seed", 0));
    manifest.note_num("experiment.seed", static_cast<double>(seed), args.seed_set);

    SamplerConfig sampler;
    sampler.h = cfg.get_double("sampler", "h", 2.5e-4);
    sampler.gamma = cfg.get_double("sampler", "gamma", std::sqrt(50.0));
    sampler.steps = static_cast<long>(cfg.get_long("sampler", "steps", 10000) * args.scale);
    sampler.burn_in_fraction = cfg.get_double("sampler", "burn_in_fraction", 0.2);
    sampler.thin = cfg.get_long("sampler", "thin", 1);
    sampler.seed = seed;
    sampler.record_potential = cfg.get_long("sampler", "record_potential", 0) != 0;
    manifest.note_num("sampler.h", sampler.h, cfg.has("sampler", "h"));
    manifest.note_num("sampler.gamma", sampler.gamma, cfg.has("sampler", "gamma"));
    manifest.note_num("sampler.steps", static_cast<double>(sampler.steps),
                      cfg.has("sampler", "steps"));

    const std::string kind = cfg.get("sampler", "kind", "sms-ubu");
    manifest.note("sampler.kind", kind, cfg.has("sampler", "kind"));
    const long n_minibatches = cfg.get_long("sampler", "n_minibatches", 5);

    Trace trace;
    if (cfg.get("model", "kind", "") == "quadratic") {
        const QuadraticModel q = build_quadratic(cfg);
        const SamplerChoice choice = parse_sampler(kind);
        EstimatorSpec est = choice.sweep ? EstimatorSpec::sweep(n_minibatches)
                                         : EstimatorSpec::iid(q.num_terms() / n_minibatches);
        if (cfg.get_long("sampler", "full_gradient", 0) != 0) est = EstimatorSpec::full();
        trace = run_chain(q, est, choice.kind, sampler);
    } else {
        Dataset train, test;
        auto model = build_classifier(cfg, seed, manifest, train, test);
        const SamplerChoice choice = parse_sampler(kind);
        EstimatorSpec est = choice.sweep
                                ? EstimatorSpec::sweep(n_minibatches)
                                : EstimatorSpec::iid(model->num_terms() / n_minibatches);
        trace = run_chain(*model, est, choice.kind, sampler);
    }

    std::filesystem::create_directories(args.out_dir);
    write_trace_csv(trace, args.out_dir + "/trace.csv");
    write_manifest(args.out_dir, manifest.entries, manifest.overridden, manifest.inputs);
    std::cout << "wrote " << args.out_dir << "/trace.csv (" << trace.samples.size()
              << " samples)\n";
    return 0;
}

int cmd_bias_study(const CommonArgs& args) {
    const ConfigFile cfg = ConfigFile::parse(args.config_path);
    Resolved manifest;
    manifest.inputs.push_back(args.config_path);
    const std::uint64_t seed =
        args.seed_set ? args.seed
                      : static_cast<std::uint64_t>(cfg.get_long("experiment", "seed", 0));

    Dataset train, test;
    auto model = build_classifier(cfg, seed, manifest, train, test);

    BiasStudyConfig study;
    study.seed = seed;
    study.levels = static_cast<int>(cfg.get_long("study", "levels", 4));
    study.epochs0 = cfg.get_double("study", "epochs0", 400.0);
    study.scale = args.scale_set ? args.scale : cfg.get_double("study", "scale", 1.0);
    study.n_minibatches = cfg.get_long("study", "n_minibatches", 5);
    study.gamma = cfg.get_double("study", "gamma", 0.0);
    study.h0 = cfg.get_double("study", "h0", 0.0);
    study.n_test_fns = static_cast<int>(cfg.get_long("study", "n_test_fns", 20));
    study.variance_reduction = cfg.get_long("study", "variance_reduction", 1) != 0;
    study.optimizer_epochs = cfg.get_long("study", "optimizer_epochs", 200);
    if (cfg.has("study", "samplers")) {
        study.samplers.clear();
        std::stringstream ss(cfg.get("study", "samplers", ""));
        std::string name;
        while (std::getline(ss, name, ',')) study.samplers.push_back(name);
    }
    manifest.note_num("study.levels", study.levels, cfg.has("study", "levels"));
    manifest.note_num("study.epochs0", study.epochs0, cfg.has("study", "epochs0"));
    manifest.note_num("study.scale", study.scale, args.scale_set || cfg.has("study", "scale"));
    manifest.note_num("study.gamma", study.gamma, cfg.has("study", "gamma"));

    const BiasStudyResult result = run_bias_study(model, test, study);

    std::filesystem::create_directories(args.out_dir);
    emit_plot_data(bias_study_plot_data(result), args.out_dir + "/bias_curves.csv");
    {
        std::ofstream levels(args.out_dir + "/levels.csv");
        levels.precision(17);
        levels << "sampler,h,delta_mean,std_err\n";
        for (const auto& ladder : result.ladders) {
            for (const auto& level : ladder.levels) {
                double d = 0.0, e = 0.0;
                for (double v : level.delta) d += v;
                d /= static_cast<double>(level.delta.size());
                for (double s : level.std_err) e += s * s;
                e = std::sqrt(e) / static_cast<double>(level.std_err.size());
                levels << ladder.sampler << "," << level.h_coarse << "," << d << "," << e << "\n";
            }
        }
    }
    manifest.note_num("result.gamma", result.gamma, false);
    manifest.note_num("result.hessian_norm", result.hessian_norm, false);
    for (const auto& ladder : result.ladders) {
        manifest.note_num("result." + ladder.sampler + ".h0", ladder.h0, false);
        manifest.note_num("result." + ladder.sampler + ".slope", ladder.slope, false);
        std::cout << ladder.sampler << ": h0 = " << ladder.h0 << ", slope = " << ladder.slope
                  << "\n";
    }
    write_manifest(args.out_dir, manifest.entries, manifest.overridden, manifest.inputs);
    std::cout << "wrote " << args.out_dir << "/bias_curves.csv\n";
    return 0;
}

int cmd_contraction(const CommonArgs& args) {
    const ConfigFile cfg = ConfigFile::parse(args.config_path);
    Resolved manifest;
    manifest.inputs.push_back(args.config_path);
    const std::uint64_t seed =
        args.seed_set ? args.seed
                      : static_cast<std::uint64_t>(cfg.get_long("experiment", "seed", 0));
    const QuadraticModel q = build_quadratic(cfg);
    const int n_pairs = static_cast<int>(cfg.get_long("study", "pairs", 64));
    const int n_steps = static_cast<int>(cfg.get_long("study", "steps", 200) * args.scale);
    const double gamma = cfg.get_double("study", "gamma", std::sqrt(8.0 * q.max_eigenvalue()));

    std::filesystem::create_directories(args.out_dir);
    std::ofstream out(args.out_dir + "/contraction.csv");
    out.precision(17);
    out << "h,measured_rate,max_step_ratio,bound,hypotheses_ok\n";
    Rng rng = make_rng(seed, 0);
    for (const double h : {0.01, 0.1 / gamma}) {
        const auto res = contraction_check(q, h, gamma, n_steps, n_pairs, rng);
        out << h << "," << res.measured_rate << "," << res.max_step_ratio << "," << res.bound
            << "," << res.hypotheses_ok << "\n";
        std::cout << "h = " << h << ": measured " << res.measured_rate << " vs bound "
                  << res.bound << "\n";
    }
    manifest.note_num("study.gamma", gamma, cfg.has("study", "gamma"));
    write_manifest(args.out_dir, manifest.entries, manifest.overridden, manifest.inputs);
    return 0;
}

int cmd_ensemble(const CommonArgs& args) {
    const ConfigFile cfg = ConfigFile::parse(args.config_path);
    Resolved manifest;
    manifest.inputs.push_back(args.config_path);
    const std::uint64_t seed =
        args.seed_set ? args.seed
                      : static_cast<std::uint64_t>(cfg.get_long("experiment", "seed", 0));

    Dataset train, test;
    auto model = build_classifier(cfg, seed, manifest, train, test);

    EnsembleConfig ens;
    ens.seed = seed;
    ens.members = static_cast<int>(cfg.get_long("ensemble", "members", 4));
    ens.train_epochs = cfg.get_long("ensemble", "train_epochs", 15);
    ens.swa_epochs = cfg.get_long("ensemble", "swa_epochs", 5);
    ens.lr0 = cfg.get_double("ensemble", "lr0", 1e-2);
    ens.swa_lr = cfg.get_double("ensemble", "swa_lr", 1e-3);
    ens.batch_size = cfg.get_long("ensemble", "batch_size", 200);
    ens.h = cfg.get_double("ensemble", "h", 2.5e-4);
    ens.gamma = cfg.get_double("ensemble", "gamma", 0.0);
    ens.rho = cfg.get_double("ensemble", "rho", std::pow(50.0, -0.5));
    ens.rho_max = cfg.get_double("ensemble", "rho_max", 0.0);
    ens.sample_epochs = static_cast<long>(cfg.get_long("ensemble", "sample_epochs", 40) *
                                          (args.scale_set ? args.scale : 1.0));
    ens.thin = cfg.get_long("ensemble", "thin", 1);
    ens.init_scale = cfg.get_double("ensemble", "init_scale", 1.0);
    manifest.note_num("ensemble.members", ens.members, cfg.has("ensemble", "members"));
    manifest.note_num("ensemble.h", ens.h, cfg.has("ensemble", "h"));
    manifest.note_num("ensemble.rho", ens.rho, cfg.has("ensemble", "rho"));
    manifest.note_num("ensemble.gamma", ens.resolved_gamma(), cfg.has("ensemble", "gamma"));
    manifest.note_num("ensemble.rho_max", ens.resolved_rho_max(), cfg.has("ensemble", "rho_max"));

    const EnsembleResult result = ensemble_sms_ubu(model, ens);

    // posterior-predictive ensemble vs the per-member SWA points
    std::vector<Mat> member_probs;
    for (const auto& member : result.members) {
        std::vector<Mat> across;
        for (const Vec& x : member.trace.samples) across.push_back(model->predict_probs(x, test.features));
        member_probs.push_back(ensemble_average(across));
    }
    const Mat ens_probs = ensemble_average(member_probs);
    const PredictionSet ens_preds{ens_probs, test.labels};
    const PredictionSet swa_preds{model->predict_probs(result.members.front().swa_point,
                                                       test.features),
                                  test.labels};

    std::filesystem::create_directories(args.out_dir);
    std::ofstream metrics(args.out_dir + "/metrics.csv");
    metrics.precision(17);
    metrics << "metric,ensemble,swa_point\n";
    metrics << "accuracy," << accuracy(ens_preds) << "," << accuracy(swa_preds) << "\n";
    metrics << "nll," << nll(ens_preds) << "," << nll(swa_preds) << "\n";
    metrics << "ace," << ace(ens_preds) << "," << ace(swa_preds) << "\n";
    metrics << "rps," << rps(ens_preds) << "," << rps(swa_preds) << "\n";

    for (std::size_t m = 0; m < result.members.size(); ++m) {
        write_trace_csv(result.members[m].trace,
                        args.out_dir + "/member" + std::to_string(m) + ".csv");
    }
    const double rhat = ensemble_rhat(model, result.members.front().swa_point, ens, 4,
                                      mix_seed(seed, 0x9a7));
    manifest.note_num("result.rhat", rhat, false);
    write_manifest(args.out_dir, manifest.entries, manifest.overridden, manifest.inputs);
    std::cout << "ensemble NLL " << nll(ens_preds) << " vs SWA-point NLL " << nll(swa_preds)
              << "; R-hat " << rhat << "\n";
    return 0;
}

int cmd_calibrate(const CommonArgs& args) {
    const ConfigFile cfg = ConfigFile::parse(args.config_path);
    Resolved manifest;
    manifest.inputs.push_back(args.config_path);
    const std::uint64_t seed =
        args.seed_set ? args.seed
                      : static_cast<std::uint64_t>(cfg.get_long("experiment", "seed", 0));
    Dataset train, test;
    auto model = build_classifier(cfg, seed, manifest, train, test);

    const std::string weights_path = cfg.get("calibrate", "weights", "");
    require(!weights_path.empty(), "calibrate.weights CSV required (one weight vector per row)");
    manifest.inputs.push_back(weights_path);

    // one parameter vector per row, plain CSV without header
    std::vector<Mat> prob_sets;
    {
        std::ifstream in(weights_path);
        require(static_cast<bool>(in), "cannot open " + weights_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::vector<double> vals;
            std::string cell;
            while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
            require(static_cast<Eigen::Index>(vals.size()) == model->dim(),
                    "weight row dimension mismatch");
            Vec x = Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
            prob_sets.push_back(model->predict_probs(x, test.features));
        }
    }
    require(!prob_sets.empty(), "no weight rows found");
    const PredictionSet preds{ensemble_average(prob_sets), test.labels};

    std::filesystem::create_directories(args.out_dir);
    std::ofstream out(args.out_dir + "/metrics.csv");
    out.precision(17);
    out << "metric,value\n";
    out << "accuracy," << accuracy(preds) << "\n";
    out << "nll," << nll(preds) << "\n";
    out << "ace," << ace(preds) << "\n";
    out << "rps," << rps(preds) << "\n";
    write_manifest(args.out_dir, manifest.entries, manifest.overridden, manifest.inputs);
    std::cout << "wrote " << args.out_dir << "/metrics.csv over " << prob_sets.size()
              << " weight vectors\n";
    return 0;
}

int cmd_diagnose(const CommonArgs& args) {
    const ConfigFile cfg = ConfigFile::parse(args.config_path);
    Resolved manifest;
    manifest.inputs.push_back(args.config_path);
    const std::uint64_t seed =
        args.seed_set ? args.seed
                      : static_cast<std::uint64_t>(cfg.get_long("experiment", "seed", 0));

    std::filesystem::create_directories(args.out_dir);
    std::ofstream out(args.out_dir + "/diagnose.csv");
    out.precision(17);
    out << "quantity,value\n";

    if (cfg.get("model", "kind", "") == "quadratic") {
        const QuadraticModel q = build_quadratic(cfg);
        const double gamma = cfg.get_double("study", "gamma", std::sqrt(8.0 * q.max_eigenvalue()));
        const double h = cfg.get_double("study", "h", 0.05);
        for (auto [name, kind] :
             {std::pair<const char*, IntegratorKind>{"ubu", IntegratorKind::Ubu},
              {"baoab", IntegratorKind::Baoab},
              {"euler", IntegratorKind::Euler}}) {
            const auto oracle = lyapunov_invariant_covariance(q, kind, h, gamma);
            out << "invariant_position_var_" << name << "," << oracle.position_var() << "\n";
        }
        Rng rng = make_rng(seed, 1);
        const auto contraction = contraction_check(q, h, gamma, 200, 16, rng);
        out << "contraction_measured," << contraction.measured_rate << "\n";
        out << "contraction_bound," << contraction.bound << "\n";
        for (std::size_t p = 0; p < contraction.pair_rates.size(); ++p)
            out << "contraction_pair_" << p << "," << contraction.pair_rates[p] << "\n";
    } else {
        Dataset train, test;
        auto model = build_classifier(cfg, seed, manifest, train, test);
        Rng rng = make_rng(seed, 1);
        const Vec x = Vec::Zero(model->dim());
        const auto pi = hessian_norm_power_iteration(*model, x, 300, 1e-8, rng);
        out << "hessian_norm," << pi.value << "\n";
        out << "power_iterations," << pi.iterations << "\n";
        for (std::size_t it = 0; it < pi.rayleigh_history.size(); ++it)
            out << "rayleigh_" << it << "," << pi.rayleigh_history[it] << "\n";
    }
    write_manifest(args.out_dir, manifest.entries, manifest.overridden, manifest.inputs);
    std::cout << "wrote " << args.out_dir << "/diagnose.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kinetic Langevin sampling toolkit with symmetric minibatch sweeps"};
    app.require_subcommand(1);

    CommonArgs args;
    int (*handler)(const CommonArgs&) = nullptr;

    for (auto [name, desc, fn] :
         {std::tuple<const char*, const char*, int (*)(const CommonArgs&)>{
              "sample", "run one sampler and write its trace", cmd_sample},
          {"bias-study", "coupled-chain stepsize bias study", cmd_bias_study},
          {"contraction", "coupled-pair contraction measurement", cmd_contraction},
          {"ensemble", "SWA-centred localized ensemble pipeline", cmd_ensemble},
          {"calibrate", "calibration metrics for saved weight samples", cmd_calibrate},
          {"diagnose", "oracles and convergence diagnostics", cmd_diagnose}}) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        add_common(cmd, args);
        cmd->callback([&handler, fn] { handler = fn; });
    }

    CLI11_PARSE(app, argc, argv);
    try {
        return handler(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
