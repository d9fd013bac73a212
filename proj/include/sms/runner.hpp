#ifndef SMS_RUNNER_HPP
#define SMS_RUNNER_HPP

#include <map>
#include <memory>

#include "sms/calibrate.hpp"
#include "sms/couple.hpp"
#include "sms/data.hpp"
#include "sms/diagnose.hpp"
#include "sms/optimize.hpp"

namespace sms {

// --------------------------------------------------------------------------
// Plot data

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> err;  // empty when no error bars
};

// Tidy CSV (series,x,y,err) with deterministic column order; the err column
// is present iff any series carries errors.
void emit_plot_data(const std::vector<PlotSeries>& series, const std::string& path);
std::vector<PlotSeries> read_plot_data(const std::string& path);

// --------------------------------------------------------------------------
// Bias study (coupled-chain telescoping estimate per sampler)

struct SamplerChoice {
    std::string name;  // "sms-ubu", "sg-ubu", "sms-baoab", "sg-baoab", "sg-hmc"
    Chain::Kind kind = Chain::Kind::Ubu;
    bool sweep = false;  // symmetric minibatch sweeps vs i.i.d. minibatches
};

SamplerChoice parse_sampler(const std::string& name);

struct BiasStudyConfig {
    std::vector<std::string> samplers = {"sms-ubu", "sg-ubu", "sms-baoab", "sg-hmc"};
    double h0 = 0.0;  // 0: probe each sampler's empirical stability edge
    int levels = 4;
    double epochs0 = 400.0;  // level l runs epochs0 * 2^l data passes
    double scale = 1.0;      // desk-scale multiplier on run lengths
    long n_minibatches = 5;
    double gamma = 0.0;  // 0: sqrt(8 * Hessian norm at the anchor)
    int n_test_fns = 20;
    bool variance_reduction = true;
    std::uint64_t seed = 0;
    long optimizer_epochs = 200;
    long optimizer_batch = 0;         // 0: one batch per sweep block
    double edge_rms_factor = 2.0;     // probe guard: allowed total RMS inflation
};

struct BiasLadder {
    std::string sampler;
    double h0 = 0.0;
    std::vector<LevelEstimate> levels;
    BiasCurve curve;
    double slope = 0.0;  // fit of mean signed bias vs h (NaN when unusable)

    // Signed mean bias and its standard error at stepsize h (must be a ladder
    // level).
    std::pair<double, double> bias_at(double h) const;
};

struct BiasStudyResult {
    std::vector<BiasLadder> ladders;
    double gamma = 0.0;
    double hessian_norm = 0.0;
    Vec anchor;

    const BiasLadder& ladder(const std::string& sampler) const;
    // Largest stepsize present in every ladder (0 when the ladders are
    // disjoint).
    double largest_common_h() const;
};

// Empirical stability edge: starting from a safely small h, doubles the
// stepsize while the probe chain neither overflows nor inflates its RMS
// distance from the start point by more than rms_factor relative to the
// reference run at the starting stepsize. The guard catches divergence as
// well as the bounded-but-corrupted regimes that saturating gradients and
// strong friction allow.
double find_stability_edge(const Model& model, const SamplerChoice& sampler,
                           const EstimatorSpec& estimator, double gamma, double h_start,
                           long probe_steps, std::uint64_t seed, const std::optional<Vec>& x0,
                           double rms_factor = 2.0);

// One sampler's halving ladder of coupled levels, telescoped into a bias
// curve. Levels run concurrently.
BiasLadder run_bias_ladder(const Model& model, const SamplerChoice& sampler,
                           const EstimatorSpec& estimator, double h0, double gamma, int levels,
                           double epochs0, long steps_per_epoch, const std::vector<TestFn>& fns,
                           std::uint64_t seed, const std::optional<Vec>& x0);

// Full protocol: optimize to the anchor, build variance-reduced estimators,
// run every requested sampler's ladder, telescope. Test functions are the
// predicted probabilities of the true class on the first n_test_fns test
// rows.
BiasStudyResult run_bias_study(const std::shared_ptr<const Classifier>& model,
                               const Dataset& test, const BiasStudyConfig& cfg);

std::vector<PlotSeries> bias_study_plot_data(const BiasStudyResult& result);

// --------------------------------------------------------------------------
// Ensemble pipeline (SWA-centred localized sampling)

struct EnsembleConfig {
    int members = 4;
    long train_epochs = 15;
    long swa_epochs = 5;
    double lr0 = 1e-2;
    double swa_lr = 1e-3;
    long batch_size = 200;
    double h = 2.5e-4;
    double gamma = 0.0;     // 0: 1/rho
    double rho = 0.141421356237309515;  // 50^{-1/2}
    double rho_max = 0.0;   // 0: 6 rho
    long sample_epochs = 40;
    double burn_in_fraction = 0.25;  // 10 of 40 sampling epochs
    long thin = 1;
    double init_scale = 1.0;
    std::uint64_t seed = 0;

    double resolved_gamma() const { return gamma > 0.0 ? gamma : 1.0 / rho; }
    double resolved_rho_max() const { return rho_max > 0.0 ? rho_max : 6.0 * rho; }
};

struct EnsembleMember {
    Vec swa_point;
    Trace trace;
};

struct EnsembleResult {
    std::vector<EnsembleMember> members;
};

// Per member: random init -> ADAM(train_epochs, decaying) -> SWA(swa_epochs)
// -> x* -> localized posterior -> SMS-UBU started at x* with hypercube
// bounces. Members run concurrently on disjoint seed streams.
EnsembleResult ensemble_sms_ubu(const std::shared_ptr<const Model>& model,
                                const EnsembleConfig& cfg);

// Figure-4-style mixing check: n_chains SMS-UBU runs from Gaussian
// perturbations of one SWA point, R-hat of the mean data-term summary.
double ensemble_rhat(const std::shared_ptr<const Model>& model, const Vec& swa_point,
                     const EnsembleConfig& cfg, int n_chains, std::uint64_t seed);

// --------------------------------------------------------------------------
// Config file (key = value sections) and manifest

class ConfigFile {
  public:
    static ConfigFile parse(const std::string& path);
    static ConfigFile from_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_long(const std::string& section, const std::string& key, long fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

// FNV-1a 64-bit content hash, hex-encoded; identifies input files in the
// manifest.
std::string content_hash(const std::string& path);

// Writes resolved configuration (flagging overridden defaults) plus input
// hashes into <output_dir>/manifest.txt.
void write_manifest(const std::string& output_dir,
                    const std::vector<std::pair<std::string, std::string>>& resolved,
                    const std::vector<std::string>& overridden,
                    const std::vector<std::string>& input_files);

}  // namespace sms

#endif  // SMS_RUNNER_HPP
