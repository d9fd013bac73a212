#ifndef SMS_SAMPLE_HPP
#define SMS_SAMPLE_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sms/integrate.hpp"
#include "sms/sgrad.hpp"

namespace sms {

// Hypercube constraint applied after each full integrator step.
struct Reflection {
    Vec center;
    double rho_max = 0.0;
};

// Seed streams split from SamplerConfig::seed. Noise and minibatch draws use
// independent streams so single-batch sweeps are bit-identical to their
// full-gradient counterparts under a shared seed.
enum SeedStream : std::uint64_t { kNoiseStream = 1, kBatchStream = 2, kMhStream = 3 };

struct SamplerConfig {
    double h = 0.0;
    double gamma = 0.0;
    long steps = 0;
    double burn_in_fraction = 0.2;
    std::uint64_t seed = 0;
    long thin = 1;
    std::optional<Reflection> reflect;
    bool record_potential = false;
    std::function<double(const Vec&)> summary;  // recorded per kept sample when set
    std::optional<Vec> x0;                      // default: origin
    std::optional<Vec> v0;                      // default: N(0, I) from the noise stream
};

struct Trace {
    std::vector<Vec> samples;
    std::vector<double> potentials;  // parallel to samples when recorded
    std::vector<double> summaries;   // parallel to samples when a summary fn is set
    std::vector<Vec> velocities;     // GHMC only: post-refresh velocities
    long accepted = 0;               // GHMC only
    long proposals = 0;              // GHMC only
    std::uint64_t seed = 0;
    long estimator_calls = 0;

    double acceptance_rate() const {
        return proposals > 0 ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
    }
};

// True iff any coordinate of x or v is NaN or exceeds 1e100 in magnitude.
bool detect_divergence(const PhaseState& state);

// One sampler instance: an integrator composed with a gradient estimator plus
// all cursor state. Confine an instance to a single thread.
class Chain {
  public:
    enum class Kind { Ubu, Baoab, Euler };

    static SweepStyle sweep_style(Kind kind) {
        return kind == Kind::Baoab ? SweepStyle::CacheOffset : SweepStyle::KickCentered;
    }
    static int noise_slots_per_step(Kind kind) { return kind == Kind::Ubu ? 4 : 1; }

    Chain(const Model& model, std::unique_ptr<GradientEstimator> estimator, Kind kind, double h,
          double gamma, std::optional<Reflection> reflect, PhaseState init);

    // Advance one step; throws diverged_error on NaN/overflow.
    void step(NoiseSource& noise);

    const PhaseState& state() const { return state_; }
    long steps_taken() const { return steps_; }
    long estimator_calls() const { return estimator_->calls(); }
    const GradientEstimator& estimator() const { return *estimator_; }
    Kind kind() const { return kind_; }

  private:
    const Model& model_;
    std::unique_ptr<GradientEstimator> estimator_;
    Kind kind_;
    double h_;
    double gamma_;
    std::optional<Reflection> reflect_;
    PhaseState state_;
    std::optional<Vec> cached_grad_;  // BAOAB one-step-delayed cache
    long steps_ = 0;
};

// Shared driver core: K steps of the given integrator/estimator combination,
// recording every thin-th state and discarding the burn-in prefix.
Trace run_chain(const Model& model, const EstimatorSpec& estimator, Chain::Kind kind,
                const SamplerConfig& cfg);

// Stochastic gradient UBU; estimator kind must be Full or Iid.
Trace run_sg_ubu(const Model& model, const EstimatorSpec& estimator, const SamplerConfig& cfg);

// Symmetric minibatch splitting UBU: palindromic sweeps over a fresh random
// partition each period, every kick scaled by N_m, one U-B-U step per kick.
Trace run_sms_ubu(const Model& model, const SamplerConfig& cfg, long n_minibatches,
                  const std::optional<Vec>& vr_anchor = {});

Trace run_sg_baoab(const Model& model, const EstimatorSpec& estimator, const SamplerConfig& cfg);

// SMS-BAOAB with the cross-period gradient cache: the last backward-sweep
// gradient seeds the next period's first half kick.
Trace run_sms_baoab(const Model& model, const SamplerConfig& cfg, long n_minibatches,
                    const std::optional<Vec>& vr_anchor = {});

// Euler-Maruyama discretization with stochastic gradients (SG-HMC).
Trace run_sg_hmc(const Model& model, const EstimatorSpec& estimator, const SamplerConfig& cfg);

struct GhmcConfig {
    double h = 0.0;
    long n_minibatches = 1;
    int sweeps_per_proposal = 10;  // L
    double refresh_alpha = 0.7;    // partial refreshment in [0, 1)
    long iterations = 0;           // outer accept/reject iterations
    std::uint64_t seed = 0;
    double burn_in_fraction = 0.2;
    std::optional<Vec> x0;
    std::optional<Vec> vr_anchor;
};

// Metropolised symmetric minibatch splitting generalized HMC: L palindromic
// leapfrog sweeps per proposal, exact-potential accept/reject with velocity
// flip on rejection, then partial velocity refreshment.
Trace run_sms_ghmc(const Model& model, const GhmcConfig& cfg);

// One row per sample: step index, optional potential/summary columns, then
// the coordinates.
void write_trace_csv(const Trace& trace, const std::string& path);

}  // namespace sms

#endif  // SMS_SAMPLE_HPP
