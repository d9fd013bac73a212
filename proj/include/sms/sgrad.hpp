#ifndef SMS_SGRAD_HPP
#define SMS_SGRAD_HPP

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "sms/model.hpp"
#include "sms/rng.hpp"

namespace sms {

// Indices into a model's data terms. Partition-derived draws are distinct;
// with-replacement draws may repeat.
using MinibatchDraw = std::vector<long>;

// One period of the symmetric minibatch sweep: a random partition of the
// dataset into N_m blocks of size N_b, visited forward then in reverse.
struct SweepSchedule {
    std::vector<MinibatchDraw> partition;  // disjoint blocks covering 0..N_D-1
    std::vector<int> visit_order;          // palindrome (0,...,N_m-1,N_m-1,...,0)

    long n_minibatches() const { return static_cast<long>(partition.size()); }
};

// batch_size uniform independent indices in {0..n_data-1}, with replacement.
MinibatchDraw sample_iid_minibatch(Rng& rng, long n_data, long batch_size);

// Uniformly random partition by shuffling {0..n_data-1} and slicing into
// n_data/batch_size blocks. batch_size must divide n_data.
SweepSchedule sample_partition(Rng& rng, long n_data, long batch_size);

// How the prior gradient enters a sweep kick. Both conventions produce the
// same value: folding f0/N_m into each block and applying the N_m multiplier
// is the same as adding the full prior gradient once per kick.
enum class PriorMode { FullPriorEachStep, PriorSplitAcrossSweep };

// Which call-order a sweep estimator serves. KickCentered is the UBU-style
// order (block k at step k of the palindrome). CacheOffset is the BAOAB-style
// order where call 1 is the cached initial gradient with block 1 and each
// period's fresh evaluations run (2,...,N_m,1,N_m,...,2,1).
enum class SweepStyle { KickCentered, CacheOffset };

// Strategy producing (possibly stochastic) estimates of grad f. Estimators
// derive all randomness from a construction seed keyed by call index, so a
// chain is reproducible from its seed and coupled chains can share draws at
// matching physical times via an index map. Instances hold cursor state and
// must be confined to one chain's thread.
class GradientEstimator {
  public:
    virtual ~GradientEstimator() = default;

    // Advance the cursor and estimate grad f(x).
    Vec estimate(const Model& model, const Vec& x) { return estimate_at(model, x, ++calls_); }

    // Estimate for an explicit 1-based call index (random access; does not
    // move the cursor).
    virtual Vec estimate_at(const Model& model, const Vec& x, long call_index) = 0;

    long calls() const { return calls_; }
    const MinibatchDraw& last_draw() const { return last_draw_; }
    // Block index of the last sweep kick; -1 for non-sweep estimators.
    virtual int last_block() const { return -1; }

  protected:
    long calls_ = 0;
    MinibatchDraw last_draw_;
};

class FullGradientEstimator final : public GradientEstimator {
  public:
    Vec estimate_at(const Model& model, const Vec& x, long) override {
        last_draw_.clear();
        return model.gradient(x);
    }
};

// sum_{i=0}^{N_D-1} grad f_i(anchor); the cached full-pass term of the
// variance-reduced estimator.
Vec anchor_precompute(const Model& model, const Vec& anchor);

// I.i.d.-with-replacement minibatch estimator, optionally variance-reduced
// around an anchor point:
//   plain: grad f0(x) + (N_D/N_b) sum_{i in w} grad f_i(x)
//   anchored: grad f0(x) + sum_i grad f_i(xh)
//             + (N_D/N_b) sum_{i in w} [grad f_i(x) - grad f_i(xh)]
class IidEstimator final : public GradientEstimator {
  public:
    IidEstimator(long n_data, long batch_size, std::uint64_t seed,
                 std::function<long(long)> index_map = {});

    void set_anchor(const Model& model, Vec anchor);

    Vec estimate_at(const Model& model, const Vec& x, long call_index) override;

  private:
    long n_data_;
    long batch_size_;
    std::uint64_t seed_;
    std::function<long(long)> index_map_;
    std::optional<Vec> anchor_;
    Vec anchor_full_grad_;
};

// Symmetric-sweep kick estimator: block gradients scaled by N_m, partitions
// resampled once per 2*N_m-call period. Optionally variance-reduced with the
// N_m multiplier applied to the anchored difference.
class SweepEstimator final : public GradientEstimator {
  public:
    // sweeps_per_period > 1 keeps one partition alive for that many
    // consecutive forward/backward sweeps (the GHMC proposal reuses its
    // partition for all L sweeps).
    SweepEstimator(long n_data, long n_minibatches, std::uint64_t seed,
                   SweepStyle style = SweepStyle::KickCentered,
                   PriorMode prior_mode = PriorMode::FullPriorEachStep,
                   std::function<long(long)> period_map = {}, int sweeps_per_period = 1);

    void set_anchor(const Model& model, Vec anchor);

    Vec estimate_at(const Model& model, const Vec& x, long call_index) override;
    int last_block() const override { return last_block_; }
    const SweepSchedule& current_schedule() const { return schedule_; }

  private:
    long block_for_call(long call_index, long& period) const;

    long n_data_;
    long n_minibatches_;
    long batch_size_;
    std::uint64_t seed_;
    SweepStyle style_;
    PriorMode prior_mode_;
    std::function<long(long)> period_map_;
    int sweeps_per_period_ = 1;
    std::optional<Vec> anchor_;
    Vec anchor_full_grad_;
    SweepSchedule schedule_;
    long cached_period_ = -1;
    int last_block_ = -1;
};

// Declarative estimator choice used by drivers and experiment configs.
struct EstimatorSpec {
    enum class Kind { Full, Iid, Sweep } kind = Kind::Full;
    long batch_size = 0;      // Iid
    long n_minibatches = 0;   // Sweep
    PriorMode prior_mode = PriorMode::FullPriorEachStep;
    std::optional<Vec> anchor;  // enables variance reduction when present
    bool variance_reduced = false;

    static EstimatorSpec full() { return {}; }
    static EstimatorSpec iid(long batch_size);
    static EstimatorSpec iid_vr(long batch_size, Vec anchor);
    static EstimatorSpec sweep(long n_minibatches);
    static EstimatorSpec sweep_vr(long n_minibatches, Vec anchor);
};

// Builds the estimator for one chain. seed keys all minibatch randomness;
// index_map remaps call/period indices for coupled chains (identity when
// empty). Throws std::logic_error if variance reduction is requested without
// an anchor.
std::unique_ptr<GradientEstimator> make_estimator(const EstimatorSpec& spec, const Model& model,
                                                  std::uint64_t seed, SweepStyle style,
                                                  std::function<long(long)> index_map = {});

}  // namespace sms

#endif  // SMS_SGRAD_HPP
