#include "sms/sgrad.hpp"

#include <algorithm>
#include <numeric>

namespace sms {

MinibatchDraw sample_iid_minibatch(Rng& rng, long n_data, long batch_size) {
    require(n_data >= 1, "dataset must be non-empty");
    require(batch_size >= 1, "batch size must be positive");
    std::uniform_int_distribution<long> dist(0, n_data - 1);
    MinibatchDraw draw(static_cast<std::size_t>(batch_size));
    for (auto& i : draw) i = dist(rng);
    return draw;
}

SweepSchedule sample_partition(Rng& rng, long n_data, long batch_size) {
    require(n_data >= 1, "dataset must be non-empty");
    require(batch_size >= 1, "batch size must be positive");
    require(n_data % batch_size == 0, "batch size must divide the dataset size");
    const long n_blocks = n_data / batch_size;

    std::vector<long> order(static_cast<std::size_t>(n_data));
    std::iota(order.begin(), order.end(), 0L);
    std::shuffle(order.begin(), order.end(), rng);

    SweepSchedule s;
    s.partition.resize(static_cast<std::size_t>(n_blocks));
    for (long b = 0; b < n_blocks; ++b) {
        auto first = order.begin() + b * batch_size;
        auto& block = s.partition[static_cast<std::size_t>(b)];
        block.assign(first, first + batch_size);
        // Blocks are sets; canonical order makes single-block sweeps reduce
        // to the full gradient bit-exactly.
        std::sort(block.begin(), block.end());
    }
    s.visit_order.reserve(static_cast<std::size_t>(2 * n_blocks));
    for (long b = 0; b < n_blocks; ++b) s.visit_order.push_back(static_cast<int>(b));
    for (long b = n_blocks - 1; b >= 0; --b) s.visit_order.push_back(static_cast<int>(b));
    return s;
}

Vec anchor_precompute(const Model& model, const Vec& anchor) {
    std::vector<long> all(static_cast<std::size_t>(model.num_terms()));
    std::iota(all.begin(), all.end(), 0L);
    return model.term_gradient_sum(anchor, all);
}

// ---------------------------------------------------------------------------
// IidEstimator

IidEstimator::IidEstimator(long n_data, long batch_size, std::uint64_t seed,
                           std::function<long(long)> index_map)
    : n_data_(n_data), batch_size_(batch_size), seed_(seed), index_map_(std::move(index_map)) {
    require(n_data_ >= 1 && batch_size_ >= 1, "invalid minibatch configuration");
}

void IidEstimator::set_anchor(const Model& model, Vec anchor) {
    anchor_full_grad_ = anchor_precompute(model, anchor);
    anchor_ = std::move(anchor);
}

Vec IidEstimator::estimate_at(const Model& model, const Vec& x, long call_index) {
    const long key = index_map_ ? index_map_(call_index) : call_index;
    Rng rng = make_rng(seed_, static_cast<std::uint64_t>(key));
    last_draw_ = sample_iid_minibatch(rng, n_data_, batch_size_);
    const double scale = static_cast<double>(n_data_) / static_cast<double>(batch_size_);
    if (anchor_) {
        return model.prior_grad(x) + anchor_full_grad_ +
               scale * (model.term_gradient_sum(x, last_draw_) -
                        model.term_gradient_sum(*anchor_, last_draw_));
    }
    return model.prior_grad(x) + scale * model.term_gradient_sum(x, last_draw_);
}

// ---------------------------------------------------------------------------
// SweepEstimator

SweepEstimator::SweepEstimator(long n_data, long n_minibatches, std::uint64_t seed,
                               SweepStyle style, PriorMode prior_mode,
                               std::function<long(long)> period_map, int sweeps_per_period)
    : n_data_(n_data),
      n_minibatches_(n_minibatches),
      batch_size_(0),
      seed_(seed),
      style_(style),
      prior_mode_(prior_mode),
      period_map_(std::move(period_map)),
      sweeps_per_period_(sweeps_per_period) {
    require(n_minibatches_ >= 1, "need at least one minibatch");
    require(n_data_ % n_minibatches_ == 0, "minibatch count must divide the dataset size");
    require(sweeps_per_period_ >= 1, "need at least one sweep per period");
    batch_size_ = n_data_ / n_minibatches_;
}

void SweepEstimator::set_anchor(const Model& model, Vec anchor) {
    anchor_full_grad_ = anchor_precompute(model, anchor);
    anchor_ = std::move(anchor);
}

long SweepEstimator::block_for_call(long call_index, long& period) const {
    const long two_nm = 2 * n_minibatches_;
    const long period_len = two_nm * sweeps_per_period_;
    if (style_ == SweepStyle::KickCentered) {
        period = (call_index - 1) / period_len;
        const long j = (call_index - 1) % two_nm;
        return j < n_minibatches_ ? j : two_nm - 1 - j;
    }
    // CacheOffset: call 1 is the initial cached gradient, block 1 of period 0.
    if (call_index == 1) {
        period = 0;
        return 0;
    }
    const long c = call_index - 2;
    period = c / period_len;
    const long j = c % two_nm + 1;  // 1..2*N_m within the sweep cycle
    if (j <= n_minibatches_ - 1) return j;
    if (j == n_minibatches_) return 0;
    return two_nm - j;
}

Vec SweepEstimator::estimate_at(const Model& model, const Vec& x, long call_index) {
    require(call_index >= 1, "call index must be positive");
    long period = 0;
    const long block = block_for_call(call_index, period);
    if (period != cached_period_) {
        const long key = period_map_ ? period_map_(period) : period;
        Rng rng = make_rng(seed_, static_cast<std::uint64_t>(key));
        schedule_ = sample_partition(rng, n_data_, batch_size_);
        cached_period_ = period;
    }
    const MinibatchDraw& draw = schedule_.partition[static_cast<std::size_t>(block)];
    last_draw_ = draw;
    last_block_ = static_cast<int>(block);

    const double nm = static_cast<double>(n_minibatches_);
    const Vec block_grad = model.term_gradient_sum(x, draw);
    if (anchor_) {
        return model.prior_grad(x) + anchor_full_grad_ +
               nm * (block_grad - model.term_gradient_sum(*anchor_, draw));
    }
    if (prior_mode_ == PriorMode::FullPriorEachStep) {
        return model.prior_grad(x) + nm * block_grad;
    }
    // Folded form: f_i <- f_i + f0/N_m under the N_m multiplier.
    return nm * (block_grad + model.prior_grad(x) / nm);
}

// ---------------------------------------------------------------------------
// EstimatorSpec

EstimatorSpec EstimatorSpec::iid(long batch_size) {
    EstimatorSpec s;
    s.kind = Kind::Iid;
    s.batch_size = batch_size;
    return s;
}

EstimatorSpec EstimatorSpec::iid_vr(long batch_size, Vec anchor) {
    EstimatorSpec s = iid(batch_size);
    s.variance_reduced = true;
    s.anchor = std::move(anchor);
    return s;
}

EstimatorSpec EstimatorSpec::sweep(long n_minibatches) {
    EstimatorSpec s;
    s.kind = Kind::Sweep;
    s.n_minibatches = n_minibatches;
    return s;
}

EstimatorSpec EstimatorSpec::sweep_vr(long n_minibatches, Vec anchor) {
    EstimatorSpec s = sweep(n_minibatches);
    s.variance_reduced = true;
    s.anchor = std::move(anchor);
    return s;
}

std::unique_ptr<GradientEstimator> make_estimator(const EstimatorSpec& spec, const Model& model,
                                                  std::uint64_t seed, SweepStyle style,
                                                  std::function<long(long)> index_map) {
    if (spec.variance_reduced && !spec.anchor)
        throw std::logic_error("variance reduction requested without an anchor point");
    switch (spec.kind) {
        case EstimatorSpec::Kind::Full:
            return std::make_unique<FullGradientEstimator>();
        case EstimatorSpec::Kind::Iid: {
            auto est = std::make_unique<IidEstimator>(model.num_terms(), spec.batch_size, seed,
                                                      std::move(index_map));
            if (spec.anchor) est->set_anchor(model, *spec.anchor);
            return est;
        }
        case EstimatorSpec::Kind::Sweep: {
            auto est = std::make_unique<SweepEstimator>(model.num_terms(), spec.n_minibatches, seed,
                                                        style, spec.prior_mode, std::move(index_map));
            if (spec.anchor) est->set_anchor(model, *spec.anchor);
            return est;
        }
    }
    throw std::logic_error("unknown estimator kind");
}

}  // namespace sms
