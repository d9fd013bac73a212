#ifndef SMS_OPTIMIZE_HPP
#define SMS_OPTIMIZE_HPP

#include "sms/model.hpp"
#include "sms/rng.hpp"

namespace sms {

struct AdamConfig {
    double lr0 = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long epochs = 0;
    long batch_size = 0;
    std::uint64_t seed = 0;
    // lr(t) = lr0 / (1 + t / T) with T the total step count; set false for a
    // constant rate (the SWA phase).
    bool polynomial_decay = true;
};

// ADAM on minibatch potential gradients. Each epoch shuffles a fresh
// partition and visits every batch once; the batch gradient is the unbiased
// N_m-scaled block sum plus the prior. batch_size must divide num_terms.
Vec adam_optimize(const Model& model, const Vec& x0, const AdamConfig& cfg);

// Running mean of weight iterates, exposed for the SWA phase.
class SwaAccumulator {
  public:
    void add(const Vec& w) {
        if (count_ == 0)
            sum_ = w;
        else
            sum_ += w;
        ++count_;
    }
    long count() const { return count_; }
    Vec mean() const {
        require(count_ > 0, "no iterates accumulated");
        return sum_ / static_cast<double>(count_);
    }

  private:
    Vec sum_;
    long count_ = 0;
};

// Continues ADAM from start at a fixed learning rate, returning the running
// average of the iterates over the whole phase.
Vec stochastic_weight_average(const Model& model, const Vec& start, long epochs, double lr,
                              long batch_size, std::uint64_t seed);

// ADAM followed by a full-gradient backtracking descent until
// ||grad f|| < tol. Intended for convex targets where a near-exact anchor is
// needed (variance reduction).
Vec optimize_to_tolerance(const Model& model, const Vec& x0, const AdamConfig& cfg, double tol,
                          int polish_iters = 5000);

}  // namespace sms

#endif  // SMS_OPTIMIZE_HPP
