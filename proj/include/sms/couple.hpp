#ifndef SMS_COUPLE_HPP
#define SMS_COUPLE_HPP

#include <span>

#include "sms/sample.hpp"

namespace sms {

using TestFn = std::function<double(const Vec&)>;

// One synchronously coupled (h, h/2) pair. The fine chain takes step_ratio
// steps per coarse step; the coarse chain consumes the slot-wise aggregated
// Gaussians (xi_1 + ... + xi_r)/sqrt(r) of the fine steps it spans, and the
// minibatch stream is shared at matching physical times (i.i.d. draws by call
// index, sweep partitions by period index).
struct CoupledLevelConfig {
    Chain::Kind kind = Chain::Kind::Ubu;
    EstimatorSpec estimator;
    double h_coarse = 0.0;
    double gamma = 0.0;
    long coarse_steps = 0;
    double burn_in_fraction = 0.2;
    std::uint64_t seed = 0;
    std::optional<Reflection> reflect;
    int n_chunks = 4;
    int step_ratio = 2;  // 1 gives the degenerate identical-noise pair
    std::optional<Vec> x0;
};

// Per-stepsize-pair difference of test-function expectations with chunked
// standard errors; the input to the telescoping bias estimator.
struct LevelEstimate {
    double h_coarse = 0.0;
    std::vector<double> delta;    // mean of g(coarse) - g(fine), per test function
    std::vector<double> std_err;  // chunked standard error, per test function
    long coarse_steps = 0;
    double max_coupling_distance = 0.0;  // max ||x_coarse - x_fine|| over the run
};

LevelEstimate run_coupled_level(const Model& model, const CoupledLevelConfig& cfg,
                                const std::vector<TestFn>& test_fns);

// Cumulative bias estimates bias(h_l) = sum_{j >= l} delta_j down a halving
// stepsize ladder, assuming the finest level's bias is negligible.
struct BiasCurve {
    std::vector<double> stepsizes;
    std::vector<std::vector<double>> bias;     // [level][test function]
    std::vector<std::vector<double>> std_err;  // root-sum-square of chunk errors

    // Signed per-function biases averaged into one value per level.
    std::vector<double> mean_bias() const;
};

BiasCurve telescope(const std::vector<LevelEstimate>& levels);

// Least-squares slope of log|bias| against log h. Requires at least three
// points of one sign.
double fit_slope(std::span<const double> stepsizes, std::span<const double> biases);

// Standard error of the series mean: the standard deviation of n_chunks
// equal-chunk means divided by sqrt(n_chunks).
double chunked_std(std::span<const double> series, int n_chunks = 4);

}  // namespace sms

#endif  // SMS_COUPLE_HPP
