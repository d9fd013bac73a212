#ifndef SMS_DIAGNOSE_HPP
#define SMS_DIAGNOSE_HPP

#include <vector>

#include "sms/integrate.hpp"
#include "sms/model.hpp"
#include "sms/rng.hpp"

namespace sms {

class undefined_diagnostic_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Parameters of ||z||^2_{a,b} = ||x||^2 + 2b <x,v> + a ||v||^2, restricted to
// the norm-equivalence regime b^2 <= a/4.
struct WeightedNormParams {
    double a = 1.0;
    double b = 0.0;
};

double weighted_norm(const Vec& x, const Vec& v, const WeightedNormParams& params);

// Classic potential-scale-reduction factor over equally long scalar chains.
double gelman_rubin(const std::vector<std::vector<double>>& chains);

struct PowerIterationResult {
    double value = 0.0;  // dominant |eigenvalue| of the Hessian at x
    bool converged = false;
    int iterations = 0;
    std::vector<double> rayleigh_history;  // quotient per iterate
};

PowerIterationResult hessian_norm_power_iteration(const Model& model, const Vec& x, int max_iters,
                                                  double tol, Rng& rng, double fd_eps = 1e-5);

enum class IntegratorKind { Ubu, Baoab, Euler };

// Exact invariant covariance of an integrator's chain on a Gaussian target.
// For linear forces every sub-map is affine on (x, v), so one step is
// z' = T z + noise with noise covariance Q, and the invariant covariance is
// the fixed point Sigma = T Sigma T' + Q. Serves as the ground-truth oracle
// for invariant-measure bias on Gaussian targets.
struct LyapunovOracle {
    IntegratorKind kind = IntegratorKind::Ubu;
    Mat T;      // one-step mean map, 2d x 2d
    Mat Q;      // one-step noise covariance
    Mat sigma;  // fixed point

    Mat position_cov() const { return sigma.topLeftCorner(sigma.rows() / 2, sigma.cols() / 2); }
    double position_var(Eigen::Index j = 0) const { return sigma(j, j); }
};

LyapunovOracle lyapunov_invariant_covariance(const QuadraticModel& target, IntegratorKind kind,
                                             double h, double gamma);

struct ContractionResult {
    double measured_rate = 0.0;   // max over pairs of the per-step geometric mean ratio
    double max_step_ratio = 0.0;  // worst single-step ratio seen
    double bound = 0.0;           // 1 - m h / (8 gamma)
    bool hypotheses_ok = false;   // gamma >= sqrt(8 M) and h < 1/(2 gamma)
    WeightedNormParams norm;      // a = 1/M, b = 1/gamma
    std::vector<double> pair_rates;  // per-pair geometric mean ratios
};

// Runs synchronously coupled full-gradient UBU chain pairs from distinct
// random starts and measures the per-step contraction of their distance in
// the weighted norm with a = 1/M, b = 1/gamma. A coupling's distance upper
// bounds the Wasserstein distance, so the measured rate is a sound witness
// for the kernel's contraction bound.
ContractionResult contraction_check(const QuadraticModel& target, double h, double gamma,
                                    int n_steps, int n_pairs, Rng& rng);

// Same check from caller-supplied start pairs; pairs with zero initial
// distance are rejected.
ContractionResult contraction_check(const QuadraticModel& target, double h, double gamma,
                                    int n_steps,
                                    const std::vector<std::pair<PhaseState, PhaseState>>& starts,
                                    Rng& rng);

}  // namespace sms

#endif  // SMS_DIAGNOSE_HPP
