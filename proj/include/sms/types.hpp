#ifndef SMS_TYPES_HPP
#define SMS_TYPES_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sms {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Position/velocity pair; the state of every sampler in the toolkit.
struct PhaseState {
    Vec x;
    Vec v;
};

// Thrown when a chain leaves the representable range (NaN or |coord| > 1e100).
class diverged_error : public std::runtime_error {
  public:
    diverged_error(const std::string& what, long step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    long step() const { return step_; }

  private:
    long step_;
};

// Raised by slope fits when the data cannot support a log-log regression.
class unusable_data_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Raised by the Lyapunov oracle when the one-step mean map is not contractive.
class instability_error : public std::runtime_error {
  public:
    instability_error(const std::string& what, double spectral_radius)
        : std::runtime_error(what + " (spectral radius " + std::to_string(spectral_radius) + ")"),
          rho_(spectral_radius) {}
    double spectral_radius() const { return rho_; }

  private:
    double rho_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace sms

#endif  // SMS_TYPES_HPP
