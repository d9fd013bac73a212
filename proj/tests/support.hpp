#ifndef SMS_TESTS_SUPPORT_HPP
#define SMS_TESTS_SUPPORT_HPP

#include <memory>

#include "sms/data.hpp"
#include "sms/model.hpp"
#include "sms/rng.hpp"

namespace sms::test {

// Central finite differences of the potential, the independent oracle used
// against analytic gradients.
inline Vec fd_gradient(const Model& model, const Vec& x, double eps = 1e-5) {
    Vec g(x.size());
    Vec xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double orig = x[j];
        xp[j] = orig + eps;
        const double fp = model.potential(xp);
        xp[j] = orig - eps;
        const double fm = model.potential(xp);
        xp[j] = orig;
        g[j] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

inline std::shared_ptr<LogRegModel> make_logreg(Rng& rng, long n, int p, int c,
                                                double prior_variance,
                                                double separation = 1.5) {
    Dataset data = make_synthetic_classification(rng, n, p, c, separation);
    return std::make_shared<LogRegModel>(data.features, data.labels, c, prior_variance);
}

inline std::shared_ptr<MlpModel> make_mlp(Rng& rng, long n, int p, int c, int hidden,
                                          double prior_variance) {
    Dataset data = make_synthetic_classification(rng, n, p, c, 1.5);
    return std::make_shared<MlpModel>(data.features, data.labels, c, hidden, prior_variance);
}

// f identically zero; exercises the exact-OU degeneracy of every integrator.
class ZeroModel final : public Model {
  public:
    explicit ZeroModel(Eigen::Index d) : d_(d) {}
    Eigen::Index dim() const override { return d_; }
    long num_terms() const override { return 0; }
    double prior_potential(const Vec&) const override { return 0.0; }
    Vec prior_grad(const Vec&) const override { return Vec::Zero(d_); }
    double term_potential(long, const Vec&) const override { return 0.0; }
    Vec term_grad(long, const Vec&) const override { return Vec::Zero(d_); }

  private:
    Eigen::Index d_;
};

}  // namespace sms::test

#endif
