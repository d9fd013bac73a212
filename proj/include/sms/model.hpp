#ifndef SMS_MODEL_HPP
#define SMS_MODEL_HPP

#include <memory>
#include <span>
#include <vector>

#include "sms/types.hpp"

namespace sms {

// Differentiable potential f = f0 + sum_i f_i with per-term gradient access.
// f0 is the prior (regularizer) part; the N_D data terms are indexed 0..N_D-1.
// Models are immutable after construction and safe to share across threads.
class Model {
  public:
    virtual ~Model() = default;

    virtual Eigen::Index dim() const = 0;
    virtual long num_terms() const = 0;

    virtual double prior_potential(const Vec& x) const = 0;
    virtual Vec prior_grad(const Vec& x) const = 0;
    virtual double term_potential(long i, const Vec& x) const = 0;
    virtual Vec term_grad(long i, const Vec& x) const = 0;

    // f(x) = f0(x) + sum_i f_i(x)
    virtual double potential(const Vec& x) const;
    // grad f(x) = grad f0(x) + sum_i grad f_i(x)
    virtual Vec gradient(const Vec& x) const;

    // sum_{i in indices} grad f_i(x); excludes the prior term. Subclasses
    // override to batch the computation.
    virtual Vec term_gradient_sum(const Vec& x, std::span<const long> indices) const;

    // hess f(x) * v. Analytic where available; the default is a central finite
    // difference of the gradient along v with displacement eps.
    virtual Vec hessian_vector_product(const Vec& x, const Vec& v, double eps = 1e-5) const;

  protected:
    void check_point(const Vec& x) const {
        require(x.size() == dim(), "parameter vector has wrong dimension");
    }
    void check_term(long i) const {
        require(i >= 0 && i < num_terms(), "term index out of range");
    }
    Vec fd_hessian_vector(const Vec& x, const Vec& v, double eps) const;
};

// Gaussian target N(mu, A^{-1}): f(x) = (x-mu)' A (x-mu) / 2, split into
// share_count equal shares f_i = f / N_D with f0 = 0, so the minibatch
// machinery applies to Gaussian test targets unchanged.
class QuadraticModel final : public Model {
  public:
    QuadraticModel(Mat precision, Vec mean, long share_count);

    Eigen::Index dim() const override { return mean_.size(); }
    long num_terms() const override { return shares_; }
    double prior_potential(const Vec&) const override { return 0.0; }
    Vec prior_grad(const Vec& x) const override {
        check_point(x);
        return Vec::Zero(dim());
    }
    double term_potential(long i, const Vec& x) const override;
    Vec term_grad(long i, const Vec& x) const override;
    double potential(const Vec& x) const override;
    Vec gradient(const Vec& x) const override;
    Vec term_gradient_sum(const Vec& x, std::span<const long> indices) const override;
    Vec hessian_vector_product(const Vec& x, const Vec& v, double eps = 1e-5) const override;

    const Mat& precision() const { return precision_; }
    const Vec& mean() const { return mean_; }
    double min_eigenvalue() const { return m_; }
    double max_eigenvalue() const { return M_; }

  private:
    Mat precision_;
    Vec mean_;
    long shares_;
    double m_ = 0.0;
    double M_ = 0.0;
};

// Classification models additionally expose softmax class probabilities.
class Classifier : public Model {
  public:
    // inputs: n x p feature rows; returns n x C rows of class probabilities.
    virtual Mat predict_probs(const Vec& x, const Mat& inputs) const = 0;
    virtual int num_classes() const = 0;
};

// Bayesian multinomial logistic regression. Parameters are a full C x (p+1)
// matrix (per-class weights and bias), packed row-major: for class c the
// block [c*(p+1), (c+1)*(p+1)) holds (w_c, b_c). The prior is isotropic
// Gaussian on all entries: f0(x) = ||x||^2 / (2 sigma^2).
class LogRegModel final : public Classifier {
  public:
    LogRegModel(Mat features, std::vector<int> labels, int num_classes, double prior_variance);

    Eigen::Index dim() const override { return static_cast<Eigen::Index>(classes_) * (features_.cols() + 1); }
    long num_terms() const override { return features_.rows(); }
    int num_classes() const override { return classes_; }
    Eigen::Index num_features() const { return features_.cols(); }
    double prior_variance() const { return prior_variance_; }

    double prior_potential(const Vec& x) const override;
    Vec prior_grad(const Vec& x) const override;
    double term_potential(long i, const Vec& x) const override;
    Vec term_grad(long i, const Vec& x) const override;
    double potential(const Vec& x) const override;
    Vec gradient(const Vec& x) const override;
    Vec term_gradient_sum(const Vec& x, std::span<const long> indices) const override;
    Vec hessian_vector_product(const Vec& x, const Vec& v, double eps = 1e-5) const override;

    Mat predict_probs(const Vec& x, const Mat& inputs) const override;

  private:
    // softmax probabilities for the given rows; n x C
    Mat probs_for_rows(const Vec& x, const Mat& rows) const;
    Mat features_;
    std::vector<int> labels_;  // 0-based class indices
    int classes_;
    double prior_variance_;
};

// One-hidden-layer perceptron with softplus activation and per-datum softmax
// cross-entropy terms. The Gaussian prior acts on weights only, not biases.
// Parameter packing: W1 (H x p), b1 (H), W2 (C x H), b2 (C), matrices stored
// column-major.
class MlpModel final : public Classifier {
  public:
    MlpModel(Mat features, std::vector<int> labels, int num_classes, int hidden, double prior_variance);

    Eigen::Index dim() const override {
        const Eigen::Index p = features_.cols();
        return hidden_ * p + hidden_ + static_cast<Eigen::Index>(classes_) * hidden_ + classes_;
    }
    long num_terms() const override { return features_.rows(); }
    int num_classes() const override { return classes_; }

    double prior_potential(const Vec& x) const override;
    Vec prior_grad(const Vec& x) const override;
    double term_potential(long i, const Vec& x) const override;
    Vec term_grad(long i, const Vec& x) const override;
    Vec term_gradient_sum(const Vec& x, std::span<const long> indices) const override;

    Mat predict_probs(const Vec& x, const Mat& inputs) const override;

  private:
    struct Unpacked {
        Eigen::Map<const Mat> W1;
        Eigen::Map<const Vec> b1;
        Eigen::Map<const Mat> W2;
        Eigen::Map<const Vec> b2;
    };
    Unpacked unpack(const Vec& x) const;
    Mat features_;
    std::vector<int> labels_;
    int classes_;
    int hidden_;
    double prior_variance_;
};

// Localized posterior wrapper: f*(x) = f(x) + ||x - center||^2 / (2 rho^2),
// meant to be sampled on the hypercube {x : ||x - center||_inf < rho_max}.
// The quadratic term is folded into the prior slot so per-term gradients are
// unchanged.
class LocalizedModel final : public Model {
  public:
    LocalizedModel(std::shared_ptr<const Model> inner, Vec center, double rho, double rho_max);

    Eigen::Index dim() const override { return inner_->dim(); }
    long num_terms() const override { return inner_->num_terms(); }
    double prior_potential(const Vec& x) const override;
    Vec prior_grad(const Vec& x) const override;
    double term_potential(long i, const Vec& x) const override { return inner_->term_potential(i, x); }
    Vec term_grad(long i, const Vec& x) const override { return inner_->term_grad(i, x); }
    Vec term_gradient_sum(const Vec& x, std::span<const long> indices) const override {
        return inner_->term_gradient_sum(x, indices);
    }
    Vec hessian_vector_product(const Vec& x, const Vec& v, double eps = 1e-5) const override;

    const Model& inner() const { return *inner_; }
    const Vec& center() const { return center_; }
    double rho() const { return rho_; }
    double rho_max() const { return rho_max_; }

  private:
    std::shared_ptr<const Model> inner_;
    Vec center_;
    double rho_;
    double rho_max_;
};

inline LocalizedModel localize(std::shared_ptr<const Model> inner, Vec center, double rho,
                               double rho_max) {
    return LocalizedModel(std::move(inner), std::move(center), rho, rho_max);
}

}  // namespace sms

#endif  // SMS_MODEL_HPP
