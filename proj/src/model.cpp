#include "sms/model.hpp"

#include <cmath>

namespace sms {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<const RowMat>;

// Row-wise softmax with max subtraction.
Mat softmax_rows(Mat logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - m).exp();
        logits.row(r) /= logits.row(r).sum();
    }
    return logits;
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

double softplus(double u) {
    if (u > 30.0) return u;
    if (u < -30.0) return std::exp(u);
    return std::log1p(std::exp(u));
}

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

}  // namespace

double Model::potential(const Vec& x) const {
    check_point(x);
    double f = prior_potential(x);
    for (long i = 0; i < num_terms(); ++i) f += term_potential(i, x);
    return f;
}

Vec Model::gradient(const Vec& x) const {
    check_point(x);
    Vec g = prior_grad(x);
    for (long i = 0; i < num_terms(); ++i) g += term_grad(i, x);
    return g;
}

Vec Model::term_gradient_sum(const Vec& x, std::span<const long> indices) const {
    check_point(x);
    Vec g = Vec::Zero(dim());
    for (long i : indices) {
        check_term(i);
        g += term_grad(i, x);
    }
    return g;
}

Vec Model::fd_hessian_vector(const Vec& x, const Vec& v, double eps) const {
    require(eps > 0.0, "finite-difference displacement must be positive");
    const double nv = v.norm();
    if (nv == 0.0) return Vec::Zero(dim());
    const Vec dir = v / nv;
    return (gradient(x + eps * dir) - gradient(x - eps * dir)) * (nv / (2.0 * eps));
}

Vec Model::hessian_vector_product(const Vec& x, const Vec& v, double eps) const {
    check_point(x);
    check_point(v);
    return fd_hessian_vector(x, v, eps);
}

// ---------------------------------------------------------------------------
// QuadraticModel

QuadraticModel::QuadraticModel(Mat precision, Vec mean, long share_count)
    : precision_(std::move(precision)), mean_(std::move(mean)), shares_(share_count) {
    require(precision_.rows() == precision_.cols(), "precision matrix must be square");
    require(precision_.rows() == mean_.size(), "precision/mean dimension mismatch");
    require(shares_ >= 1, "share count must be positive");
    const double asym = (precision_ - precision_.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-12 * std::max(1.0, precision_.cwiseAbs().maxCoeff()),
            "precision matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(precision_);
    m_ = es.eigenvalues().minCoeff();
    M_ = es.eigenvalues().maxCoeff();
    require(m_ > 0.0, "precision matrix must be positive definite");
}

double QuadraticModel::potential(const Vec& x) const {
    check_point(x);
    const Vec r = x - mean_;
    return 0.5 * r.dot(precision_ * r);
}

Vec QuadraticModel::gradient(const Vec& x) const {
    check_point(x);
    return precision_ * (x - mean_);
}

double QuadraticModel::term_potential(long i, const Vec& x) const {
    check_term(i);
    return potential(x) / static_cast<double>(shares_);
}

Vec QuadraticModel::term_grad(long i, const Vec& x) const {
    check_term(i);
    return gradient(x) / static_cast<double>(shares_);
}

Vec QuadraticModel::term_gradient_sum(const Vec& x, std::span<const long> indices) const {
    check_point(x);
    for (long i : indices) check_term(i);
    const double w = static_cast<double>(indices.size()) / static_cast<double>(shares_);
    return w * gradient(x);
}

Vec QuadraticModel::hessian_vector_product(const Vec& x, const Vec& v, double eps) const {
    check_point(x);
    check_point(v);
    require(eps > 0.0, "finite-difference displacement must be positive");
    return precision_ * v;
}

// ---------------------------------------------------------------------------
// LogRegModel

LogRegModel::LogRegModel(Mat features, std::vector<int> labels, int num_classes,
                         double prior_variance)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      classes_(num_classes),
      prior_variance_(prior_variance) {
    require(classes_ >= 2, "classification needs at least two classes");
    require(prior_variance_ > 0.0, "prior variance must be positive");
    require(static_cast<long>(labels_.size()) == features_.rows(), "feature/label count mismatch");
    for (int y : labels_) require(y >= 0 && y < classes_, "label out of range");
}

double LogRegModel::prior_potential(const Vec& x) const {
    check_point(x);
    return x.squaredNorm() / (2.0 * prior_variance_);
}

Vec LogRegModel::prior_grad(const Vec& x) const {
    check_point(x);
    return x / prior_variance_;
}

Mat LogRegModel::probs_for_rows(const Vec& x, const Mat& rows) const {
    const Eigen::Index p = features_.cols();
    RowMap W(x.data(), classes_, p + 1);
    Mat logits = rows * W.leftCols(p).transpose();
    logits.rowwise() += W.col(p).transpose();
    return softmax_rows(std::move(logits));
}

double LogRegModel::term_potential(long i, const Vec& x) const {
    check_point(x);
    check_term(i);
    const Eigen::Index p = features_.cols();
    RowMap W(x.data(), classes_, p + 1);
    Eigen::RowVectorXd z = features_.row(i) * W.leftCols(p).transpose() + W.col(p).transpose();
    return log_sum_exp(z) - z[labels_[static_cast<std::size_t>(i)]];
}

Vec LogRegModel::term_grad(long i, const Vec& x) const {
    const long idx[1] = {i};
    return term_gradient_sum(x, idx);
}

Vec LogRegModel::term_gradient_sum(const Vec& x, std::span<const long> indices) const {
    check_point(x);
    const Eigen::Index p = features_.cols();
    const Eigen::Index n = static_cast<Eigen::Index>(indices.size());
    Mat rows(n, p);
    for (Eigen::Index k = 0; k < n; ++k) {
        check_term(indices[static_cast<std::size_t>(k)]);
        rows.row(k) = features_.row(indices[static_cast<std::size_t>(k)]);
    }
    Mat resid = probs_for_rows(x, rows);  // n x C
    for (Eigen::Index k = 0; k < n; ++k)
        resid(k, labels_[static_cast<std::size_t>(indices[static_cast<std::size_t>(k)])]) -= 1.0;

    RowMat grad(classes_, p + 1);
    grad.leftCols(p) = resid.transpose() * rows;
    grad.col(p) = resid.colwise().sum().transpose();
    return Eigen::Map<const Vec>(grad.data(), dim());
}

double LogRegModel::potential(const Vec& x) const {
    check_point(x);
    const Eigen::Index p = features_.cols();
    RowMap W(x.data(), classes_, p + 1);
    Mat logits = features_ * W.leftCols(p).transpose();
    logits.rowwise() += W.col(p).transpose();
    double f = prior_potential(x);
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        f += log_sum_exp(logits.row(i)) - logits(i, labels_[static_cast<std::size_t>(i)]);
    return f;
}

Vec LogRegModel::gradient(const Vec& x) const {
    check_point(x);
    const Eigen::Index p = features_.cols();
    Mat resid = probs_for_rows(x, features_);
    for (Eigen::Index i = 0; i < features_.rows(); ++i)
        resid(i, labels_[static_cast<std::size_t>(i)]) -= 1.0;
    RowMat grad(classes_, p + 1);
    grad.leftCols(p) = resid.transpose() * features_;
    grad.col(p) = resid.colwise().sum().transpose();
    return Eigen::Map<const Vec>(grad.data(), dim()) + prior_grad(x);
}

Vec LogRegModel::hessian_vector_product(const Vec& x, const Vec& v, double eps) const {
    check_point(x);
    check_point(v);
    require(eps > 0.0, "finite-difference displacement must be positive");
    const Eigen::Index p = features_.cols();
    RowMap V(v.data(), classes_, p + 1);
    Mat P = probs_for_rows(x, features_);                       // n x C
    Mat T = features_ * V.leftCols(p).transpose();              // n x C
    T.rowwise() += V.col(p).transpose();
    Mat PT = P.cwiseProduct(T);
    Vec rowsum = PT.rowwise().sum();
    Mat Q = PT - (P.array().colwise() * rowsum.array()).matrix();
    RowMat out(classes_, p + 1);
    out.leftCols(p) = Q.transpose() * features_;
    out.col(p) = Q.colwise().sum().transpose();
    return Eigen::Map<const Vec>(out.data(), dim()) + v / prior_variance_;
}

Mat LogRegModel::predict_probs(const Vec& x, const Mat& inputs) const {
    check_point(x);
    require(inputs.cols() == features_.cols(), "input feature width mismatch");
    return probs_for_rows(x, inputs);
}

// ---------------------------------------------------------------------------
// MlpModel

MlpModel::MlpModel(Mat features, std::vector<int> labels, int num_classes, int hidden,
                   double prior_variance)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      classes_(num_classes),
      hidden_(hidden),
      prior_variance_(prior_variance) {
    require(classes_ >= 2, "classification needs at least two classes");
    require(hidden_ >= 1, "hidden width must be positive");
    require(prior_variance_ > 0.0, "prior variance must be positive");
    require(static_cast<long>(labels_.size()) == features_.rows(), "feature/label count mismatch");
    for (int y : labels_) require(y >= 0 && y < classes_, "label out of range");
}

MlpModel::Unpacked MlpModel::unpack(const Vec& x) const {
    const Eigen::Index p = features_.cols();
    const double* d = x.data();
    Eigen::Map<const Mat> W1(d, hidden_, p);  // column-major storage of W1
    d += hidden_ * p;
    Eigen::Map<const Vec> b1(d, hidden_);
    d += hidden_;
    Eigen::Map<const Mat> W2(d, classes_, hidden_);
    d += static_cast<Eigen::Index>(classes_) * hidden_;
    Eigen::Map<const Vec> b2(d, classes_);
    return {W1, b1, W2, b2};
}

double MlpModel::prior_potential(const Vec& x) const {
    check_point(x);
    const Eigen::Index p = features_.cols();
    const Eigen::Index w1n = hidden_ * p;
    const Eigen::Index w2n = static_cast<Eigen::Index>(classes_) * hidden_;
    const double ss = x.segment(0, w1n).squaredNorm() + x.segment(w1n + hidden_, w2n).squaredNorm();
    return ss / (2.0 * prior_variance_);
}

Vec MlpModel::prior_grad(const Vec& x) const {
    check_point(x);
    const Eigen::Index p = features_.cols();
    const Eigen::Index w1n = hidden_ * p;
    const Eigen::Index w2n = static_cast<Eigen::Index>(classes_) * hidden_;
    Vec g = Vec::Zero(dim());
    g.segment(0, w1n) = x.segment(0, w1n) / prior_variance_;
    g.segment(w1n + hidden_, w2n) = x.segment(w1n + hidden_, w2n) / prior_variance_;
    return g;
}

double MlpModel::term_potential(long i, const Vec& x) const {
    check_point(x);
    check_term(i);
    auto [W1, b1, W2, b2] = unpack(x);
    Vec u = W1 * features_.row(i).transpose() + b1;
    Vec h = u.unaryExpr([](double t) { return softplus(t); });
    Vec z = W2 * h + b2;
    Eigen::RowVectorXd zr = z.transpose();
    return log_sum_exp(zr) - z[labels_[static_cast<std::size_t>(i)]];
}

Vec MlpModel::term_grad(long i, const Vec& x) const {
    const long idx[1] = {i};
    return term_gradient_sum(x, idx);
}

Vec MlpModel::term_gradient_sum(const Vec& x, std::span<const long> indices) const {
    check_point(x);
    auto [W1, b1, W2, b2] = unpack(x);
    const Eigen::Index p = features_.cols();
    const Eigen::Index n = static_cast<Eigen::Index>(indices.size());

    Mat rows(n, p);
    for (Eigen::Index k = 0; k < n; ++k) {
        check_term(indices[static_cast<std::size_t>(k)]);
        rows.row(k) = features_.row(indices[static_cast<std::size_t>(k)]);
    }
    Mat U = rows * W1.transpose();  // n x H
    U.rowwise() += b1.transpose();
    Mat H = U.unaryExpr([](double t) { return softplus(t); });
    Mat Z = H * W2.transpose();  // n x C
    Z.rowwise() += b2.transpose();
    Mat Gz = softmax_rows(std::move(Z));
    for (Eigen::Index k = 0; k < n; ++k)
        Gz(k, labels_[static_cast<std::size_t>(indices[static_cast<std::size_t>(k)])]) -= 1.0;

    Mat dU = (Gz * W2).cwiseProduct(U.unaryExpr([](double t) { return sigmoid(t); }));

    Vec g(dim());
    double* d = g.data();
    Eigen::Map<Mat>(d, hidden_, p) = dU.transpose() * rows;  // dW1
    d += hidden_ * p;
    Eigen::Map<Vec>(d, hidden_) = dU.colwise().sum().transpose();  // db1
    d += hidden_;
    Eigen::Map<Mat>(d, classes_, hidden_) = Gz.transpose() * H;  // dW2
    d += static_cast<Eigen::Index>(classes_) * hidden_;
    Eigen::Map<Vec>(d, classes_) = Gz.colwise().sum().transpose();  // db2
    return g;
}

Mat MlpModel::predict_probs(const Vec& x, const Mat& inputs) const {
    check_point(x);
    require(inputs.cols() == features_.cols(), "input feature width mismatch");
    auto [W1, b1, W2, b2] = unpack(x);
    Mat U = inputs * W1.transpose();
    U.rowwise() += b1.transpose();
    Mat H = U.unaryExpr([](double t) { return softplus(t); });
    Mat Z = H * W2.transpose();
    Z.rowwise() += b2.transpose();
    return softmax_rows(std::move(Z));
}

// ---------------------------------------------------------------------------
// LocalizedModel

LocalizedModel::LocalizedModel(std::shared_ptr<const Model> inner, Vec center, double rho,
                               double rho_max)
    : inner_(std::move(inner)), center_(std::move(center)), rho_(rho), rho_max_(rho_max) {
    require(static_cast<bool>(inner_), "inner model required");
    require(center_.size() == inner_->dim(), "center dimension mismatch");
    require(rho_ > 0.0, "rho must be positive");
    require(rho_max_ > 0.0, "rho_max must be positive");
}

double LocalizedModel::prior_potential(const Vec& x) const {
    check_point(x);
    return inner_->prior_potential(x) + (x - center_).squaredNorm() / (2.0 * rho_ * rho_);
}

Vec LocalizedModel::prior_grad(const Vec& x) const {
    check_point(x);
    return inner_->prior_grad(x) + (x - center_) / (rho_ * rho_);
}

Vec LocalizedModel::hessian_vector_product(const Vec& x, const Vec& v, double eps) const {
    check_point(x);
    check_point(v);
    require(eps > 0.0, "finite-difference displacement must be positive");
    return inner_->hessian_vector_product(x, v, eps) + v / (rho_ * rho_);
}

}  // namespace sms
