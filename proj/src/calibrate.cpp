#include "sms/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sms {

void PredictionSet::validate() const {
    require(probs.rows() >= 1, "prediction set is empty");
    require(probs.cols() >= 2, "need at least two classes");
    require(static_cast<Eigen::Index>(labels.size()) == probs.rows(),
            "probability/label count mismatch");
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        require(probs.row(i).minCoeff() >= 0.0, "negative class probability");
        require(std::abs(probs.row(i).sum() - 1.0) <= 1e-6, "probability row does not sum to 1");
    }
    for (int y : labels) require(y >= 0 && y < probs.cols(), "label out of range");
}

double accuracy(const PredictionSet& preds) {
    preds.validate();
    long correct = 0;
    for (Eigen::Index i = 0; i < preds.probs.rows(); ++i) {
        Eigen::Index argmax = 0;
        preds.probs.row(i).maxCoeff(&argmax);  // first maximum wins on ties
        if (argmax == preds.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.probs.rows());
}

double nll(const PredictionSet& preds) {
    preds.validate();
    double total = 0.0;
    for (Eigen::Index i = 0; i < preds.probs.rows(); ++i) {
        const double p = preds.probs(i, preds.labels[static_cast<std::size_t>(i)]);
        total -= std::log(std::max(p, 1e-12));
    }
    return total / static_cast<double>(preds.probs.rows());
}

double ace(const PredictionSet& preds, int n_ranges) {
    preds.validate();
    require(n_ranges >= 1, "need at least one confidence range");
    const Eigen::Index n = preds.probs.rows();
    const Eigen::Index c_count = preds.probs.cols();
    require(n >= n_ranges, "fewer predictions than confidence ranges");

    double total = 0.0;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < c_count; ++c) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return preds.probs(a, c) < preds.probs(b, c);
        });
        for (int r = 0; r < n_ranges; ++r) {
            const Eigen::Index lo = n * r / n_ranges;
            const Eigen::Index hi = n * (r + 1) / n_ranges;
            double conf = 0.0;
            double acc = 0.0;
            for (Eigen::Index k = lo; k < hi; ++k) {
                const Eigen::Index i = order[static_cast<std::size_t>(k)];
                conf += preds.probs(i, c);
                if (preds.labels[static_cast<std::size_t>(i)] == c) acc += 1.0;
            }
            const double size = static_cast<double>(hi - lo);
            total += std::abs(acc / size - conf / size);
        }
    }
    return total / (static_cast<double>(c_count) * static_cast<double>(n_ranges));
}

double rps(const PredictionSet& preds, bool normalized) {
    preds.validate();
    const Eigen::Index n = preds.probs.rows();
    const Eigen::Index c_count = preds.probs.cols();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double cum_p = 0.0;
        double row = 0.0;
        for (Eigen::Index k = 0; k + 1 < c_count; ++k) {
            cum_p += preds.probs(i, k);
            const double cum_y = preds.labels[static_cast<std::size_t>(i)] <= k ? 1.0 : 0.0;
            row += (cum_p - cum_y) * (cum_p - cum_y);
        }
        total += row;
    }
    double score = total / static_cast<double>(n);
    if (normalized) score /= static_cast<double>(c_count - 1);
    return score;
}

Mat ensemble_average(const std::vector<Mat>& prob_sets) {
    require(!prob_sets.empty(), "need at least one ensemble member");
    Mat mean = prob_sets.front();
    for (std::size_t s = 1; s < prob_sets.size(); ++s) {
        require(prob_sets[s].rows() == mean.rows() && prob_sets[s].cols() == mean.cols(),
                "ensemble member shape mismatch");
        mean += prob_sets[s];
    }
    return mean / static_cast<double>(prob_sets.size());
}

}  // namespace sms
