#ifndef SMS_CALIBRATE_HPP
#define SMS_CALIBRATE_HPP

#include <vector>

#include "sms/types.hpp"

namespace sms {

// Class probabilities (rows are distributions) paired with 0-based labels.
struct PredictionSet {
    Mat probs;                // n x C
    std::vector<int> labels;  // in {0..C-1}

    void validate() const;
};

// Fraction of rows whose argmax matches the label; ties break toward the
// smallest class index.
double accuracy(const PredictionSet& preds);

// Mean of -log p(true class), with the probability floored at 1e-12.
double nll(const PredictionSet& preds);

// Adaptive calibration error: per class, confidences are sorted and split
// into n_ranges equal-mass bins; the mean |accuracy - confidence| over all
// (class, bin) cells.
double ace(const PredictionSet& preds, int n_ranges = 15);

// Ranked probability score: mean squared distance between the predictive and
// observed CDFs over the class order. Unnormalized, so C = 2 reduces to the
// Brier score (p_1 - y_1)^2; pass normalized = true to divide by C-1.
double rps(const PredictionSet& preds, bool normalized = false);

// Arithmetic mean of S member probability tables (posterior predictive).
Mat ensemble_average(const std::vector<Mat>& prob_sets);

}  // namespace sms

#endif  // SMS_CALIBRATE_HPP
