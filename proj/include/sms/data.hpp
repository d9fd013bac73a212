#ifndef SMS_DATA_HPP
#define SMS_DATA_HPP

#include <string>
#include <vector>

#include "sms/rng.hpp"
#include "sms/types.hpp"

namespace sms {

class format_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Mat features;             // n x p
    std::vector<int> labels;  // 0-based class indices
    int num_classes = 0;
    std::string split;  // train/test tag

    long size() const { return features.rows(); }
};

// IDX image/label pair (the Fashion-MNIST distribution format): big-endian
// headers with magics 0x00000803 (images) and 0x00000801 (labels). Pixel
// rows are flattened and scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Rectangular numeric CSV with a header row. The named column becomes the
// label, re-indexed to 0..C-1 preserving the sorted order of distinct values;
// the remaining columns become features.
Dataset load_csv(const std::string& path, const std::string& label_column);

// Gaussian class clusters: class means ~ N(0, separation^2 I), features
// ~ N(mean_label, I). Deterministic given the generator state.
Dataset make_synthetic_classification(Rng& rng, long n, int p, int c, double separation);

// Drops trailing rows so the batch size divides the dataset.
Dataset truncate_to_multiple(Dataset data, long batch_size);

}  // namespace sms

#endif  // SMS_DATA_HPP
