#include "sms/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace sms {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path, std::size_t offset) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in)
        throw format_error(path + ": truncated header at offset " + std::to_string(offset));
    return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
           (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw format_error("cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw format_error("cannot open " + labels_path);

    const std::uint32_t img_magic = read_be32(img, images_path, 0);
    if (img_magic != 0x00000803u)
        throw format_error(images_path + ": bad image magic at offset 0");
    const std::uint32_t n_images = read_be32(img, images_path, 4);
    const std::uint32_t rows = read_be32(img, images_path, 8);
    const std::uint32_t cols = read_be32(img, images_path, 12);

    const std::uint32_t lab_magic = read_be32(lab, labels_path, 0);
    if (lab_magic != 0x00000801u)
        throw format_error(labels_path + ": bad label magic at offset 0");
    const std::uint32_t n_labels = read_be32(lab, labels_path, 4);
    if (n_images != n_labels)
        throw format_error(images_path + ": image count " + std::to_string(n_images) +
                           " does not match label count " + std::to_string(n_labels));

    const std::size_t pixels = std::size_t(rows) * cols;
    Dataset d;
    d.num_classes = 10;
    d.features.resize(n_images, static_cast<Eigen::Index>(pixels));
    d.labels.resize(n_images);

    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
        if (!img)
            throw format_error(images_path + ": truncated at image " + std::to_string(i) +
                               " (offset " + std::to_string(16 + std::size_t(i) * pixels) + ")");
        for (std::size_t j = 0; j < pixels; ++j)
            d.features(i, static_cast<Eigen::Index>(j)) = buf[j] / 255.0;
    }
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        unsigned char y = 0;
        lab.read(reinterpret_cast<char*>(&y), 1);
        if (!lab)
            throw format_error(labels_path + ": truncated at label " + std::to_string(i));
        if (y > 9)
            throw format_error(labels_path + ": label " + std::to_string(int(y)) +
                               " outside 0..9 at index " + std::to_string(i));
        d.labels[i] = int(y);
    }
    return d;
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw format_error("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw format_error(path + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const auto it = std::find(header.begin(), header.end(), label_column);
    if (it == header.end())
        throw format_error(path + ": label column '" + label_column + "' not found");
    const std::size_t label_idx = static_cast<std::size_t>(it - header.begin());

    std::vector<std::vector<double>> rows;
    std::vector<double> raw_labels;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        std::size_t col = 0;
        double label = 0.0;
        while (std::getline(ss, cell, ',')) {
            double value = 0.0;
            const auto* first = cell.data();
            const auto* last = cell.data() + cell.size();
            const auto [ptr, ec] = std::from_chars(first, last, value);
            if (ec != std::errc() || ptr != last)
                throw format_error(path + ": non-numeric cell '" + cell + "' at line " +
                                   std::to_string(line_no));
            if (col == label_idx)
                label = value;
            else
                row.push_back(value);
            ++col;
        }
        if (col != header.size())
            throw format_error(path + ": ragged row at line " + std::to_string(line_no));
        rows.push_back(std::move(row));
        raw_labels.push_back(label);
    }
    if (rows.empty()) throw format_error(path + ": no data rows");

    std::vector<double> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) throw format_error(path + ": classification needs at least 2 classes");
    std::map<double, int> remap;
    for (std::size_t k = 0; k < distinct.size(); ++k) remap[distinct[k]] = static_cast<int>(k);

    Dataset d;
    d.num_classes = static_cast<int>(distinct.size());
    d.features.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    d.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        d.labels[i] = remap.at(raw_labels[i]);
    }
    return d;
}

Dataset make_synthetic_classification(Rng& rng, long n, int p, int c, double separation) {
    require(n >= 1 && p >= 1 && c >= 2, "invalid synthetic dataset shape");
    Mat means(c, p);
    for (int k = 0; k < c; ++k) means.row(k) = separation * draw_normal_vec(rng, p).transpose();
    std::uniform_int_distribution<int> label_dist(0, c - 1);

    Dataset d;
    d.num_classes = c;
    d.features.resize(n, p);
    d.labels.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const int y = label_dist(rng);
        d.labels[static_cast<std::size_t>(i)] = y;
        d.features.row(i) = means.row(y) + draw_normal_vec(rng, p).transpose();
    }
    return d;
}

Dataset truncate_to_multiple(Dataset data, long batch_size) {
    require(batch_size >= 1, "batch size must be positive");
    const long keep = (data.size() / batch_size) * batch_size;
    require(keep >= batch_size, "dataset smaller than one batch");
    data.features.conservativeResize(keep, Eigen::NoChange);
    data.labels.resize(static_cast<std::size_t>(keep));
    return data;
}

}  // namespace sms
