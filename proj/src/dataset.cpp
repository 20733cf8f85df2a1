#include "talbf/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace talbf {

std::uint64_t Rng::next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

int Rng::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        out.features.row(static_cast<Eigen::Index>(r)) = features.row(indices[r]);
        out.labels.push_back(labels[indices[r]]);
    }
    return out;
}

DataSplits split_dataset(const Dataset& data, const SplitFractions& fractions, int aux_size,
                         std::uint64_t seed) {
    if (fractions.train < 0 || fractions.eval < 0 || fractions.train + fractions.eval > 1.0)
        throw std::invalid_argument("split fractions must be nonnegative and sum to <= 1");
    const int n = data.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);

    const int n_train = static_cast<int>(fractions.train * n);
    const int n_eval = static_cast<int>(fractions.eval * n);
    const int n_aux = std::min(aux_size, n - n_train - n_eval);

    DataSplits splits;
    splits.train = data.subset({order.begin(), order.begin() + n_train});
    splits.eval = data.subset({order.begin() + n_train, order.begin() + n_train + n_eval});
    splits.aux =
        data.subset({order.begin() + n_train + n_eval, order.begin() + n_train + n_eval + n_aux});
    return splits;
}

Dataset make_blobs(const BlobSpec& spec, std::uint64_t seed) {
    if (spec.num_classes < 1 || spec.samples_per_class < 1 || spec.dim < 2)
        throw std::invalid_argument("bad blob spec");
    const int n = spec.num_classes * spec.samples_per_class;
    Dataset data;
    data.features.resize(n, spec.dim);
    data.labels.resize(n);
    Rng rng(seed);
    int row = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
        const double angle = 2.0 * M_PI * c / spec.num_classes;
        for (int i = 0; i < spec.samples_per_class; ++i, ++row) {
            data.features(row, 0) = spec.center_radius * std::cos(angle) + spec.spread * rng.normal();
            data.features(row, 1) = spec.center_radius * std::sin(angle) + spec.spread * rng.normal();
            for (int d = 2; d < spec.dim; ++d) data.features(row, d) = spec.spread * rng.normal();
            data.labels[row] = c;
        }
    }
    // deterministic interleave so class runs don't survive into splits
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
    return data.subset(order);
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.precision(17);
    for (int i = 0; i < data.size(); ++i) {
        for (int j = 0; j < data.dim(); ++j) out << data.features(i, j) << ',';
        out << data.labels[i] << '\n';
    }
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<double> values;
        std::string cell;
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        if (values.size() < 2) throw std::runtime_error("dataset row needs features and a label");
        labels.push_back(static_cast<int>(values.back()));
        values.pop_back();
        if (!rows.empty() && rows.front().size() != values.size())
            throw std::runtime_error("inconsistent feature count in " + path);
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::runtime_error("empty dataset: " + path);
    Dataset data;
    data.features.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    data.labels = std::move(labels);
    return data;
}

}  // namespace talbf
