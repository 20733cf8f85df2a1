#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace talbf {

// Labeled samples. Class labels are 0-based (0..K-1) throughout.
struct Dataset {
    Eigen::MatrixXd features;  // n x d, one sample per row
    std::vector<int> labels;   // length n

    int size() const { return static_cast<int>(labels.size()); }
    int dim() const { return static_cast<int>(features.cols()); }
    Eigen::VectorXd sample(int i) const { return features.row(i).transpose(); }

    Dataset subset(const std::vector<int>& indices) const;
};

struct DataSplits {
    Dataset train;
    Dataset eval;
    Dataset aux;
};

struct SplitFractions {
    double train = 0.6;
    double eval = 0.3;  // remainder goes to the auxiliary pool
};

// Deterministic shuffle-then-cut assignment. The auxiliary split is capped
// at aux_size samples (the paper-style small attacker set); extras are
// dropped. Eval and aux are disjoint by construction.
DataSplits split_dataset(const Dataset& data, const SplitFractions& fractions, int aux_size,
                         std::uint64_t seed);

struct BlobSpec {
    int samples_per_class = 300;
    int num_classes = 4;
    int dim = 2;
    double center_radius = 4.0;
    double spread = 0.8;
};

// Isotropic Gaussian blobs with class centers evenly spaced on a circle
// (first two coordinates; higher dims are pure noise). Fully determined by
// the seed.
Dataset make_blobs(const BlobSpec& spec, std::uint64_t seed);

// CSV: feature columns then one integer label column, no header.
void save_csv(const Dataset& data, const std::string& path);
Dataset load_csv(const std::string& path);

// Deterministic random stream (splitmix64 + Box-Muller). Used everywhere a
// draw is needed so results do not depend on the stdlib's distribution
// internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next_u64();
    double uniform();            // in [0, 1)
    int uniform_int(int n);      // in [0, n)
    double normal();             // N(0, 1)

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace talbf
