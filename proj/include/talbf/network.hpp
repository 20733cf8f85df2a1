#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "talbf/dataset.hpp"
#include "talbf/quantize.hpp"

namespace talbf {

enum class Activation : std::uint8_t { kReLU = 0, kIdentity = 1 };

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
    Activation activation = Activation::kReLU;
};

// MLP shape: input -> hidden... -> linear classifier head.
struct ArchSpec {
    int input_dim = 2;
    std::vector<int> hidden = {16, 16, 16};
    int num_classes = 4;
};

// Multiplies hidden widths by factor; input/output dims unchanged.
// Throws std::invalid_argument for factor < 1.
ArchSpec widen_model(const ArchSpec& arch, int factor);

// Float body plus a quantized, bias-free final linear layer. The final
// layer's decoded row i dotted with the penultimate features gives the
// class-i logit; there is no softmax inside the model.
class ModelSnapshot {
public:
    std::vector<DenseLayer> body;  // may be empty (features = raw input)
    QuantizedLayer last;

    int num_classes() const { return last.out_dim(); }
    int feature_dim() const { return last.in_dim(); }
    int input_dim() const;

    // g(x): output of the body, independent of the quantized bits.
    Eigen::VectorXd penultimate(const Eigen::VectorXd& x) const;
    double class_logit(const Eigen::VectorXd& x, int cls) const;
    Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
    // argmax logit; ties break to the lowest class index.
    int predict(const Eigen::VectorXd& x) const;

    void save(const std::string& path) const;
    static ModelSnapshot load(const std::string& path);

    bool operator==(const ModelSnapshot& other) const;
};

int argmax_lowest(const Eigen::VectorXd& v);

struct TrainOptions {
    int epochs = 300;
    double learning_rate = 0.05;
    int batch_size = 32;
    std::uint64_t seed = 1;
    int q_bits = 8;
    double acc_floor = 0.90;  // on the training split, after quantization
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic SGD trainer for attack targets: fixed init, fixed shuffle
// order, plain constant-step SGD on softmax cross-entropy. The final layer
// is trained bias-free in float and quantized afterwards; the body stays
// float. Throws TrainingError if post-quantization accuracy on the training
// split is below options.acc_floor. If float_last is non-null it receives
// the pre-quantization final-layer weights.
ModelSnapshot train_toy_model(const Dataset& train, const ArchSpec& arch,
                              const TrainOptions& options,
                              Eigen::MatrixXd* float_last = nullptr);

// Fraction of correct predictions. Throws std::invalid_argument on an empty
// split.
double accuracy(const ModelSnapshot& model, const Dataset& split);

}  // namespace talbf
