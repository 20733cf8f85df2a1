#pragma once

// Two's-complement bit storage for quantized layer weights.
//
// Each weight is stored as Q bits in the order [v_Q; v_{Q-1}; ...; v_1]:
// storage position 0 holds the sign bit v_Q, position Q-1 holds the
// least-significant bit v_1. The decoded value is
//
//   h(v) = (-2^{Q-1} * v_Q + sum_{i=1}^{Q-1} 2^{i-1} * v_i) * step
//
// so position p contributes step * bit_coefficient(p, Q) when set.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace talbf {

inline constexpr int kMinBitWidth = 2;
inline constexpr int kMaxBitWidth = 16;

struct QuantConfig {
    int bit_width = 8;
    int layer_id = 0;
};

// One weight's bits, sign bit first.
using BitWord = std::vector<std::uint8_t>;

// Signed contribution of storage position p (in units of the step size):
// -2^{Q-1} for the sign position, 2^{Q-1-p} otherwise.
double bit_coefficient(int p, int q_bits);

// Per-layer step size: max|w| / (2^{Q-1} - 1). Throws std::invalid_argument
// on an empty or all-zero weight set (the step would be undefined) or a bit
// width outside [kMinBitWidth, kMaxBitWidth].
double compute_step_size(const std::vector<double>& weights, int q_bits);
double compute_step_size(const Eigen::MatrixXd& weights, int q_bits);

double decode_word(const BitWord& word, double step);

// round(w/step) with ties to even, saturating to [-2^{Q-1}, 2^{Q-1}-1].
BitWord encode_weight(double w, double step, int q_bits);

// Number of differing positions. Throws std::invalid_argument on length
// mismatch. For binary vectors this equals ||a - b||_2^2.
int hamming_distance(const std::vector<std::uint8_t>& a,
                     const std::vector<std::uint8_t>& b);

// K x C weight matrix held as a K*C*Q bit tensor plus one step size.
// Bits are stored row-major over (class, input, bit position).
class QuantizedLayer {
public:
    QuantizedLayer() = default;
    QuantizedLayer(int out_dim, int in_dim, int q_bits, double step);

    // Computes the step size from the matrix and encodes every entry.
    static QuantizedLayer from_weights(const Eigen::MatrixXd& w, int q_bits);

    int out_dim() const { return out_dim_; }
    int in_dim() const { return in_dim_; }
    int bit_width() const { return q_bits_; }
    double step_size() const { return step_; }

    std::uint8_t bit(int i, int j, int p) const { return bits_[index(i, j, p)]; }
    void set_bit(int i, int j, int p, std::uint8_t v) { bits_[index(i, j, p)] = v ? 1 : 0; }
    void toggle_bit(int i, int j, int p) { bits_[index(i, j, p)] ^= 1; }

    BitWord word(int i, int j) const;
    void set_word(int i, int j, const BitWord& w);

    double weight(int i, int j) const;
    Eigen::VectorXd row_weights(int i) const;
    Eigen::MatrixXd weights() const;

    const std::vector<std::uint8_t>& bits() const { return bits_; }

    void write(std::ostream& out) const;
    static QuantizedLayer read(std::istream& in);

    bool operator==(const QuantizedLayer& other) const;

private:
    std::size_t index(int i, int j, int p) const;

    int out_dim_ = 0;
    int in_dim_ = 0;
    int q_bits_ = 0;
    double step_ = 1.0;
    std::vector<std::uint8_t> bits_;
};

// Returns a copy with exactly one bit toggled. Throws std::out_of_range on
// bad indices.
QuantizedLayer flip_bit(const QuantizedLayer& layer, int i, int j, int p);

}  // namespace talbf
