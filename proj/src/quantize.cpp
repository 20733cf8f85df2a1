#include "talbf/quantize.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace talbf {

namespace {

void check_bit_width(int q_bits) {
    if (q_bits < kMinBitWidth || q_bits > kMaxBitWidth) {
        throw std::invalid_argument("bit width must be in [" + std::to_string(kMinBitWidth) +
                                    ", " + std::to_string(kMaxBitWidth) + "], got " +
                                    std::to_string(q_bits));
    }
}

void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32le(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw std::runtime_error("truncated layer block");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64le(std::ostream& out, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

double read_f64le(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw std::runtime_error("truncated layer block");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace

double bit_coefficient(int p, int q_bits) {
    check_bit_width(q_bits);
    if (p < 0 || p >= q_bits) throw std::out_of_range("bit position out of range");
    if (p == 0) return -std::ldexp(1.0, q_bits - 1);
    return std::ldexp(1.0, q_bits - 1 - p);
}

double compute_step_size(const std::vector<double>& weights, int q_bits) {
    check_bit_width(q_bits);
    if (weights.empty()) throw std::invalid_argument("empty weight set");
    double max_abs = 0.0;
    for (double w : weights) max_abs = std::max(max_abs, std::abs(w));
    if (max_abs == 0.0) throw std::invalid_argument("all-zero weights: step size undefined");
    return max_abs / (std::ldexp(1.0, q_bits - 1) - 1.0);
}

double compute_step_size(const Eigen::MatrixXd& weights, int q_bits) {
    check_bit_width(q_bits);
    if (weights.size() == 0) throw std::invalid_argument("empty weight set");
    double max_abs = weights.cwiseAbs().maxCoeff();
    if (max_abs == 0.0) throw std::invalid_argument("all-zero weights: step size undefined");
    return max_abs / (std::ldexp(1.0, q_bits - 1) - 1.0);
}

double decode_word(const BitWord& word, double step) {
    const int q = static_cast<int>(word.size());
    check_bit_width(q);
    if (step <= 0.0) throw std::invalid_argument("step size must be positive");
    double acc = 0.0;
    for (int p = 0; p < q; ++p) {
        if (word[p] > 1) throw std::invalid_argument("bit value outside {0,1}");
        if (word[p]) acc += bit_coefficient(p, q);
    }
    return acc * step;
}

BitWord encode_weight(double w, double step, int q_bits) {
    check_bit_width(q_bits);
    if (step <= 0.0) throw std::invalid_argument("step size must be positive");
    const long min_z = -(1L << (q_bits - 1));
    const long max_z = (1L << (q_bits - 1)) - 1;
    // nearbyint rounds half to even under the default FP environment
    double r = std::nearbyint(w / step);
    long z = r <= static_cast<double>(min_z)   ? min_z
             : r >= static_cast<double>(max_z) ? max_z
                                               : static_cast<long>(r);
    const unsigned long u = static_cast<unsigned long>(z) & ((1UL << q_bits) - 1);
    BitWord word(static_cast<std::size_t>(q_bits), 0);
    for (int p = 0; p < q_bits; ++p) {
        const int significance = q_bits - 1 - p;  // position 0 is v_Q
        word[p] = static_cast<std::uint8_t>((u >> significance) & 1);
    }
    return word;
}

int hamming_distance(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("hamming_distance: length mismatch");
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]) ? 1 : 0;
    return d;
}

QuantizedLayer::QuantizedLayer(int out_dim, int in_dim, int q_bits, double step)
    : out_dim_(out_dim), in_dim_(in_dim), q_bits_(q_bits), step_(step) {
    check_bit_width(q_bits);
    if (out_dim <= 0 || in_dim <= 0) throw std::invalid_argument("layer dims must be positive");
    if (step <= 0.0) throw std::invalid_argument("step size must be positive");
    bits_.assign(static_cast<std::size_t>(out_dim) * in_dim * q_bits, 0);
}

QuantizedLayer QuantizedLayer::from_weights(const Eigen::MatrixXd& w, int q_bits) {
    const double step = compute_step_size(w, q_bits);
    QuantizedLayer layer(static_cast<int>(w.rows()), static_cast<int>(w.cols()), q_bits, step);
    for (int i = 0; i < w.rows(); ++i)
        for (int j = 0; j < w.cols(); ++j) layer.set_word(i, j, encode_weight(w(i, j), step, q_bits));
    return layer;
}

std::size_t QuantizedLayer::index(int i, int j, int p) const {
    if (i < 0 || i >= out_dim_ || j < 0 || j >= in_dim_ || p < 0 || p >= q_bits_)
        throw std::out_of_range("bit index out of range");
    return (static_cast<std::size_t>(i) * in_dim_ + j) * q_bits_ + p;
}

BitWord QuantizedLayer::word(int i, int j) const {
    BitWord w(static_cast<std::size_t>(q_bits_));
    for (int p = 0; p < q_bits_; ++p) w[p] = bit(i, j, p);
    return w;
}

void QuantizedLayer::set_word(int i, int j, const BitWord& w) {
    if (static_cast<int>(w.size()) != q_bits_)
        throw std::invalid_argument("word length does not match layer bit width");
    for (int p = 0; p < q_bits_; ++p) set_bit(i, j, p, w[p]);
}

double QuantizedLayer::weight(int i, int j) const {
    double acc = 0.0;
    for (int p = 0; p < q_bits_; ++p)
        if (bit(i, j, p)) acc += bit_coefficient(p, q_bits_);
    return acc * step_;
}

Eigen::VectorXd QuantizedLayer::row_weights(int i) const {
    Eigen::VectorXd row(in_dim_);
    for (int j = 0; j < in_dim_; ++j) row(j) = weight(i, j);
    return row;
}

Eigen::MatrixXd QuantizedLayer::weights() const {
    Eigen::MatrixXd w(out_dim_, in_dim_);
    for (int i = 0; i < out_dim_; ++i) w.row(i) = row_weights(i).transpose();
    return w;
}

void QuantizedLayer::write(std::ostream& out) const {
    write_u32le(out, static_cast<std::uint32_t>(out_dim_));
    write_u32le(out, static_cast<std::uint32_t>(in_dim_));
    write_u32le(out, static_cast<std::uint32_t>(q_bits_));
    write_f64le(out, step_);
    out.write(reinterpret_cast<const char*>(bits_.data()),
              static_cast<std::streamsize>(bits_.size()));
}

QuantizedLayer QuantizedLayer::read(std::istream& in) {
    const int k = static_cast<int>(read_u32le(in));
    const int c = static_cast<int>(read_u32le(in));
    const int q = static_cast<int>(read_u32le(in));
    const double step = read_f64le(in);
    QuantizedLayer layer(k, c, q, step);
    in.read(reinterpret_cast<char*>(layer.bits_.data()),
            static_cast<std::streamsize>(layer.bits_.size()));
    if (!in) throw std::runtime_error("truncated layer block");
    for (std::uint8_t b : layer.bits_)
        if (b > 1) throw std::runtime_error("corrupt layer block: bit byte outside {0,1}");
    return layer;
}

bool QuantizedLayer::operator==(const QuantizedLayer& other) const {
    return out_dim_ == other.out_dim_ && in_dim_ == other.in_dim_ && q_bits_ == other.q_bits_ &&
           step_ == other.step_ && bits_ == other.bits_;
}

QuantizedLayer flip_bit(const QuantizedLayer& layer, int i, int j, int p) {
    QuantizedLayer out = layer;
    out.toggle_bit(i, j, p);
    return out;
}

}  // namespace talbf
