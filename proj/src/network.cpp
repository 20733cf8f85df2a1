#include "talbf/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace talbf {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'L', 'B', 'F', 'S', 'N', 'P'};
constexpr std::uint32_t kSnapshotVersion = 1;

void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32le(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw std::runtime_error("truncated snapshot");
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
    if (!in) throw std::runtime_error("truncated snapshot");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64le(out, m(i, j));
}

void read_matrix(std::istream& in, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64le(in);
}

Eigen::MatrixXd apply_activation(Eigen::MatrixXd z, Activation act) {
    if (act == Activation::kReLU) return z.cwiseMax(0.0);
    return z;
}

}  // namespace

ArchSpec widen_model(const ArchSpec& arch, int factor) {
    if (factor < 1) throw std::invalid_argument("widen factor must be >= 1");
    ArchSpec wide = arch;
    for (int& h : wide.hidden) h *= factor;
    return wide;
}

int ModelSnapshot::input_dim() const {
    return body.empty() ? feature_dim() : static_cast<int>(body.front().weights.cols());
}

Eigen::VectorXd ModelSnapshot::penultimate(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim())
        throw std::invalid_argument("input dim mismatch: expected " + std::to_string(input_dim()) +
                                    ", got " + std::to_string(x.size()));
    Eigen::VectorXd a = x;
    for (const DenseLayer& layer : body) {
        Eigen::VectorXd z = layer.weights * a + layer.bias;
        a = (layer.activation == Activation::kReLU) ? z.cwiseMax(0.0).eval() : z;
    }
    return a;
}

double ModelSnapshot::class_logit(const Eigen::VectorXd& x, int cls) const {
    if (cls < 0 || cls >= num_classes()) throw std::out_of_range("class index out of range");
    return last.row_weights(cls).dot(penultimate(x));
}

Eigen::VectorXd ModelSnapshot::logits(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd g = penultimate(x);
    Eigen::VectorXd out(num_classes());
    for (int i = 0; i < num_classes(); ++i) out(i) = last.row_weights(i).dot(g);
    return out;
}

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return best;
}

int ModelSnapshot::predict(const Eigen::VectorXd& x) const { return argmax_lowest(logits(x)); }

void ModelSnapshot::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32le(out, kSnapshotVersion);
    write_u32le(out, static_cast<std::uint32_t>(input_dim()));
    write_u32le(out, static_cast<std::uint32_t>(body.size()));
    for (const DenseLayer& layer : body) {
        write_u32le(out, static_cast<std::uint32_t>(layer.weights.rows()));
        write_u32le(out, static_cast<std::uint32_t>(layer.weights.cols()));
        out.put(static_cast<char>(layer.activation));
        write_matrix(out, layer.weights);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) write_f64le(out, layer.bias(i));
    }
    last.write(out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

ModelSnapshot ModelSnapshot::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open snapshot: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a model snapshot: " + path);
    const std::uint32_t version = read_u32le(in);
    if (version != kSnapshotVersion)
        throw std::runtime_error("unsupported snapshot version " + std::to_string(version));
    read_u32le(in);  // input_dim, implied by the first layer
    const std::uint32_t n_layers = read_u32le(in);
    ModelSnapshot model;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        DenseLayer layer;
        const int rows = static_cast<int>(read_u32le(in));
        const int cols = static_cast<int>(read_u32le(in));
        const int act = in.get();
        if (act != 0 && act != 1) throw std::runtime_error("bad activation tag");
        layer.activation = static_cast<Activation>(act);
        layer.weights.resize(rows, cols);
        read_matrix(in, layer.weights);
        layer.bias.resize(rows);
        for (int i = 0; i < rows; ++i) layer.bias(i) = read_f64le(in);
        model.body.push_back(std::move(layer));
    }
    model.last = QuantizedLayer::read(in);
    if (!model.body.empty() &&
        model.body.back().weights.rows() != model.last.in_dim())
        throw std::runtime_error("snapshot dims inconsistent");
    return model;
}

bool ModelSnapshot::operator==(const ModelSnapshot& other) const {
    if (body.size() != other.body.size() || !(last == other.last)) return false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i].activation != other.body[i].activation) return false;
        if (body[i].weights != other.body[i].weights) return false;
        if (body[i].bias != other.body[i].bias) return false;
    }
    return true;
}

ModelSnapshot train_toy_model(const Dataset& train, const ArchSpec& arch,
                              const TrainOptions& options, Eigen::MatrixXd* float_last) {
    if (train.size() == 0) throw std::invalid_argument("empty training split");
    if (train.dim() != arch.input_dim)
        throw std::invalid_argument("training data dim does not match arch input dim");
    for (int y : train.labels)
        if (y < 0 || y >= arch.num_classes)
            throw std::invalid_argument("label outside [0, num_classes)");

    Rng rng(options.seed);

    // He init for the ReLU body, scaled normal for the head
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
    std::vector<int> dims;
    dims.push_back(arch.input_dim);
    for (int h : arch.hidden) dims.push_back(h);
    const int n_body = static_cast<int>(arch.hidden.size());
    for (int l = 0; l < n_body; ++l) {
        const double scale = std::sqrt(2.0 / dims[l]);
        Eigen::MatrixXd m(dims[l + 1], dims[l]);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
        w.push_back(std::move(m));
        b.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    const int c_dim = dims.back();
    Eigen::MatrixXd head(arch.num_classes, c_dim);
    {
        const double scale = std::sqrt(1.0 / c_dim);
        for (Eigen::Index i = 0; i < head.rows(); ++i)
            for (Eigen::Index j = 0; j < head.cols(); ++j) head(i, j) = scale * rng.normal();
    }

    const int n = train.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<Eigen::MatrixXd> acts(static_cast<std::size_t>(n_body) + 1);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
        for (int start = 0; start < n; start += options.batch_size) {
            const int bs = std::min(options.batch_size, n - start);
            Eigen::MatrixXd x(bs, arch.input_dim);
            std::vector<int> y(static_cast<std::size_t>(bs));
            for (int r = 0; r < bs; ++r) {
                x.row(r) = train.features.row(order[start + r]);
                y[static_cast<std::size_t>(r)] = train.labels[order[start + r]];
            }

            acts[0] = x;
            for (int l = 0; l < n_body; ++l) {
                Eigen::MatrixXd z =
                    (acts[l] * w[l].transpose()).rowwise() + b[l].transpose();
                acts[l + 1] = apply_activation(std::move(z), Activation::kReLU);
            }
            Eigen::MatrixXd logits = acts[n_body] * head.transpose();  // bs x K

            // softmax rows, then dlogits = (P - Y)/bs
            Eigen::MatrixXd dlogits(bs, arch.num_classes);
            for (int r = 0; r < bs; ++r) {
                Eigen::VectorXd row = logits.row(r).transpose();
                const double mx = row.maxCoeff();
                Eigen::VectorXd e = (row.array() - mx).exp();
                Eigen::VectorXd p = e / e.sum();
                p(y[static_cast<std::size_t>(r)]) -= 1.0;
                dlogits.row(r) = p.transpose() / bs;
            }

            Eigen::MatrixXd grad_head = dlogits.transpose() * acts[n_body];
            Eigen::MatrixXd da = dlogits * head;
            for (int l = n_body - 1; l >= 0; --l) {
                Eigen::MatrixXd dz =
                    (acts[l + 1].array() > 0.0).cast<double>() * da.array();
                Eigen::MatrixXd grad_w = dz.transpose() * acts[l];
                Eigen::VectorXd grad_b = dz.colwise().sum().transpose();
                da = dz * w[l];
                w[l] -= options.learning_rate * grad_w;
                b[l] -= options.learning_rate * grad_b;
            }
            head -= options.learning_rate * grad_head;
        }
    }

    if (float_last) *float_last = head;

    ModelSnapshot model;
    for (int l = 0; l < n_body; ++l)
        model.body.push_back(DenseLayer{w[l], b[l], Activation::kReLU});
    model.last = QuantizedLayer::from_weights(head, options.q_bits);

    const double acc = accuracy(model, train);
    if (acc < options.acc_floor) {
        std::ostringstream msg;
        msg << "training did not reach the accuracy floor: got " << acc << " < "
            << options.acc_floor << " after " << options.epochs << " epochs (seed "
            << options.seed << ", lr " << options.learning_rate << ")";
        throw TrainingError(msg.str());
    }
    return model;
}

double accuracy(const ModelSnapshot& model, const Dataset& split) {
    if (split.size() == 0) throw std::invalid_argument("accuracy: empty split");
    int correct = 0;
    for (int i = 0; i < split.size(); ++i)
        if (model.predict(split.sample(i)) == split.labels[i]) ++correct;
    return static_cast<double>(correct) / split.size();
}

}  // namespace talbf
