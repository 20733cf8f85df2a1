#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "talbf/dataset.hpp"
#include "talbf/quantize.hpp"

using namespace talbf;

TEST_CASE("step size follows the max-abs rule") {
    CHECK(compute_step_size(std::vector<double>{-1.0, 0.5, 1.0}, 4) == doctest::Approx(1.0 / 7.0));
    CHECK(compute_step_size(std::vector<double>{7.0}, 4) == doctest::Approx(1.0));
    CHECK_THROWS_AS(compute_step_size(std::vector<double>{0.0, 0.0}, 4), std::invalid_argument);
    CHECK_THROWS_AS(compute_step_size(std::vector<double>{}, 4), std::invalid_argument);
    CHECK_THROWS_AS(compute_step_size(std::vector<double>{1.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(compute_step_size(std::vector<double>{1.0}, 17), std::invalid_argument);
}

TEST_CASE("decode_word evaluates the two's-complement sum") {
    CHECK(decode_word({0, 0, 0, 0}, 0.5) == 0.0);
    CHECK(decode_word({1, 0, 0, 0}, 0.5) == -4.0);  // sign bit only: -2^3 * 0.5
    CHECK(decode_word({0, 1, 1, 1}, 1.0) == 7.0);
    CHECK(decode_word({1, 1, 1, 1}, 1.0) == -1.0);
}

TEST_CASE("encode_weight rounds, saturates, and inverts decode") {
    CHECK(encode_weight(0.0, 0.5, 4) == BitWord{0, 0, 0, 0});
    CHECK(encode_weight(-4.0, 0.5, 4) == BitWord{1, 0, 0, 0});
    CHECK(encode_weight(100.0, 0.5, 4) == BitWord{0, 1, 1, 1});   // saturates to +7
    CHECK(encode_weight(-100.0, 0.5, 4) == BitWord{1, 0, 0, 0});  // saturates to -8

    // ties round to even
    CHECK(decode_word(encode_weight(2.5, 1.0, 4), 1.0) == 2.0);
    CHECK(decode_word(encode_weight(3.5, 1.0, 4), 1.0) == 4.0);
}

TEST_CASE("encode/decode are mutual inverses on every representable integer") {
    for (int q : {2, 3, 4, 8, 12}) {
        const double step = 0.625;
        for (int z = -(1 << (q - 1)); z <= (1 << (q - 1)) - 1; ++z) {
            const BitWord word = encode_weight(z * step, step, q);
            CHECK(decode_word(word, step) == doctest::Approx(z * step).epsilon(1e-12));
            CHECK(encode_weight(decode_word(word, step), step, q) == word);
        }
    }
}

TEST_CASE("in-range encode lands within half a step") {
    Rng rng(7);
    const double step = 0.31;
    for (int trial = 0; trial < 200; ++trial) {
        const double w = (rng.uniform() * 14.0 - 7.0) * step;  // inside the Q=4 range
        const double back = decode_word(encode_weight(w, step, 4), step);
        CHECK(std::abs(back - w) <= step / 2 + 1e-12);
    }
}

TEST_CASE("decode range is exactly the signed grid and monotone in magnitude bits") {
    const int q = 4;
    const double step = 0.5;
    std::set<double> values;
    for (int u = 0; u < (1 << q); ++u) {
        BitWord word(q);
        for (int p = 0; p < q; ++p) word[p] = (u >> (q - 1 - p)) & 1;
        values.insert(decode_word(word, step));
    }
    CHECK(values.size() == 16);
    CHECK(*values.begin() == -8 * step);
    CHECK(*values.rbegin() == 7 * step);
    // consecutive grid points, step apart
    double prev = *values.begin();
    for (auto it = std::next(values.begin()); it != values.end(); ++it) {
        CHECK(*it - prev == doctest::Approx(step));
        prev = *it;
    }
    // setting any magnitude bit increases the value, for either sign bit state
    for (int sign = 0; sign <= 1; ++sign) {
        BitWord base(q, 0);
        base[0] = static_cast<std::uint8_t>(sign);
        for (int p = 1; p < q; ++p) {
            BitWord on = base;
            on[p] = 1;
            CHECK(decode_word(on, step) > decode_word(base, step));
        }
    }
}

TEST_CASE("flip_bit toggles exactly one bit and is an involution") {
    QuantizedLayer layer(3, 2, 4, 0.5);
    const QuantizedLayer flipped = flip_bit(layer, 0, 0, 0);  // sign bit
    CHECK(flipped.weight(0, 0) == -8 * 0.5);
    int diff = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j)
            for (int p = 0; p < 4; ++p) diff += flipped.bit(i, j, p) != layer.bit(i, j, p);
    CHECK(diff == 1);
    CHECK(flip_bit(flipped, 0, 0, 0) == layer);

    const QuantizedLayer lsb = flip_bit(layer, 1, 1, 3);
    CHECK(lsb.weight(1, 1) == doctest::Approx(0.5));

    CHECK_THROWS_AS(flip_bit(layer, 3, 0, 0), std::out_of_range);
    CHECK_THROWS_AS(flip_bit(layer, 0, 2, 0), std::out_of_range);
    CHECK_THROWS_AS(flip_bit(layer, 0, 0, 4), std::out_of_range);
}

TEST_CASE("hamming distance equals squared euclidean distance on binary vectors") {
    CHECK(hamming_distance({0, 1, 0, 1}, {0, 1, 0, 1}) == 0);
    CHECK(hamming_distance({0, 0, 0, 0}, {1, 1, 1, 1}) == 4);
    CHECK_THROWS_AS(hamming_distance({0, 1}, {0, 1, 1}), std::invalid_argument);

    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 64;
        std::vector<std::uint8_t> a(n), b(n);
        Eigen::VectorXd av(n), bv(n);
        for (int i = 0; i < n; ++i) {
            a[i] = rng.uniform() < 0.5;
            b[i] = rng.uniform() < 0.5;
            av(i) = a[i];
            bv(i) = b[i];
        }
        CHECK(hamming_distance(a, b) == doctest::Approx((av - bv).squaredNorm()));
    }
}

TEST_CASE("layer round-trips through its serialized block") {
    Rng rng(3);
    Eigen::MatrixXd w(4, 5);
    for (int i = 0; i < w.size(); ++i) w(i) = rng.normal();
    const QuantizedLayer layer = QuantizedLayer::from_weights(w, 8);

    std::stringstream buffer;
    layer.write(buffer);
    const QuantizedLayer back = QuantizedLayer::read(buffer);
    CHECK(back == layer);
    CHECK(back.weights() == layer.weights());
}

TEST_CASE("from_weights reproduces on-grid weights exactly") {
    Eigen::MatrixXd w(2, 3);
    w << 1.0, -0.5, 0.25, 0.75, -1.0, 0.0;
    const QuantizedLayer layer = QuantizedLayer::from_weights(w, 4);
    // step = 1/7; these weights are not all on the grid, so check the bound
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(layer.weight(i, j) - w(i, j)) <= layer.step_size() / 2 + 1e-12);

    Eigen::MatrixXd grid(2, 2);
    grid << 0.5, -1.0, 1.5, 3.5;  // all multiples of step = 3.5/7 = 0.5
    const QuantizedLayer exact = QuantizedLayer::from_weights(grid, 4);
    CHECK(exact.step_size() == doctest::Approx(0.5));
    CHECK((exact.weights() - grid).cwiseAbs().maxCoeff() < 1e-12);
}
