#include <doctest.h>

#include <cmath>

#include "kprnn/cells.hpp"
#include "kprnn/kpcore.hpp"
#include "kprnn/quant.hpp"
#include "kprnn/rng.hpp"
#include "oracles.hpp"

using namespace kprnn;

TEST_CASE("int8 zero matrix round trip") {
    const QuantTensor q = quantize8(DenseMatrix(3, 3), QuantScheme::Int8Symmetric);
    CHECK(q.scale == 1.0);
    for (auto code : q.payload) CHECK(code == 0);
    CHECK(max_abs_diff(dequantize8(q), DenseMatrix(3, 3)) == 0.0);
}

TEST_CASE("int8 grid-aligned values round trip exactly") {
    DenseMatrix a(1, 5);
    const double s = 0.031;
    a.data = {127 * s, -127 * s, 64 * s, -3 * s, 0.0};
    const QuantTensor q = quantize8(a, QuantScheme::Int8Symmetric);
    CHECK(q.scale == doctest::Approx(s).epsilon(1e-15));
    CHECK(max_abs_diff(dequantize8(q), a) < 1e-15);
}

TEST_CASE("int8 error bound on random U(-1,1) data") {
    Rng rng(1);
    const DenseMatrix a = oracles::random_matrix(rng, 64, 64);
    const QuantTensor q = quantize8(a, QuantScheme::Int8Symmetric);
    const DenseMatrix back = dequantize8(q);
    CHECK(max_abs_diff(back, a) <= q.scale / 2.0 + 1e-12);
}

TEST_CASE("int8 exhaustive code round trip") {
    for (int code = -127; code <= 127; ++code) {
        QuantTensor q;
        q.scheme = QuantScheme::Int8Symmetric;
        q.scale = 0.017;
        q.rows = 1;
        q.cols = 1;
        q.payload = {static_cast<std::uint8_t>(static_cast<std::int8_t>(code))};
        const DenseMatrix v = dequantize8(q);
        const QuantTensor q2 = quantize8(v, QuantScheme::Int8Symmetric);
        CHECK(max_abs_diff(dequantize8(q2), v) < 1e-15);
    }
}

TEST_CASE("int8 code 127 decodes to 127*scale") {
    QuantTensor q;
    q.scheme = QuantScheme::Int8Symmetric;
    q.scale = 0.25;
    q.rows = q.cols = 1;
    q.payload = {127};
    CHECK(dequantize8(q).data[0] == doctest::Approx(31.75));
}

TEST_CASE("e4m3 exhaustive code round trip is value-idempotent") {
    for (int code = 0; code < 256; ++code) {
        const double v = e4m3_decode(static_cast<std::uint8_t>(code));
        const double v2 = e4m3_decode(e4m3_encode(v));
        CHECK(v2 == v);
    }
}

TEST_CASE("e4m3 spot values") {
    CHECK(e4m3_decode(e4m3_encode(1.5)) == 1.5);
    CHECK(e4m3_decode(e4m3_encode(0.0)) == 0.0);
    CHECK(e4m3_decode(e4m3_encode(480.0)) == 480.0);
    CHECK(e4m3_decode(e4m3_encode(1e6)) == 480.0);   // saturation
    CHECK(e4m3_decode(e4m3_encode(-1e6)) == -480.0);
    CHECK(e4m3_decode(e4m3_encode(0x1.0p-9)) == 0x1.0p-9);  // smallest subnormal
}

TEST_CASE("e4m3 half-ulp error bound on in-range values") {
    Rng rng(2);
    for (int t = 0; t < 20000; ++t) {
        const double v = rng.uniform(-448.0, 448.0);
        const double back = e4m3_decode(e4m3_encode(v));
        const int e = std::max(static_cast<int>(std::floor(std::log2(std::fabs(v) + 1e-300))), -6);
        const double half_ulp = 0.5 * std::ldexp(1.0, e - 3);
        CHECK(std::fabs(back - v) <= half_ulp + 1e-15);
    }
}

TEST_CASE("quantize then dequantize is idempotent on random tensors") {
    Rng rng(3);
    for (QuantScheme scheme : {QuantScheme::Int8Symmetric, QuantScheme::Float8E4M3}) {
        const DenseMatrix a = oracles::random_matrix(rng, 9, 7, -3.0, 3.0);
        const DenseMatrix once = dequantize8(quantize8(a, scheme));
        const DenseMatrix twice = dequantize8(quantize8(once, scheme));
        CHECK(max_abs_diff(once, twice) == 0.0);
    }
}

TEST_CASE("per-factor dequantization commutes with expansion") {
    Rng rng(4);
    const KronFactorPair p{oracles::random_matrix(rng, 5, 3), oracles::random_matrix(rng, 4, 6)};
    const KronFactorPair pq{dequantize8(quantize8(p.b, QuantScheme::Int8Symmetric)),
                            dequantize8(quantize8(p.c, QuantScheme::Int8Symmetric))};
    const auto x = oracles::random_vector(rng, 18);
    // evaluating with dequantized factors == expanding the dequantized factors
    CHECK(rel_error(kp_matvec(pq, x), matvec(kron_expand(pq), x)) < 1e-10);
}

TEST_CASE("quantized network forward") {
    const auto net =
        build_compressed_network(CellKind::LSTM, 8, 16, 4, RepChoice::kp(), /*seed=*/0);
    Rng rng(5);
    const auto make_seq = [&](std::size_t T) {
        std::vector<std::vector<double>> seq;
        for (std::size_t t = 0; t < T; ++t) seq.push_back(oracles::random_vector(rng, 8));
        return seq;
    };

    SUBCASE("zero-weight network is unchanged by quantization") {
        NetworkSpec zeros = expand_to_dense(net);
        for (auto& g : zeros.cell.gates) g = DenseMatrix(16, 24);
        zeros.softmax_w = DenseMatrix(4, 16);
        const auto q = quantize_network(zeros, QuantScheme::Int8Symmetric);
        const auto seq = make_seq(3);
        CHECK(quantized_network_forward(q, seq) == sequence_forward(zeros, seq));
    }

    SUBCASE("argmax agreement with full precision on random inputs") {
        const auto q = quantize_network(net, QuantScheme::Int8Symmetric);
        int agree = 0;
        const int trials = 200;
        for (int t = 0; t < trials; ++t) {
            const auto seq = make_seq(5);
            const auto full = sequence_forward(net, seq);
            const auto quant = quantized_network_forward(q, seq);
            const auto amax = [](const std::vector<double>& v) {
                return std::max_element(v.begin(), v.end()) - v.begin();
            };
            if (amax(full) == amax(quant)) ++agree;
        }
        CHECK(agree >= trials * 90 / 100);
    }
}

TEST_CASE("quantized_size_report") {
    SUBCASE("dense MNIST-shaped net counts one byte per parameter plus scales") {
        const auto net = build_compressed_network(CellKind::LSTM, 28, 40, 10, RepChoice::dense());
        const QuantSizeReport rep = quantized_size_report(net);
        std::size_t code_bytes = 0, scale_bytes = 0;
        for (const auto& item : rep.items) {
            code_bytes += item.bytes_8bit;
            scale_bytes += item.scale_bytes;
        }
        CHECK(code_bytes == 11450);
        CHECK(rep.total_bytes_32bit == 11450 * 4);
        CHECK(rep.total_bytes_8bit == 11450 + scale_bytes);
        CHECK(scale_bytes == 8 * (4 + 4 + 2));  // 4 gate tensors, 4 biases, softmax w+b
    }

    SUBCASE("KP KWS-LSTM gate codes take 2016 bytes") {
        const auto net = build_compressed_network(CellKind::LSTM, 10, 118, 12, RepChoice::kp());
        const QuantSizeReport rep = quantized_size_report(net);
        std::size_t gate_bytes = 0;
        for (const auto& item : rep.items)
            if (item.name.rfind("gate", 0) == 0) gate_bytes += item.bytes_8bit;
        CHECK(gate_bytes == 2016);
    }

    SUBCASE("empty-ish accounting stays consistent") {
        const auto net = build_compressed_network(CellKind::RNN, 1, 1, 1, RepChoice::dense());
        const QuantSizeReport rep = quantized_size_report(net);
        CHECK(rep.total_bytes_32bit == parameter_count(net).total_params * 4);
    }
}
