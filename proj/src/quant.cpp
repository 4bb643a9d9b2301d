#include "kprnn/quant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kprnn {

const char* quant_scheme_name(QuantScheme s) {
    return s == QuantScheme::Int8Symmetric ? "int8_symmetric" : "float8_e4m3";
}

QuantScheme quant_scheme_from_name(const std::string& name) {
    if (name == "int8_symmetric") return QuantScheme::Int8Symmetric;
    if (name == "float8_e4m3") return QuantScheme::Float8E4M3;
    throw std::invalid_argument("unknown quantization scheme: " + name);
}

// 1-4-3 minifloat, exponent bias 7, subnormals at e=0, no inf/nan codes:
// the top code is the largest finite value 480 and encoding saturates there.

double e4m3_decode(std::uint8_t code) {
    const int sign = (code & 0x80) ? -1 : 1;
    const int e = (code >> 3) & 0x0f;
    const int m = code & 0x07;
    double mag;
    if (e == 0)
        mag = (m / 8.0) * 0x1.0p-6;
    else
        mag = (1.0 + m / 8.0) * std::ldexp(1.0, e - 7);
    return sign * mag;
}

std::uint8_t e4m3_encode(double v) {
    if (std::isnan(v)) throw std::domain_error("e4m3_encode: NaN input");
    std::uint8_t sign = 0;
    if (std::signbit(v)) {
        sign = 0x80;
        v = -v;
    }
    if (v == 0.0) return sign;
    const double max_finite = 480.0;
    if (v >= max_finite) return sign | 0x7f;  // saturate

    int e = static_cast<int>(std::floor(std::log2(v)));
    e = std::max(e, -6);  // subnormal range shares the e = -6 grid
    // Round to nearest even on the 2^(e-3) grid.
    const double ulp = std::ldexp(1.0, e - 3);
    double steps = std::nearbyint(v / ulp);  // assumes FE_TONEAREST
    double mag = steps * ulp;
    if (mag >= std::ldexp(2.0, e)) {
        ++e;  // rounded up past the binade boundary
        mag = std::ldexp(2.0, e - 1);
    }
    if (mag > max_finite) return sign | 0x7f;

    int ebits, mbits;
    if (mag < 0x1.0p-6) {
        ebits = 0;
        mbits = static_cast<int>(std::nearbyint(mag * 8.0 * 64.0));
    } else {
        ebits = static_cast<int>(std::floor(std::log2(mag))) + 7;
        const double frac = mag / std::ldexp(1.0, ebits - 7);
        mbits = static_cast<int>(std::nearbyint((frac - 1.0) * 8.0));
        if (mbits == 8) {
            ++ebits;
            mbits = 0;
        }
    }
    return static_cast<std::uint8_t>(sign | (ebits << 3) | mbits);
}

QuantTensor quantize8(const DenseMatrix& a, QuantScheme scheme) {
    if (!all_finite(a)) throw std::domain_error("quantize8: non-finite input");
    QuantTensor q;
    q.scheme = scheme;
    q.rows = a.rows;
    q.cols = a.cols;
    q.payload.resize(a.size());

    if (scheme == QuantScheme::Int8Symmetric) {
        double amax = 0.0;
        for (double v : a.data) amax = std::max(amax, std::fabs(v));
        q.scale = amax > 0.0 ? amax / 127.0 : 1.0;
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            long code = std::lround(a.data[i] / q.scale);
            code = std::min<long>(127, std::max<long>(-127, code));
            q.payload[i] = static_cast<std::uint8_t>(static_cast<std::int8_t>(code));
        }
    } else {
        q.scale = 1.0;
        for (std::size_t i = 0; i < a.data.size(); ++i) q.payload[i] = e4m3_encode(a.data[i]);
    }
    return q;
}

DenseMatrix dequantize8(const QuantTensor& q) {
    DenseMatrix a(q.rows, q.cols);
    if (q.payload.size() != a.size()) throw std::invalid_argument("dequantize8: payload mismatch");
    if (q.scheme == QuantScheme::Int8Symmetric) {
        for (std::size_t i = 0; i < a.data.size(); ++i)
            a.data[i] = static_cast<std::int8_t>(q.payload[i]) * q.scale;
    } else {
        for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = e4m3_decode(q.payload[i]);
    }
    return a;
}

}  // namespace kprnn
