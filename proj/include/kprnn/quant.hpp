#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kprnn/dense_matrix.hpp"

namespace kprnn {

enum class QuantScheme : std::uint8_t {
    Int8Symmetric,  // per-tensor scale, codes in [-127, 127]
    Float8E4M3,     // 1-4-3 minifloat, saturating at +-480, no scale
};

const char* quant_scheme_name(QuantScheme s);
QuantScheme quant_scheme_from_name(const std::string& name);

struct QuantTensor {
    QuantScheme scheme = QuantScheme::Int8Symmetric;
    std::vector<std::uint8_t> payload;  // one code per element, row-major
    double scale = 1.0;                 // int8 scheme only
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Encode a matrix to 8-bit codes. int8: scale = max|a|/127, round to nearest
/// (all-zero input uses scale 1). e4m3: round to nearest even on the minifloat
/// grid with saturation.
QuantTensor quantize8(const DenseMatrix& a, QuantScheme scheme);

DenseMatrix dequantize8(const QuantTensor& q);

/// Scalar e4m3 codec, exposed for exhaustive code-level checks.
std::uint8_t e4m3_encode(double v);
double e4m3_decode(std::uint8_t code);

}  // namespace kprnn
