#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace kprnn {

/// Row-major dense matrix of 64-bit reals. The workhorse value type for
/// weights, activations and expanded Kronecker products.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> r);
    static DenseMatrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return rows * cols; }
    bool empty() const { return rows == 0 || cols == 0; }
};

DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
std::vector<double> matvec(const DenseMatrix& a, const std::vector<double>& x);

bool all_finite(const DenseMatrix& a);
bool all_finite(const std::vector<double>& v);

/// max_ij |a_ij - b_ij|; matrices must have equal shape.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

/// Relative L2 error |a-b| / max(|b|, eps).
double rel_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace kprnn
