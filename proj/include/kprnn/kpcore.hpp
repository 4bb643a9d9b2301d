#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kprnn/dense_matrix.hpp"

namespace kprnn {

/// Default cap on the element count of an expanded Kronecker product.
/// Expansion is a debugging/oracle path; the fast kernels never expand.
inline constexpr std::size_t kDefaultExpandCap = std::size_t{1} << 26;

/// Two-factor Kronecker representation A = b (x) c. The represented matrix
/// has shape (b.rows*c.rows) x (b.cols*c.cols).
struct KronFactorPair {
    DenseMatrix b;  // left factor,  m1 x n1
    DenseMatrix c;  // right factor, m2 x n2

    std::size_t product_rows() const { return b.rows * c.rows; }
    std::size_t product_cols() const { return b.cols * c.cols; }
    std::size_t param_count() const { return b.size() + c.size(); }
};

/// Chain of two or more Kronecker factors, expanded left to right.
struct MultiKronChain {
    std::vector<DenseMatrix> factors;

    std::size_t product_rows() const;
    std::size_t product_cols() const;
};

/// Unconstrained dense block of r rows stacked over a Kronecker pair that
/// represents the remaining (m-r) x n rows. r == m means the lower pair is
/// absent (pure dense); r == 0 means pure Kronecker.
struct HybridMatrix {
    DenseMatrix upper;     // r x n
    KronFactorPair lower;  // represents (m-r) x n; empty factors when r == m
    std::size_t r = 0;

    std::size_t rows() const { return r + (lower.b.empty() ? 0 : lower.product_rows()); }
    std::size_t cols() const { return upper.rows ? upper.cols : lower.product_cols(); }
    std::size_t param_count() const {
        return upper.size() + (lower.b.empty() ? 0 : lower.param_count());
    }
};

struct FactorShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool operator==(const FactorShape&) const = default;
};

/// Factor dimensions chosen for an m x n target, plus derived parameter
/// counts. `first` is the left Kronecker operand, `second` the right one.
struct ShapePlan {
    FactorShape first;
    FactorShape second;
    std::size_t target_rows = 0;
    std::size_t target_cols = 0;
    std::size_t params_compressed = 0;
    std::size_t params_dense = 0;

    double ratio() const {
        return static_cast<double>(params_dense) / static_cast<double>(params_compressed);
    }
};

/// Ascending prime factorization with multiplicity. n == 1 yields [1], the
/// padding convention that lets every dimension admit a two-element split.
std::vector<std::size_t> prime_factorize(std::size_t n);

/// Repeatedly merges the two smallest elements until exactly two remain,
/// keeping the list ascending. Single-element input is padded with 1 first.
/// The product of the output equals the product of the input.
std::vector<std::size_t> reduce_list(std::vector<std::size_t> factors);

/// Chooses factor dimensions for an m x n matrix: the row dimension's reduced
/// pair sorted descending is crossed with the column dimension's reduced pair
/// sorted ascending, which empirically maximizes compression among the
/// reduced splits.
ShapePlan select_factor_shapes(std::size_t m, std::size_t n);

/// Materializes b (x) c. Throws std::length_error when the output would
/// exceed `element_cap` entries.
DenseMatrix kron_expand(const KronFactorPair& pair, std::size_t element_cap = kDefaultExpandCap);

/// Left-fold expansion of a factor chain (associative, so fold order is
/// immaterial up to rounding).
DenseMatrix multi_kron_expand(const MultiKronChain& chain,
                              std::size_t element_cap = kDefaultExpandCap);

/// y = (b (x) c) x without expansion: reshape x into an n2 x n1 matrix X whose
/// column k holds segment k of x, form Y = c * X * b^T and flatten Y column
/// major.
std::vector<double> kp_matvec(const KronFactorPair& pair, const std::vector<double>& x);

struct KpMatvecGrad {
    DenseMatrix db;          // m1 x n1
    DenseMatrix dc;          // m2 x n2
    std::vector<double> dx;  // n1*n2
};

/// Reverse-mode gradients of g . kp_matvec(pair, x) with respect to both
/// factors and the input.
KpMatvecGrad kp_matvec_grad(const KronFactorPair& pair, const std::vector<double>& x,
                            const std::vector<double>& g);

/// y = [upper; b (x) c] x, evaluated blockwise without expansion.
std::vector<double> hkp_matvec(const HybridMatrix& h, const std::vector<double>& x);

/// Dense parameter count of m x n divided by the plan's parameter count.
double compression_ratio(std::size_t m, std::size_t n, const ShapePlan& plan);

struct KpRatioEntry {
    FactorShape first;
    FactorShape second;
    std::size_t params = 0;
    double ratio = 0.0;
};

/// All factorizations m = m1*m2, n = n1*n2 with swap-symmetric duplicates
/// removed, sorted descending by compression ratio.
std::vector<KpRatioEntry> enumerate_kp_ratios(std::size_t m, std::size_t n);

struct HkpPlan {
    std::size_t r = 0;
    ShapePlan lower_plan;         // plan for the (m-r) x n block; unused when r == m
    std::size_t params = 0;       // r*n + lower params (or m*n when r == m)
    double achieved_ratio = 1.0;
};

/// Largest r in [0, m] whose hybrid parameter count still achieves the target
/// compression ratio, i.e. the most unconstrained rows that can be added
/// while staying at or above the target. Throws std::invalid_argument naming
/// the maximum achievable ratio when no r qualifies.
HkpPlan hkp_rank_rows_for_target(std::size_t m, std::size_t n, double target_ratio);

/// Multiply-accumulate counts for one matrix-vector product.
std::size_t flops_dense(std::size_t m, std::size_t n);
std::size_t flops_kp(std::size_t m1, std::size_t n1, std::size_t m2, std::size_t n2);
std::size_t flops_kp(const ShapePlan& plan);
std::size_t flops_hkp(std::size_t r, std::size_t n, const ShapePlan& lower_plan);
std::size_t flops_lmf(std::size_t m, std::size_t n, std::size_t d);
std::size_t flops_csr(std::size_t nnz);

/// Builds a zero-initialized factor pair with the plan's shapes (first -> b,
/// second -> c).
KronFactorPair make_pair_for_plan(const ShapePlan& plan);

}  // namespace kprnn
