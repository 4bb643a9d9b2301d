#pragma once

#include <cstdint>
#include <vector>

#include "kprnn/dense_matrix.hpp"

namespace kprnn {

/// Relative threshold under which a singular value counts as zero.
inline constexpr double kRankTolerance = 1e-10;

struct SpectralReport {
    std::vector<double> singular_values;  // descending
    std::size_t rank = 0;                 // count of sigma > tol * sigma_max
    double condition_number = 0.0;        // +inf when rank-deficient
    double sigma_max = 0.0;
};

/// Singular values in descending order via one-sided Jacobi on the smaller
/// Gram orientation. Matrices up to 2048 on the short side are supported.
/// Throws std::domain_error on non-finite input.
std::vector<double> singular_values(const DenseMatrix& a);

/// Thin SVD a = u * diag(sigma) * v^T with sigma descending. u is
/// m x min(m,n), v is n x min(m,n).
struct SvdResult {
    DenseMatrix u;
    std::vector<double> sigma;
    DenseMatrix v;
};

SvdResult svd(const DenseMatrix& a);

/// Numerical rank: number of singular values above tol * sigma_max.
std::size_t rank_numeric(const DenseMatrix& a, double tol = kRankTolerance);

/// sigma_max / sigma_min over the full square-rank spectrum; +inf when the
/// matrix is numerically rank-deficient.
double condition_number(const DenseMatrix& a, double tol = kRankTolerance);

struct AmplificationCheck {
    double sampled_max = 0.0;  // max |A x|_2 over sampled unit vectors
    double sigma_max = 0.0;
    bool bound_holds = false;  // sampled_max <= sigma_max * (1 + 1e-9)
};

/// Samples unit vectors (the canonical basis first, then random directions)
/// and verifies that sigma_max upper-bounds the output norm.
AmplificationCheck amplification_bound_check(const DenseMatrix& a, std::size_t trials,
                                             std::uint64_t seed = 0);

SpectralReport spectral_report(const DenseMatrix& a, double tol = kRankTolerance);

}  // namespace kprnn
