#pragma once

#include <cstdint>
#include <vector>

#include "kprnn/dense_matrix.hpp"

namespace kprnn {

/// Compressed sparse row matrix with 32-bit column indices.
struct SparseCSR {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr;  // length rows + 1, nondecreasing
    std::vector<std::uint32_t> col_idx;
    std::vector<double> values;

    std::size_t nnz() const { return values.size(); }
    /// values + 4-byte indices + row pointers, the size a deployment pays.
    std::size_t storage_bytes() const {
        return values.size() * 8 + col_idx.size() * 4 + row_ptr.size() * 4;
    }
};

/// Rank-d factorization a ~ u * v with u m x d and v d x n.
struct LowRankPair {
    DenseMatrix u;
    DenseMatrix v;
    std::size_t d = 0;

    std::size_t param_count() const { return u.size() + v.size(); }
};

/// Zeroes the floor(sparsity * m * n) smallest-magnitude entries (ties broken
/// by row-major position) and stores the survivors in CSR form.
SparseCSR magnitude_prune(const DenseMatrix& a, double sparsity);

std::vector<double> csr_matvec(const SparseCSR& s, const std::vector<double>& x);

DenseMatrix csr_to_dense(const SparseCSR& s);
SparseCSR dense_to_csr(const DenseMatrix& a);

struct LmfRank {
    std::size_t d = 0;
    bool clamped = false;  // true when the target was unreachable and d hit min(m,n)
    double achieved_ratio = 0.0;
};

/// Inner dimension for a target compression ratio:
/// d = max(1, floor(m*n / (target * (m+n)))), clamped to min(m,n).
LmfRank lmf_rank_for_target(std::size_t m, std::size_t n, double target_ratio);

/// Best rank-d Frobenius approximation via truncated SVD. u absorbs the
/// singular values scaled by their square roots symmetrically.
LowRankPair lmf_factorize(const DenseMatrix& a, std::size_t d);

std::vector<double> lmf_matvec(const LowRankPair& p, const std::vector<double>& x);

}  // namespace kprnn
