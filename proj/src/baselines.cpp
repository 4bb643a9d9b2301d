#include "kprnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kprnn/analysis.hpp"

namespace kprnn {

SparseCSR magnitude_prune(const DenseMatrix& a, double sparsity) {
    if (sparsity < 0.0 || sparsity >= 1.0)
        throw std::invalid_argument("magnitude_prune: sparsity must be in [0, 1)");
    const std::size_t total = a.size();
    const std::size_t to_drop = static_cast<std::size_t>(sparsity * static_cast<double>(total));

    // Rank entries by magnitude, row-major position breaking ties.
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return std::fabs(a.data[x]) < std::fabs(a.data[y]);
    });
    std::vector<char> keep(total, 1);
    for (std::size_t k = 0; k < to_drop; ++k) keep[order[k]] = 0;

    SparseCSR s;
    s.rows = a.rows;
    s.cols = a.cols;
    s.row_ptr.assign(a.rows + 1, 0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            const std::size_t flat = i * a.cols + j;
            if (!keep[flat]) continue;
            s.col_idx.push_back(static_cast<std::uint32_t>(j));
            s.values.push_back(a.data[flat]);
        }
        s.row_ptr[i + 1] = s.values.size();
    }
    return s;
}

std::vector<double> csr_matvec(const SparseCSR& s, const std::vector<double>& x) {
    if (x.size() != s.cols) throw std::invalid_argument("csr_matvec: dimension mismatch");
    std::vector<double> y(s.rows, 0.0);
    for (std::size_t i = 0; i < s.rows; ++i) {
        double acc = 0.0;
        for (std::size_t k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k)
            acc += s.values[k] * x[s.col_idx[k]];
        y[i] = acc;
    }
    return y;
}

DenseMatrix csr_to_dense(const SparseCSR& s) {
    DenseMatrix a(s.rows, s.cols);
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k)
            a(i, s.col_idx[k]) = s.values[k];
    return a;
}

SparseCSR dense_to_csr(const DenseMatrix& a) { return magnitude_prune(a, 0.0); }

LmfRank lmf_rank_for_target(std::size_t m, std::size_t n, double target_ratio) {
    if (target_ratio < 1.0) throw std::invalid_argument("lmf_rank_for_target: target must be >= 1");
    const double dense = static_cast<double>(m) * static_cast<double>(n);
    const double per_rank = static_cast<double>(m + n);
    LmfRank out;
    out.d = std::max<std::size_t>(1, static_cast<std::size_t>(dense / (target_ratio * per_rank)));
    const std::size_t dmax = std::min(m, n);
    if (out.d > dmax) {
        out.d = dmax;
        out.clamped = true;
    }
    out.achieved_ratio = dense / (static_cast<double>(out.d) * per_rank);
    return out;
}

LowRankPair lmf_factorize(const DenseMatrix& a, std::size_t d) {
    if (d < 1 || d > std::min(a.rows, a.cols))
        throw std::invalid_argument("lmf_factorize: rank out of range");
    const SvdResult f = svd(a);
    LowRankPair p;
    p.d = d;
    p.u = DenseMatrix(a.rows, d);
    p.v = DenseMatrix(d, a.cols);
    for (std::size_t k = 0; k < d; ++k) {
        const double root = std::sqrt(f.sigma[k]);
        for (std::size_t i = 0; i < a.rows; ++i) p.u(i, k) = f.u(i, k) * root;
        for (std::size_t j = 0; j < a.cols; ++j) p.v(k, j) = f.v(j, k) * root;
    }
    return p;
}

std::vector<double> lmf_matvec(const LowRankPair& p, const std::vector<double>& x) {
    if (x.size() != p.v.cols) throw std::invalid_argument("lmf_matvec: dimension mismatch");
    return matvec(p.u, matvec(p.v, x));
}

}  // namespace kprnn
