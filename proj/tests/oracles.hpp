#pragma once

// Test-only reference implementations, kept independent of the library's
// fast paths so that each check exercises two distinct computation routes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "kprnn/dense_matrix.hpp"
#include "kprnn/kpcore.hpp"
#include "kprnn/rng.hpp"

namespace oracles {

/// Kronecker expansion straight from the index formula
/// A[i*m2+k][j*n2+l] = b[i][j] * c[k][l], no block loops shared with the
/// library implementation.
inline kprnn::DenseMatrix kron_expand_index_formula(const kprnn::DenseMatrix& b,
                                                    const kprnn::DenseMatrix& c) {
    kprnn::DenseMatrix a(b.rows * c.rows, b.cols * c.cols);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t col = 0; col < a.cols; ++col)
            a(r, col) = b(r / c.rows, col / c.cols) * c(r % c.rows, col % c.cols);
    return a;
}

/// Expand-then-multiply reference for kp_matvec.
inline std::vector<double> kp_matvec_via_expansion(const kprnn::KronFactorPair& pair,
                                                   const std::vector<double>& x) {
    return kprnn::matvec(kron_expand_index_formula(pair.b, pair.c), x);
}

/// Stack upper block over expanded lower block, then dense matvec.
inline std::vector<double> hkp_matvec_via_stacking(const kprnn::HybridMatrix& h,
                                                   const std::vector<double>& x) {
    const std::size_t n = h.cols();
    kprnn::DenseMatrix stacked(h.rows(), n);
    for (std::size_t i = 0; i < h.upper.rows; ++i)
        for (std::size_t j = 0; j < n; ++j) stacked(i, j) = h.upper(i, j);
    if (!h.lower.b.empty()) {
        const kprnn::DenseMatrix low = kron_expand_index_formula(h.lower.b, h.lower.c);
        for (std::size_t i = 0; i < low.rows; ++i)
            for (std::size_t j = 0; j < n; ++j) stacked(h.upper.rows + i, j) = low(i, j);
    }
    return kprnn::matvec(stacked, x);
}

/// Central finite difference of a scalar function at one coordinate.
inline double central_diff(const std::function<double()>& eval, double& param, double step) {
    const double saved = param;
    param = saved + step;
    const double fp = eval();
    param = saved - step;
    const double fm = eval();
    param = saved;
    return (fp - fm) / (2.0 * step);
}

/// Combined relative/absolute gradient comparison. The absolute term absorbs
/// central-difference rounding noise (~1e-9 at step 1e-6 for O(1) losses),
/// which dominates whenever the true gradient is itself tiny.
inline bool grad_close(double analytic, double fd, double rel_tol, double abs_tol = 1e-8) {
    const double mag = std::max(std::fabs(analytic), std::fabs(fd));
    return std::fabs(analytic - fd) <= rel_tol * mag + abs_tol;
}

inline kprnn::DenseMatrix random_matrix(kprnn::Rng& rng, std::size_t r, std::size_t c,
                                        double lo = -1.0, double hi = 1.0) {
    kprnn::DenseMatrix m(r, c);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

inline std::vector<double> random_vector(kprnn::Rng& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

/// Random matrix with exact rank k (product of m x k and k x n factors).
inline kprnn::DenseMatrix random_rank_k(kprnn::Rng& rng, std::size_t m, std::size_t n,
                                        std::size_t k) {
    return kprnn::matmul(random_matrix(rng, m, k), random_matrix(rng, k, n));
}

// --- Symmetric eigenvalue oracle: Householder tridiagonalization followed by
// --- Sturm-sequence bisection. Used to cross-check singular values through
// --- the Gram matrix route.

inline void tridiagonalize(kprnn::DenseMatrix a, std::vector<double>& diag,
                           std::vector<double>& off) {
    const std::size_t n = a.rows;
    diag.assign(n, 0.0);
    off.assign(n, 0.0);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double alpha = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) alpha += a(i, k) * a(i, k);
        alpha = std::sqrt(alpha);
        if (a(k + 1, k) > 0) alpha = -alpha;
        const double r2 = alpha * alpha - a(k + 1, k) * alpha;
        if (r2 <= 0.0) continue;
        std::vector<double> v(n, 0.0);
        v[k + 1] = a(k + 1, k) - alpha;
        for (std::size_t i = k + 2; i < n; ++i) v[i] = a(i, k);
        const double inv2r2 = 1.0 / (2.0 * r2);
        // A <- (I - v v^T / r2) A (I - v v^T / r2)
        std::vector<double> w(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += a(i, j) * v[j];
            w[i] = s / r2;
        }
        double vw = 0.0;
        for (std::size_t i = 0; i < n; ++i) vw += v[i] * w[i];
        for (std::size_t i = 0; i < n; ++i) {
            const double ui = w[i] - vw * v[i] * inv2r2;
            for (std::size_t j = 0; j < n; ++j)
                a(i, j) -= v[i] * (w[j] - vw * v[j] * inv2r2) + ui * v[j];
        }
    }
    for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
    for (std::size_t i = 0; i + 1 < n; ++i) off[i] = a(i + 1, i);
}

/// Number of eigenvalues of the tridiagonal matrix strictly below x.
inline std::size_t sturm_count(const std::vector<double>& diag, const std::vector<double>& off,
                               double x) {
    std::size_t count = 0;
    double q = 1.0;
    for (std::size_t i = 0; i < diag.size(); ++i) {
        const double offsq = i == 0 ? 0.0 : off[i - 1] * off[i - 1];
        q = diag[i] - x - (q != 0.0 ? offsq / q : offsq / 1e-300);
        if (q < 0.0) ++count;
    }
    return count;
}

/// All eigenvalues of a symmetric matrix, ascending, via bisection.
inline std::vector<double> symmetric_eigenvalues_bisection(const kprnn::DenseMatrix& sym) {
    const std::size_t n = sym.rows;
    std::vector<double> diag, off;
    tridiagonalize(sym, diag, off);
    double radius = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = std::fabs(diag[i]);
        if (i > 0) row += std::fabs(off[i - 1]);
        if (i + 1 < n) row += std::fabs(off[i]);
        radius = std::max(radius, row);
    }
    radius += 1.0;
    std::vector<double> eig(n);
    for (std::size_t k = 0; k < n; ++k) {
        double lo = -radius, hi = radius;
        for (int it = 0; it < 200 && hi - lo > 1e-14 * radius; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (sturm_count(diag, off, mid) <= k)
                lo = mid;
            else
                hi = mid;
        }
        eig[k] = 0.5 * (lo + hi);
    }
    std::sort(eig.begin(), eig.end());
    return eig;
}

/// Singular values through the Gram matrix A^T A, descending.
inline std::vector<double> singular_values_via_gram_bisection(const kprnn::DenseMatrix& a) {
    const kprnn::DenseMatrix gram = kprnn::matmul(kprnn::transpose(a), a);
    std::vector<double> eig = symmetric_eigenvalues_bisection(gram);
    std::vector<double> sv;
    for (auto it = eig.rbegin(); it != eig.rend(); ++it) sv.push_back(std::sqrt(std::max(*it, 0.0)));
    return sv;
}

}  // namespace oracles
