#include "kprnn/kpcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kprnn {

std::size_t MultiKronChain::product_rows() const {
    std::size_t r = 1;
    for (const auto& f : factors) r *= f.rows;
    return r;
}

std::size_t MultiKronChain::product_cols() const {
    std::size_t c = 1;
    for (const auto& f : factors) c *= f.cols;
    return c;
}

std::vector<std::size_t> prime_factorize(std::size_t n) {
    if (n == 0) throw std::invalid_argument("prime_factorize: n must be positive");
    if (n == 1) return {1};
    std::vector<std::size_t> out;
    for (std::size_t p = 2; p * p <= n; ++p) {
        while (n % p == 0) {
            out.push_back(p);
            n /= p;
        }
    }
    if (n > 1) out.push_back(n);
    return out;
}

std::vector<std::size_t> reduce_list(std::vector<std::size_t> factors) {
    if (factors.empty()) throw std::invalid_argument("reduce_list: empty input");
    if (factors.size() == 1) factors.insert(factors.begin(), 1);
    while (factors.size() > 2) {
        const std::size_t merged = factors[0] * factors[1];
        factors.erase(factors.begin());
        factors[0] = merged;
        std::sort(factors.begin(), factors.end());
    }
    return factors;
}

ShapePlan select_factor_shapes(std::size_t m, std::size_t n) {
    if (m == 0 || n == 0) throw std::invalid_argument("select_factor_shapes: dims must be positive");
    std::vector<std::size_t> list1 = reduce_list(prime_factorize(m));
    std::vector<std::size_t> list2 = reduce_list(prime_factorize(n));
    std::sort(list1.begin(), list1.end(), std::greater<>());  // descending
    std::sort(list2.begin(), list2.end());                    // ascending

    ShapePlan plan;
    plan.first = {list1[0], list2[0]};
    plan.second = {list1[1], list2[1]};
    plan.target_rows = m;
    plan.target_cols = n;
    plan.params_compressed =
        plan.first.rows * plan.first.cols + plan.second.rows * plan.second.cols;
    plan.params_dense = m * n;
    return plan;
}

DenseMatrix kron_expand(const KronFactorPair& pair, std::size_t element_cap) {
    const DenseMatrix& b = pair.b;
    const DenseMatrix& c = pair.c;
    if (b.empty() || c.empty()) throw std::invalid_argument("kron_expand: empty factor");
    const std::size_t rows = b.rows * c.rows;
    const std::size_t cols = b.cols * c.cols;
    if (rows * cols > element_cap)
        throw std::length_error("kron_expand: " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " exceeds element cap " +
                                std::to_string(element_cap));
    DenseMatrix a(rows, cols);
    for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            const double v = b(i, j);
            for (std::size_t k = 0; k < c.rows; ++k) {
                double* dst = &a.data[(i * c.rows + k) * cols + j * c.cols];
                const double* src = &c.data[k * c.cols];
                for (std::size_t l = 0; l < c.cols; ++l) dst[l] = v * src[l];
            }
        }
    }
    return a;
}

DenseMatrix multi_kron_expand(const MultiKronChain& chain, std::size_t element_cap) {
    if (chain.factors.size() < 2)
        throw std::invalid_argument("multi_kron_expand: need at least two factors");
    DenseMatrix acc = chain.factors[0];
    for (std::size_t i = 1; i < chain.factors.size(); ++i)
        acc = kron_expand({acc, chain.factors[i]}, element_cap);
    return acc;
}

namespace {

// Column k of the n2 x n1 matrix X is segment k of x.
DenseMatrix segments_to_matrix(const std::vector<double>& x, std::size_t n2, std::size_t n1) {
    DenseMatrix xm(n2, n1);
    for (std::size_t k = 0; k < n1; ++k)
        for (std::size_t i = 0; i < n2; ++i) xm(i, k) = x[k * n2 + i];
    return xm;
}

std::vector<double> flatten_column_major(const DenseMatrix& y) {
    std::vector<double> out(y.size());
    for (std::size_t j = 0; j < y.cols; ++j)
        for (std::size_t i = 0; i < y.rows; ++i) out[j * y.rows + i] = y(i, j);
    return out;
}

}  // namespace

std::vector<double> kp_matvec(const KronFactorPair& pair, const std::vector<double>& x) {
    const std::size_t n1 = pair.b.cols, n2 = pair.c.cols;
    if (x.size() != n1 * n2)
        throw std::invalid_argument("kp_matvec: x length " + std::to_string(x.size()) +
                                    " != " + std::to_string(n1 * n2));
    const DenseMatrix xm = segments_to_matrix(x, n2, n1);
    const DenseMatrix y = matmul(matmul(pair.c, xm), transpose(pair.b));
    return flatten_column_major(y);
}

KpMatvecGrad kp_matvec_grad(const KronFactorPair& pair, const std::vector<double>& x,
                            const std::vector<double>& g) {
    const std::size_t m1 = pair.b.rows, n1 = pair.b.cols;
    const std::size_t m2 = pair.c.rows, n2 = pair.c.cols;
    if (x.size() != n1 * n2) throw std::invalid_argument("kp_matvec_grad: x length mismatch");
    if (g.size() != m1 * m2) throw std::invalid_argument("kp_matvec_grad: g length mismatch");

    const DenseMatrix xm = segments_to_matrix(x, n2, n1);  // n2 x n1
    const DenseMatrix gm = segments_to_matrix(g, m2, m1);  // m2 x m1

    KpMatvecGrad grad;
    // L = tr(G^T C X B^T):  dB = G^T C X,  dC = G B X^T,  dX = C^T G B.
    grad.db = matmul(transpose(gm), matmul(pair.c, xm));
    grad.dc = matmul(matmul(gm, pair.b), transpose(xm));
    grad.dx = flatten_column_major(matmul(transpose(pair.c), matmul(gm, pair.b)));
    return grad;
}

std::vector<double> hkp_matvec(const HybridMatrix& h, const std::vector<double>& x) {
    if (x.size() != h.cols()) throw std::invalid_argument("hkp_matvec: x length mismatch");
    std::vector<double> y;
    y.reserve(h.rows());
    if (h.upper.rows) {
        if (h.upper.cols != x.size()) throw std::invalid_argument("hkp_matvec: upper shape mismatch");
        std::vector<double> yu = matvec(h.upper, x);
        y.insert(y.end(), yu.begin(), yu.end());
    }
    if (!h.lower.b.empty()) {
        std::vector<double> yl = kp_matvec(h.lower, x);
        y.insert(y.end(), yl.begin(), yl.end());
    }
    return y;
}

double compression_ratio(std::size_t m, std::size_t n, const ShapePlan& plan) {
    if (plan.first.rows * plan.second.rows != m || plan.first.cols * plan.second.cols != n)
        throw std::invalid_argument("compression_ratio: plan does not cover target shape");
    const std::size_t params =
        plan.first.rows * plan.first.cols + plan.second.rows * plan.second.cols;
    return static_cast<double>(m * n) / static_cast<double>(params);
}

namespace {

std::vector<std::size_t> divisors(std::size_t n) {
    std::vector<std::size_t> d;
    for (std::size_t i = 1; i <= n; ++i)
        if (n % i == 0) d.push_back(i);
    return d;
}

}  // namespace

std::vector<KpRatioEntry> enumerate_kp_ratios(std::size_t m, std::size_t n) {
    if (m < 2 || n < 2) throw std::invalid_argument("enumerate_kp_ratios: dims must be >= 2");
    std::vector<KpRatioEntry> out;
    const double dense = static_cast<double>(m) * static_cast<double>(n);
    for (std::size_t m1 : divisors(m)) {
        const std::size_t m2 = m / m1;
        for (std::size_t n1 : divisors(n)) {
            const std::size_t n2 = n / n1;
            // Keep one representative of each swap-symmetric pair.
            if (std::make_pair(m1, n1) > std::make_pair(m2, n2)) continue;
            KpRatioEntry e;
            e.first = {m1, n1};
            e.second = {m2, n2};
            e.params = m1 * n1 + m2 * n2;
            e.ratio = dense / static_cast<double>(e.params);
            out.push_back(e);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const KpRatioEntry& a, const KpRatioEntry& b) { return a.ratio > b.ratio; });
    return out;
}

HkpPlan hkp_rank_rows_for_target(std::size_t m, std::size_t n, double target_ratio) {
    if (target_ratio < 1.0)
        throw std::invalid_argument("hkp_rank_rows_for_target: target ratio must be >= 1");
    const double dense = static_cast<double>(m) * static_cast<double>(n);
    double best_ratio = 0.0;
    // Scan from the densest admissible representation down: the largest r
    // still meeting the target keeps the most unconstrained rows.
    for (std::size_t ri = m + 1; ri-- > 0;) {
        const std::size_t r = ri;
        HkpPlan plan;
        plan.r = r;
        if (r == m) {
            plan.params = m * n;
        } else {
            plan.lower_plan = select_factor_shapes(m - r, n);
            plan.params = r * n + plan.lower_plan.params_compressed;
        }
        plan.achieved_ratio = dense / static_cast<double>(plan.params);
        best_ratio = std::max(best_ratio, plan.achieved_ratio);
        const bool meets = plan.achieved_ratio >= target_ratio;
        if (meets && (r < m || target_ratio <= 1.0)) return plan;
    }
    throw std::invalid_argument("hkp_rank_rows_for_target: target " +
                                std::to_string(target_ratio) +
                                " infeasible; max achievable ratio is " +
                                std::to_string(best_ratio));
}

std::size_t flops_dense(std::size_t m, std::size_t n) { return m * n; }

std::size_t flops_kp(std::size_t m1, std::size_t n1, std::size_t m2, std::size_t n2) {
    return m2 * n2 * n1 + m2 * n1 * m1;  // C*X, then (C*X)*B^T
}

std::size_t flops_kp(const ShapePlan& plan) {
    return flops_kp(plan.first.rows, plan.first.cols, plan.second.rows, plan.second.cols);
}

std::size_t flops_hkp(std::size_t r, std::size_t n, const ShapePlan& lower_plan) {
    return r * n + flops_kp(lower_plan);
}

std::size_t flops_lmf(std::size_t m, std::size_t n, std::size_t d) { return d * n + m * d; }

std::size_t flops_csr(std::size_t nnz) { return nnz; }

KronFactorPair make_pair_for_plan(const ShapePlan& plan) {
    return {DenseMatrix(plan.first.rows, plan.first.cols),
            DenseMatrix(plan.second.rows, plan.second.cols)};
}

}  // namespace kprnn
