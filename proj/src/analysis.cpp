#include "kprnn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kprnn/rng.hpp"

namespace kprnn {

namespace {

// One-sided Jacobi: rotate column pairs of w until all pairs are orthogonal.
// Column norms of the converged matrix are the singular values.
std::vector<double> one_sided_jacobi(DenseMatrix w) {
    const std::size_t n = w.cols;
    const double eps = 1e-15;
    const int max_sweeps = 64;

    auto col_dot = [&](std::size_t p, std::size_t q) {
        double s = 0.0;
        for (std::size_t i = 0; i < w.rows; ++i) s += w(i, p) * w(i, q);
        return s;
    };

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                const double apq = col_dot(p, q);
                if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < w.rows; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(col_dot(j, j));
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

// Same sweep as above but accumulating the right rotations, so the full
// factorization w = u * diag(sigma) * v^T of the tall input is recovered.
SvdResult one_sided_jacobi_full(DenseMatrix w) {
    const std::size_t n = w.cols;
    DenseMatrix v = DenseMatrix::identity(n);
    const double eps = 1e-15;
    const int max_sweeps = 64;

    auto col_dot = [&](std::size_t p, std::size_t q) {
        double s = 0.0;
        for (std::size_t i = 0; i < w.rows; ++i) s += w(i, p) * w(i, q);
        return s;
    };

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                const double apq = col_dot(p, q);
                if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < w.rows; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    SvdResult out;
    out.sigma.resize(n);
    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < n; ++j) {
        out.sigma[j] = std::sqrt(col_dot(j, j));
        order[j] = j;
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return out.sigma[a] > out.sigma[b]; });

    SvdResult sorted;
    sorted.u = DenseMatrix(w.rows, n);
    sorted.v = DenseMatrix(n, n);
    sorted.sigma.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        const double s = out.sigma[src];
        sorted.sigma[j] = s;
        if (s > 0.0)
            for (std::size_t i = 0; i < w.rows; ++i) sorted.u(i, j) = w(i, src) / s;
        for (std::size_t i = 0; i < n; ++i) sorted.v(i, j) = v(i, src);
    }
    return sorted;
}

}  // namespace

std::vector<double> singular_values(const DenseMatrix& a) {
    if (a.empty()) throw std::invalid_argument("singular_values: empty matrix");
    if (!all_finite(a)) throw std::domain_error("singular_values: non-finite input");
    if (std::min(a.rows, a.cols) > 2048)
        throw std::invalid_argument("singular_values: short side exceeds 2048");
    return a.rows >= a.cols ? one_sided_jacobi(a) : one_sided_jacobi(transpose(a));
}

SvdResult svd(const DenseMatrix& a) {
    if (a.empty()) throw std::invalid_argument("svd: empty matrix");
    if (!all_finite(a)) throw std::domain_error("svd: non-finite input");
    if (a.rows >= a.cols) return one_sided_jacobi_full(a);
    SvdResult t = one_sided_jacobi_full(transpose(a));
    return {std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

std::size_t rank_numeric(const DenseMatrix& a, double tol) {
    const std::vector<double> sv = singular_values(a);
    const double smax = sv.empty() ? 0.0 : sv.front();
    if (smax == 0.0) return 0;
    std::size_t r = 0;
    for (double s : sv)
        if (s > tol * smax) ++r;
    return r;
}

double condition_number(const DenseMatrix& a, double tol) {
    const std::vector<double> sv = singular_values(a);
    const double smax = sv.empty() ? 0.0 : sv.front();
    if (smax == 0.0) return std::numeric_limits<double>::infinity();
    if (sv.back() <= tol * smax) return std::numeric_limits<double>::infinity();
    return smax / sv.back();
}

AmplificationCheck amplification_bound_check(const DenseMatrix& a, std::size_t trials,
                                             std::uint64_t seed) {
    if (trials == 0) throw std::invalid_argument("amplification_bound_check: trials must be >= 1");
    const std::vector<double> sv = singular_values(a);
    Rng rng(seed);

    auto norm2 = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };

    double sampled = 0.0;
    std::vector<double> x(a.cols, 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
        if (t < a.cols) {
            std::fill(x.begin(), x.end(), 0.0);
            x[t] = 1.0;  // canonical basis directions first
        } else {
            double nrm = 0.0;
            while (nrm == 0.0) {
                for (double& v : x) v = rng.normal();
                nrm = norm2(x);
            }
            for (double& v : x) v /= nrm;
        }
        sampled = std::max(sampled, norm2(matvec(a, x)));
    }

    AmplificationCheck out;
    out.sampled_max = sampled;
    out.sigma_max = sv.empty() ? 0.0 : sv.front();
    out.bound_holds = sampled <= out.sigma_max * (1.0 + 1e-9);
    return out;
}

SpectralReport spectral_report(const DenseMatrix& a, double tol) {
    SpectralReport rep;
    rep.singular_values = singular_values(a);
    rep.sigma_max = rep.singular_values.empty() ? 0.0 : rep.singular_values.front();
    rep.rank = 0;
    if (rep.sigma_max > 0.0)
        for (double s : rep.singular_values)
            if (s > tol * rep.sigma_max) ++rep.rank;
    rep.condition_number = condition_number(a, tol);
    return rep;
}

}  // namespace kprnn
