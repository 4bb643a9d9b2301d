#include "kprnn/verify.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "kprnn/analysis.hpp"
#include "kprnn/cells.hpp"
#include "kprnn/kpcore.hpp"
#include "kprnn/quant.hpp"
#include "kprnn/rng.hpp"
#include "kprnn/train.hpp"

namespace kprnn {

namespace {

DenseMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    DenseMatrix m(r, c);
    for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

DenseMatrix random_rank_k(Rng& rng, std::size_t m, std::size_t n, std::size_t k) {
    return matmul(random_matrix(rng, m, k), random_matrix(rng, k, n));
}

void record_failure(SuiteResult& suite, const std::string& detail) {
    ++suite.failures;
    if (suite.first_failure.empty()) suite.first_failure = detail;
}

// Kronecker fast kernel against the expand-then-multiply route.
SuiteResult suite_kp_oracle(const VerifyOptions& opts) {
    SuiteResult suite{"kp-oracle-equivalence", 0, 0, ""};
    Rng rng(opts.seed + 1);
    for (std::size_t t = 0; t < opts.trials; ++t) {
        const std::size_t m1 = 1 + rng.index(16), n1 = 1 + rng.index(16);
        const std::size_t m2 = 1 + rng.index(16), n2 = 1 + rng.index(16);
        const KronFactorPair pair{random_matrix(rng, m1, n1), random_matrix(rng, m2, n2)};
        const std::vector<double> x = random_vector(rng, n1 * n2);
        std::vector<double> fast = kp_matvec(pair, x);
        if (opts.inject_fault && t == 0 && !fast.empty()) fast[0] += 1e-3;
        const std::vector<double> slow = matvec(kron_expand(pair), x);
        const double err = rel_error(fast, slow);
        ++suite.checks;
        if (!(err < 1e-10)) {
            std::ostringstream os;
            os << "trial " << t << " shape (" << m1 << "x" << n1 << ")(x)(" << m2 << "x" << n2
               << ") rel err " << err;
            record_failure(suite, os.str());
        }
    }
    return suite;
}

SuiteResult suite_hkp_stacking(const VerifyOptions& opts) {
    SuiteResult suite{"hkp-stacking", 0, 0, ""};
    Rng rng(opts.seed + 2);
    const std::size_t trials = std::max<std::size_t>(1, opts.trials / 2);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t m1 = 1 + rng.index(8), n1 = 1 + rng.index(8);
        const std::size_t m2 = 1 + rng.index(8), n2 = 1 + rng.index(8);
        const std::size_t r = rng.index(9);
        const std::size_t n = n1 * n2;
        HybridMatrix h;
        h.r = r;
        h.upper = random_matrix(rng, r, n);
        h.lower = KronFactorPair{random_matrix(rng, m1, n1), random_matrix(rng, m2, n2)};
        const std::vector<double> x = random_vector(rng, n);

        const std::vector<double> fast = hkp_matvec(h, x);
        DenseMatrix stacked(r + m1 * m2, n);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < n; ++j) stacked(i, j) = h.upper(i, j);
        const DenseMatrix low = kron_expand(h.lower);
        for (std::size_t i = 0; i < low.rows; ++i)
            for (std::size_t j = 0; j < n; ++j) stacked(r + i, j) = low(i, j);
        const double err = rel_error(fast, matvec(stacked, x));
        ++suite.checks;
        if (!(err < 1e-10)) {
            std::ostringstream os;
            os << "trial " << t << " r=" << r << " rel err " << err;
            record_failure(suite, os.str());
        }
    }
    return suite;
}

double central_diff(const std::function<double()>& eval, double& param, double step) {
    const double saved = param;
    param = saved + step;
    const double fp = eval();
    param = saved - step;
    const double fm = eval();
    param = saved;
    return (fp - fm) / (2.0 * step);
}

// Combined relative/absolute comparison; the absolute term absorbs
// central-difference rounding noise where the true gradient is tiny.
bool grad_close(double analytic, double fd, double rel_tol, double abs_tol = 1e-8) {
    const double mag = std::max(std::fabs(analytic), std::fabs(fd));
    return std::fabs(analytic - fd) <= rel_tol * mag + abs_tol;
}

SuiteResult suite_kernel_gradients(const VerifyOptions& opts) {
    SuiteResult suite{"kp-matvec-gradients", 0, 0, ""};
    Rng rng(opts.seed + 3);
    const std::size_t instances = std::max<std::size_t>(1, std::min<std::size_t>(100, opts.trials));
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t m1 = 1 + rng.index(4), n1 = 1 + rng.index(4);
        const std::size_t m2 = 1 + rng.index(4), n2 = 1 + rng.index(4);
        KronFactorPair pair{random_matrix(rng, m1, n1), random_matrix(rng, m2, n2)};
        std::vector<double> x = random_vector(rng, n1 * n2);
        const std::vector<double> g = random_vector(rng, m1 * m2);
        const auto eval = [&]() {
            const auto y = kp_matvec(pair, x);
            return std::inner_product(y.begin(), y.end(), g.begin(), 0.0);
        };
        const KpMatvecGrad grad = kp_matvec_grad(pair, x, g);
        bool ok = true;
        for (std::size_t i = 0; i < pair.b.data.size() && ok; ++i)
            ok = grad_close(grad.db.data[i], central_diff(eval, pair.b.data[i], 1e-6), 1e-5);
        for (std::size_t i = 0; i < pair.c.data.size() && ok; ++i)
            ok = grad_close(grad.dc.data[i], central_diff(eval, pair.c.data[i], 1e-6), 1e-5);
        for (std::size_t i = 0; i < x.size() && ok; ++i)
            ok = grad_close(grad.dx[i], central_diff(eval, x[i], 1e-6), 1e-5);
        ++suite.checks;
        if (!ok) {
            std::ostringstream os;
            os << "instance " << t << " (" << m1 << "x" << n1 << ")(x)(" << m2 << "x" << n2 << ")";
            record_failure(suite, os.str());
        }
    }
    return suite;
}

SuiteResult suite_bptt_gradients(const VerifyOptions& opts) {
    SuiteResult suite{"bptt-gradients", 0, 0, ""};
    Rng rng(opts.seed + 4);
    const CellKind kinds[] = {CellKind::RNN, CellKind::LSTM, CellKind::GRU, CellKind::FastRNN,
                              CellKind::BiLSTM};
    const RepChoice reps[] = {RepChoice::dense(), RepChoice::kp(), RepChoice::hkp(1.5),
                              RepChoice::lmf(2.0)};
    for (CellKind kind : kinds) {
        for (const auto& rep : reps) {
            NetworkSpec net = build_compressed_network(kind, 3, 4, 2, rep, opts.seed + 17);
            std::vector<LabeledSequence> batch(2);
            for (auto& ex : batch) {
                for (int t = 0; t < 3; ++t) ex.inputs.push_back(random_vector(rng, 3));
                ex.label = rng.index(2);
            }
            auto [loss, grads] = bptt_grads(net, batch);
            (void)loss;
            const auto params = parameter_view(net);
            const auto gvals = gradient_view(grads);
            const auto eval = [&]() { return bptt_grads(net, batch).first; };
            bool ok = params.size() == gvals.size();
            for (std::size_t i = 0; i < params.size() && ok; ++i)
                ok = grad_close(*gvals[i], central_diff(eval, *params[i], 1e-5), 1e-4);
            ++suite.checks;
            if (!ok) {
                std::ostringstream os;
                os << cell_kind_name(kind) << "/" << rep_tag(net.cell.gates[0]);
                record_failure(suite, os.str());
            }
        }
    }
    return suite;
}

SuiteResult suite_rank_multiplicativity(const VerifyOptions& opts) {
    SuiteResult suite{"rank-multiplicativity", 0, 0, ""};
    Rng rng(opts.seed + 5);
    const std::size_t trials = std::max<std::size_t>(1, opts.trials / 2);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t m1 = 2 + rng.index(7), n1 = 2 + rng.index(7);
        const std::size_t m2 = 2 + rng.index(7), n2 = 2 + rng.index(7);
        const std::size_t k1 = 1 + rng.index(std::min(m1, n1));
        const std::size_t k2 = 1 + rng.index(std::min(m2, n2));
        const DenseMatrix b = random_rank_k(rng, m1, n1, k1);
        const DenseMatrix c = random_rank_k(rng, m2, n2, k2);
        const std::size_t rb = rank_numeric(b);
        const std::size_t rc = rank_numeric(c);
        const std::size_t rk = rank_numeric(kron_expand({b, c}));
        ++suite.checks;
        if (rk != rb * rc) {
            std::ostringstream os;
            os << "trial " << t << ": rank(B)=" << rb << " rank(C)=" << rc
               << " rank(B(x)C)=" << rk;
            record_failure(suite, os.str());
        }
    }
    return suite;
}

SuiteResult suite_quantization(const VerifyOptions& opts) {
    SuiteResult suite{"quantization-roundtrip", 0, 0, ""};
    // int8: all codes round trip exactly through dequantize/quantize.
    for (int code = -127; code <= 127; ++code) {
        QuantTensor q;
        q.scheme = QuantScheme::Int8Symmetric;
        q.scale = 0.0123;
        q.rows = q.cols = 1;
        q.payload = {static_cast<std::uint8_t>(static_cast<std::int8_t>(code))};
        const DenseMatrix v = dequantize8(q);
        const DenseMatrix v2 = dequantize8(quantize8(v, QuantScheme::Int8Symmetric));
        ++suite.checks;
        if (std::fabs(v2.data[0] - v.data[0]) > 1e-15)
            record_failure(suite, "int8 code " + std::to_string(code));
    }
    // e4m3: all 256 codes decode/encode to the same value.
    for (int code = 0; code < 256; ++code) {
        const double v = e4m3_decode(static_cast<std::uint8_t>(code));
        ++suite.checks;
        if (e4m3_decode(e4m3_encode(v)) != v)
            record_failure(suite, "e4m3 code " + std::to_string(code));
    }
    // int8 error bound on random data.
    Rng rng(opts.seed + 6);
    DenseMatrix a = random_matrix(rng, 32, 32);
    const QuantTensor q = quantize8(a, QuantScheme::Int8Symmetric);
    const DenseMatrix back = dequantize8(q);
    ++suite.checks;
    if (max_abs_diff(back, a) > q.scale / 2.0 + 1e-12)
        record_failure(suite, "int8 bound exceeded on random 32x32");
    return suite;
}

}  // namespace

std::vector<SuiteResult> run_verification(const VerifyOptions& opts) {
    return {suite_kp_oracle(opts),       suite_hkp_stacking(opts),
            suite_kernel_gradients(opts), suite_bptt_gradients(opts),
            suite_rank_multiplicativity(opts), suite_quantization(opts)};
}

bool all_passed(const std::vector<SuiteResult>& results) {
    for (const auto& r : results)
        if (r.failures) return false;
    return true;
}

std::string verification_report(const std::vector<SuiteResult>& results) {
    std::ostringstream os;
    for (const auto& r : results) {
        os << (r.failures == 0 ? "[PASS] " : "[FAIL] ") << r.name << ": "
           << (r.checks - r.failures) << "/" << r.checks << " checks";
        if (r.failures) os << "  first counterexample: " << r.first_failure;
        os << '\n';
    }
    return os.str();
}

}  // namespace kprnn
