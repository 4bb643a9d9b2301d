#include "kprnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "kprnn/baselines.hpp"
#include "kprnn/kpcore.hpp"
#include "kprnn/rng.hpp"

namespace kprnn {

namespace {

// Sink keeps the optimizer from discarding benchmark work.
volatile double g_bench_sink = 0.0;

double now_ns() {
    return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                   std::chrono::steady_clock::now().time_since_epoch())
                                   .count());
}

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

}  // namespace

TimingSummary time_kernel(const std::function<void()>& fn, std::size_t warmups,
                          std::size_t samples) {
    // Calibrate an inner repeat count so one sample spans >= ~5 microseconds.
    std::size_t inner = 1;
    for (;;) {
        const double t0 = now_ns();
        for (std::size_t i = 0; i < inner; ++i) fn();
        const double spent = now_ns() - t0;
        if (spent >= 5000.0 || inner >= (1u << 20)) break;
        inner *= 4;
    }
    for (std::size_t i = 0; i < warmups; ++i) fn();

    std::vector<double> per_call(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        const double t0 = now_ns();
        for (std::size_t i = 0; i < inner; ++i) fn();
        per_call[s] = (now_ns() - t0) / static_cast<double>(inner);
    }
    std::sort(per_call.begin(), per_call.end());
    TimingSummary t;
    t.ns_median = per_call[samples / 2];
    t.ns_p10 = per_call[samples / 10];
    t.ns_p90 = per_call[(samples * 9) / 10];
    return t;
}

std::vector<BenchRow> bench_gate_shape(std::size_t m, std::size_t n, const BenchOptions& opts) {
    Rng rng(opts.seed);
    const DenseMatrix dense = random_matrix(rng, m, n);
    const std::vector<double> x = random_vector(rng, n);

    const ShapePlan plan = select_factor_shapes(m, n);
    KronFactorPair pair = make_pair_for_plan(plan);
    for (double& v : pair.b.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : pair.c.data) v = rng.uniform(-1.0, 1.0);

    const double max_ratio = plan.ratio();
    const double hkp_target = std::min(opts.hkp_target, max_ratio);
    const HkpPlan hplan = hkp_rank_rows_for_target(m, n, hkp_target);
    HybridMatrix hybrid;
    hybrid.r = hplan.r;
    hybrid.upper = random_matrix(rng, hplan.r, n);
    if (hplan.r < m) {
        hybrid.lower = make_pair_for_plan(hplan.lower_plan);
        for (double& v : hybrid.lower.b.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : hybrid.lower.c.data) v = rng.uniform(-1.0, 1.0);
    }

    const double gate_target =
        static_cast<double>(m * n) / static_cast<double>(plan.params_compressed);
    const LmfRank rank = lmf_rank_for_target(m, n, gate_target);
    LowRankPair lmf;
    lmf.d = rank.d;
    lmf.u = random_matrix(rng, m, rank.d);
    lmf.v = random_matrix(rng, rank.d, n);

    const double sparsity =
        1.0 - static_cast<double>(plan.params_compressed) / static_cast<double>(m * n);
    const SparseCSR csr = magnitude_prune(dense, std::max(0.0, sparsity));

    std::vector<BenchRow> rows;
    auto push = [&](const std::string& kernel, const std::string& rep_params, std::size_t params,
                    std::size_t flops, const std::function<void()>& fn) {
        BenchRow row;
        row.kernel = kernel;
        row.rows = m;
        row.cols = n;
        row.rep_params = rep_params;
        row.params = params;
        row.flops = flops;
        const TimingSummary t = time_kernel(fn, opts.warmups, opts.samples);
        row.ns_median = t.ns_median;
        row.ns_p10 = t.ns_p10;
        row.ns_p90 = t.ns_p90;
        rows.push_back(row);
    };

    push("dense", "full matrix", m * n, flops_dense(m, n),
         [&] { g_bench_sink = g_bench_sink + matvec(dense, x)[0]; });

    {
        std::ostringstream os;
        os << plan.first.rows << "x" << plan.first.cols << " (x) " << plan.second.rows << "x"
           << plan.second.cols;
        push("kp_fast", os.str(), plan.params_compressed, flops_kp(plan),
             [&] { g_bench_sink = g_bench_sink + kp_matvec(pair, x)[0]; });
        push("kp_naive", os.str() + " expand-then-multiply", plan.params_compressed,
             flops_dense(m, n), [&] { g_bench_sink = g_bench_sink + matvec(kron_expand(pair), x)[0]; });
    }

    {
        std::ostringstream os;
        os << "r=" << hplan.r;
        push("hkp", os.str(), hybrid.param_count(),
             flops_hkp(hplan.r, n, hplan.lower_plan),
             [&] { g_bench_sink = g_bench_sink + hkp_matvec(hybrid, x)[0]; });
    }

    push("lmf", "d=" + std::to_string(rank.d), lmf.param_count(), flops_lmf(m, n, rank.d),
         [&] { g_bench_sink = g_bench_sink + lmf_matvec(lmf, x)[0]; });

    push("csr", "nnz=" + std::to_string(csr.nnz()), csr.nnz(), flops_csr(csr.nnz()),
         [&] { g_bench_sink = g_bench_sink + csr_matvec(csr, x)[0]; });

    for (auto& row : rows) row.speedup_vs_dense = rows.front().ns_median / row.ns_median;
    return rows;
}

std::vector<BenchRow> bench_square_chain(std::size_t size, const BenchOptions& opts) {
    if (size < 2 || (size & (size - 1)) != 0)
        throw std::invalid_argument("bench_square_chain: size must be a power of two");
    Rng rng(opts.seed);
    const DenseMatrix dense = random_matrix(rng, size, size);
    const std::vector<double> x = random_vector(rng, size);

    MultiKronChain chain;
    std::size_t factors = 0;
    for (std::size_t s = size; s > 1; s /= 2) ++factors;
    for (std::size_t i = 0; i < factors; ++i) chain.factors.push_back(random_matrix(rng, 2, 2));

    std::vector<BenchRow> rows;
    {
        BenchRow row;
        row.kernel = "dense";
        row.rows = row.cols = size;
        row.rep_params = "full matrix";
        row.params = size * size;
        row.flops = flops_dense(size, size);
        const TimingSummary t =
            time_kernel([&] { g_bench_sink = g_bench_sink + matvec(dense, x)[0]; }, opts.warmups, opts.samples);
        row.ns_median = t.ns_median;
        row.ns_p10 = t.ns_p10;
        row.ns_p90 = t.ns_p90;
        rows.push_back(row);
    }
    {
        BenchRow row;
        row.kernel = "kp_chain_expand";
        row.rows = row.cols = size;
        row.rep_params = std::to_string(factors) + " factors of 2x2, expand-then-multiply";
        row.params = 4 * factors;
        row.flops = flops_dense(size, size);  // plus the expansion work itself
        const TimingSummary t = time_kernel(
            [&] { g_bench_sink = g_bench_sink + matvec(multi_kron_expand(chain), x)[0]; }, opts.warmups,
            opts.samples);
        row.ns_median = t.ns_median;
        row.ns_p10 = t.ns_p10;
        row.ns_p90 = t.ns_p90;
        rows.push_back(row);
    }
    for (auto& row : rows) row.speedup_vs_dense = rows.front().ns_median / row.ns_median;
    return rows;
}

std::vector<BenchRow> bench_sequence(const BenchmarkPreset& preset, const BenchOptions& opts) {
    Rng rng(opts.seed);
    const auto dense_net = build_compressed_network(preset.kind, preset.input_dim,
                                                    preset.hidden_dim, preset.classes,
                                                    RepChoice::dense(), opts.seed);
    const auto kp_net = build_compressed_network(preset.kind, preset.input_dim,
                                                 preset.kp_hidden_dim, preset.classes,
                                                 RepChoice::kp(), opts.seed);
    std::vector<std::vector<double>> seq;
    for (std::size_t t = 0; t < preset.time_steps; ++t)
        seq.push_back(random_vector(rng, preset.input_dim));

    std::vector<BenchRow> rows;
    auto push = [&](const std::string& kernel, const NetworkSpec& net) {
        BenchRow row;
        row.kernel = kernel;
        row.rows = net.cell.hidden_dim;
        row.cols = net.cell.hidden_dim + net.cell.input_dim;
        row.rep_params = std::to_string(preset.time_steps) + " steps";
        row.params = parameter_count(net).total_params;
        const TimingSummary t = time_kernel(
            [&] { g_bench_sink = g_bench_sink + sequence_forward(net, seq)[0]; }, opts.warmups, opts.samples);
        row.ns_median = t.ns_median;
        row.ns_p10 = t.ns_p10;
        row.ns_p90 = t.ns_p90;
        rows.push_back(row);
    };
    push("seq_dense", dense_net);
    push("seq_kp", kp_net);
    for (auto& row : rows) row.speedup_vs_dense = rows.front().ns_median / row.ns_median;
    return rows;
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "kernel,rows,cols,rep_params,params,flops,ns_median,ns_p10,ns_p90,speedup_vs_dense\n";
    os.precision(10);
    for (const auto& r : rows)
        os << r.kernel << ',' << r.rows << ',' << r.cols << ",\"" << r.rep_params << "\","
           << r.params << ',' << r.flops << ',' << r.ns_median << ',' << r.ns_p10 << ','
           << r.ns_p90 << ',' << r.speedup_vs_dense << '\n';
    return os.str();
}

std::string bench_to_markdown(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "| kernel | shape | representation | params | flops | median ns | p10 | p90 | vs dense |\n";
    os << "|---|---|---|---|---|---|---|---|---|\n";
    char buf[64];
    for (const auto& r : rows) {
        os << "| " << r.kernel << " | " << r.rows << "x" << r.cols << " | " << r.rep_params
           << " | " << r.params << " | " << r.flops << " | ";
        std::snprintf(buf, sizeof buf, "%.0f | %.0f | %.0f | %.2fx |", r.ns_median, r.ns_p10,
                      r.ns_p90, r.speedup_vs_dense);
        os << buf << '\n';
    }
    return os.str();
}

}  // namespace kprnn
