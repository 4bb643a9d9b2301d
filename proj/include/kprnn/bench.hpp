#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kprnn/presets.hpp"

namespace kprnn {

/// One timed kernel. Timing columns are host-relative; everything else is
/// reproducible arithmetic.
struct BenchRow {
    std::string kernel;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string rep_params;  // human-readable representation parameters
    std::size_t params = 0;
    std::size_t flops = 0;  // multiply-accumulates per call
    double ns_median = 0.0;
    double ns_p10 = 0.0;
    double ns_p90 = 0.0;
    double speedup_vs_dense = 0.0;
};

struct BenchOptions {
    std::size_t warmups = 50;
    std::size_t samples = 200;
    std::uint64_t seed = 0;
    double hkp_target = 10.0;  // clamped to the shape's maximum when infeasible
};

struct TimingSummary {
    double ns_median = 0.0;
    double ns_p10 = 0.0;
    double ns_p90 = 0.0;
};

/// Median / p10 / p90 per-call time of `fn`, single-threaded on a monotonic
/// clock; calls are batched so each sample spans at least a few microseconds.
TimingSummary time_kernel(const std::function<void()>& fn, std::size_t warmups,
                          std::size_t samples);

/// Times dense, Kronecker fast (vec-trick), Kronecker naive
/// (expand-then-multiply), hybrid, low-rank and CSR matvecs at one gate shape.
std::vector<BenchRow> bench_gate_shape(std::size_t m, std::size_t n, const BenchOptions& opts);

/// Adds the deep-chain row: an expand-then-multiply matvec through a chain of
/// 2x2 factors versus the plain dense matvec, at a square power-of-two size.
std::vector<BenchRow> bench_square_chain(std::size_t size, const BenchOptions& opts);

/// Whole-sequence forward of the preset's dense and Kronecker networks.
std::vector<BenchRow> bench_sequence(const BenchmarkPreset& preset, const BenchOptions& opts);

std::string bench_to_csv(const std::vector<BenchRow>& rows);
std::string bench_to_markdown(const std::vector<BenchRow>& rows);

}  // namespace kprnn
