#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kprnn/cells.hpp"
#include "kprnn/train.hpp"

namespace kprnn {

/// Raised on malformed files; carries the byte offset of the problem.
struct FormatError : std::runtime_error {
    std::size_t byte_offset;
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

/// KPM1 binary matrix: magic "KPM1", u32 little-endian rows and cols, then
/// rows*cols little-endian 64-bit reals, row-major. Round trips bit-exactly.
void save_matrix_kpm1(const std::filesystem::path& path, const DenseMatrix& m);
DenseMatrix load_matrix_kpm1(const std::filesystem::path& path);

/// Plain CSV with one row per line; limited to 1e6 elements.
void save_matrix_csv(const std::filesystem::path& path, const DenseMatrix& m);
DenseMatrix load_matrix_csv(const std::filesystem::path& path);

/// IDX tensor (big-endian header) as used by the MNIST distribution.
struct IdxData {
    std::vector<std::size_t> dims;
    std::vector<std::uint8_t> bytes;
};

IdxData load_idx(const std::filesystem::path& path);
void save_idx(const std::filesystem::path& path, const IdxData& data);

/// Network container: a directory holding manifest.json plus KPM1 blobs per
/// weight tensor, referenced by relative path.
void save_network(const std::filesystem::path& dir, const NetworkSpec& net);
NetworkSpec load_network(const std::filesystem::path& dir);

/// Quantized variant; payloads are raw code files next to the manifest.
void save_quantized_network(const std::filesystem::path& dir, const QuantizedNetwork& qnet);
QuantizedNetwork load_quantized_network(const std::filesystem::path& dir);

/// Checkpoint: network container plus optimizer-state blob and step counter.
void save_checkpoint(const std::filesystem::path& dir, const NetworkSpec& net,
                     const OptimizerState& state, std::size_t step);
struct Checkpoint {
    NetworkSpec net;
    OptimizerState state;
    std::size_t step = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Metrics CSV with a fixed schema: epoch,loss,train_acc,lr.
void save_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics);
std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics);

}  // namespace kprnn
