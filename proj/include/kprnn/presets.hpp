#pragma once

#include <string>
#include <vector>

#include "kprnn/cells.hpp"

namespace kprnn {

/// The five benchmark network shapes used for size accounting and kernel
/// benchmarking. `hidden_dim` is the published baseline width; `kp_hidden_dim`
/// is the width of the Kronecker-compressed variant (identical except for the
/// HAR1 model, whose compressed layer is one unit narrower).
struct BenchmarkPreset {
    std::string name;
    CellKind kind = CellKind::RNN;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t kp_hidden_dim = 0;
    std::size_t classes = 0;
    std::size_t time_steps = 0;
    bool accounting_note = false;  // published compression not reproducible

    std::size_t gate_rows() const { return kp_hidden_dim; }
    std::size_t gate_cols() const { return kp_hidden_dim + input_dim; }
};

const std::vector<BenchmarkPreset>& all_presets();
const BenchmarkPreset& preset_by_name(const std::string& name);

struct SizeRow {
    std::string variant;  // baseline | small-baseline | pruned | lmf | kp
    std::size_t total_params = 0;
    std::size_t layer_params = 0;
    double layer_compression = 1.0;  // baseline layer / this layer
    double size_kb = 0.0;            // total at 32-bit weights
    std::size_t csr_storage_bytes = 0;  // pruned variant only: values + indices
    std::string note;
};

/// Pure-arithmetic model size table for one preset: dense baseline, a small
/// dense baseline at parameter parity, pruning and LMF matched to the
/// Kronecker point, and the Kronecker-compressed model itself.
std::vector<SizeRow> compute_sizes(const BenchmarkPreset& preset);

std::string sizes_to_text(const BenchmarkPreset& preset, const std::vector<SizeRow>& rows);
std::string sizes_to_csv(const BenchmarkPreset& preset, const std::vector<SizeRow>& rows);

}  // namespace kprnn
