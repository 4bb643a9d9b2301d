#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "kprnn/baselines.hpp"
#include "kprnn/kpcore.hpp"
#include "kprnn/quant.hpp"

namespace kprnn {

enum class CellKind : std::uint8_t { RNN, LSTM, GRU, FastRNN, BiLSTM };

const char* cell_kind_name(CellKind k);
CellKind cell_kind_from_name(const std::string& name);

/// Gates per cell: RNN/FastRNN 1, GRU 3 (r, z, candidate), LSTM 4
/// (i, f, g, o), BiLSTM 8 (forward i,f,g,o then backward i,f,g,o).
std::size_t gate_count(CellKind k);

/// One gate's weight matrix in any of the supported storage forms. The
/// logical shape is always hidden x (input + hidden).
using WeightRep = std::variant<DenseMatrix, KronFactorPair, HybridMatrix, LowRankPair, SparseCSR>;

std::size_t rep_rows(const WeightRep& rep);
std::size_t rep_cols(const WeightRep& rep);
std::size_t rep_param_count(const WeightRep& rep);
const char* rep_tag(const WeightRep& rep);

std::vector<double> rep_matvec(const WeightRep& rep, const std::vector<double>& x);

/// Dense materialization of any representation (expansion, stacking, u*v or
/// CSR fill-in). Used by twin-network checks and quantized size accounting.
DenseMatrix rep_to_dense(const WeightRep& rep);

/// Requested storage form for a network build.
struct RepChoice {
    enum class Kind : std::uint8_t { Dense, KP, HKP, LMF, Sparse } kind = Kind::Dense;
    double target_ratio = 0.0;  // HKP / LMF / Sparse: desired layer compression

    static RepChoice dense() { return {Kind::Dense, 0.0}; }
    static RepChoice kp() { return {Kind::KP, 0.0}; }
    static RepChoice hkp(double target) { return {Kind::HKP, target}; }
    static RepChoice lmf(double target) { return {Kind::LMF, target}; }
    static RepChoice sparse(double target) { return {Kind::Sparse, target}; }
};

struct CellSpec {
    CellKind kind = CellKind::RNN;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::vector<WeightRep> gates;            // gate_count(kind) entries
    std::vector<std::vector<double>> biases; // hidden_dim each, always dense
    double fastrnn_alpha = 0.0;              // FastRNN only
    double fastrnn_beta = 0.0;
};

struct NetworkSpec {
    CellSpec cell;
    DenseMatrix softmax_w;        // classes x output_dim
    std::vector<double> softmax_b;
    std::size_t classes = 0;
    std::size_t time_steps = 0;   // 0 = unconstrained sequence length

    std::size_t output_dim() const {
        return cell.kind == CellKind::BiLSTM ? 2 * cell.hidden_dim : cell.hidden_dim;
    }
};

/// Builds a seeded network with every gate matrix (hidden x (input+hidden))
/// independently stored in the requested representation. Factor and low-rank
/// initializations are scaled so the materialized product matches a
/// Glorot-uniform dense init in variance.
NetworkSpec build_compressed_network(CellKind kind, std::size_t input_dim, std::size_t hidden_dim,
                                     std::size_t classes, const RepChoice& rep,
                                     std::uint64_t seed = 0);

/// Replaces every gate with its dense materialization; forward results are
/// identical up to rounding.
NetworkSpec expand_to_dense(const NetworkSpec& net);

struct CellState {
    std::vector<double> h;
    std::vector<double> c;  // LSTM / BiLSTM only
};

CellState zero_state(const CellSpec& spec);

/// One recurrence step. `direction` selects the gate bank for BiLSTM
/// (0 = forward, 1 = backward) and must be 0 otherwise.
CellState cell_step(const CellSpec& spec, const std::vector<double>& x, const CellState& state,
                    int direction = 0);

/// Zero-initial-state run over the whole sequence; returns unnormalized
/// logits of the softmax head. BiLSTM concatenates the final states of both
/// directions.
std::vector<double> sequence_forward(const NetworkSpec& net,
                                     const std::vector<std::vector<double>>& inputs);

struct ParameterCount {
    std::size_t total_params = 0;
    std::size_t rnn_layer_params = 0;  // gates + biases (+ alpha/beta), softmax excluded
    double compression_factor = 1.0;   // dense-twin layer params / layer params
    double size_kb_32bit = 0.0;
};

ParameterCount parameter_count(const NetworkSpec& net);

/// Network with every gate tensor quantized; biases and softmax stay f64.
struct QuantizedGate {
    const char* rep = "dense";
    std::vector<QuantTensor> tensors;  // dense: 1, kp: 2, hkp: 3, lmf: 2, csr: 1 (values)
};

struct QuantizedNetwork {
    NetworkSpec base;  // structure + biases + softmax; gate weights superseded
    QuantScheme scheme = QuantScheme::Int8Symmetric;
    std::vector<QuantizedGate> gates;
};

QuantizedNetwork quantize_network(const NetworkSpec& net, QuantScheme scheme);

/// Dequantize-on-the-fly forward pass.
std::vector<double> quantized_network_forward(const QuantizedNetwork& qnet,
                                              const std::vector<std::vector<double>>& inputs);

struct QuantSizeReport {
    struct Item {
        std::string name;
        std::size_t params = 0;
        std::size_t bytes_32bit = 0;
        std::size_t bytes_8bit = 0;   // codes only
        std::size_t scale_bytes = 0;  // 8 bytes per quantized tensor
    };
    std::vector<Item> items;  // gate weights, biases, softmax
    std::size_t total_bytes_32bit = 0;
    std::size_t total_bytes_8bit = 0;  // codes + scales
};

QuantSizeReport quantized_size_report(const NetworkSpec& net);

}  // namespace kprnn
