#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kprnn/cells.hpp"

namespace kprnn {

/// Gradients with the same layout as the network parameters: gate gradients
/// reuse the WeightRep storage forms (a CSR gradient shares the frozen
/// sparsity pattern), biases/softmax mirror directly.
struct GradientSet {
    CellKind kind = CellKind::RNN;
    std::vector<WeightRep> gates;
    std::vector<std::vector<double>> biases;
    DenseMatrix softmax_w;
    std::vector<double> softmax_b;
    double fastrnn_alpha = 0.0;
    double fastrnn_beta = 0.0;
};

GradientSet zero_gradients_like(const NetworkSpec& net);

/// Flat, ordered views over every trainable scalar; the two overloads list
/// parameters and gradients in identical order.
std::vector<double*> parameter_view(NetworkSpec& net);
std::vector<double*> gradient_view(GradientSet& g);
std::size_t parameter_total(const NetworkSpec& net);

struct LabeledSequence {
    std::vector<std::vector<double>> inputs;
    std::size_t label = 0;
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Softmax cross-entropy of unnormalized logits (log-sum-exp with max shift).
double cross_entropy(const std::vector<double>& logits, std::size_t label);

/// Mean loss and mean gradients over a batch, by backpropagation through
/// time. Throws DivergenceError (naming the batch element) on non-finite
/// loss.
std::pair<double, GradientSet> bptt_grads(const NetworkSpec& net,
                                          const std::vector<LabeledSequence>& batch);

enum class OptimizerKind : std::uint8_t { SGD, Adam };
enum class LrDecay : std::uint8_t { None, Step, Exponential };

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double learning_rate = 0.01;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LrDecay decay = LrDecay::None;
    std::size_t decay_steps = 1;  // Step: divide every k steps; Exponential: denominator
    double decay_rate = 10.0;     // Step: divisor gamma; Exponential: base (e.g. 0.09)
};

/// Learning rate at a given step index under the configured schedule.
double scheduled_lr(const TrainConfig& config, std::size_t step_index);

struct OptimizerState {
    std::vector<double> m;  // Adam first moment
    std::vector<double> v;  // Adam second moment
};

/// In-place update of `params` from `grads` at `step_index` (0-based).
void optimizer_step(const std::vector<double*>& params, const std::vector<double*>& grads,
                    const TrainConfig& config, std::size_t step_index, OptimizerState& state);

/// Deterministic binary sequence task: fixed teacher vector w, label =
/// [sum_t 0.9^t <w, x_t> > 0], classes rebalanced to within 5% by resampling.
std::vector<LabeledSequence> synth_task_generate(std::uint64_t seed, std::size_t count,
                                                 std::size_t T = 16, std::size_t n = 16);

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    NetworkSpec net;
    std::vector<EpochMetrics> metrics;
};

double dataset_accuracy(const NetworkSpec& net, const std::vector<LabeledSequence>& data);

/// Mini-batch training loop; deterministic for a fixed config seed.
TrainResult train_loop(NetworkSpec net, const std::vector<LabeledSequence>& data,
                       const TrainConfig& config);

/// Per-factor relative Frobenius drift ||W_i(e) - W_i(0)||_F / ||W_i(0)||_F
/// for a trace of chain snapshots (element 0 is the initialization).
std::vector<std::vector<double>> factor_update_diagnostic(
    const std::vector<MultiKronChain>& trace);

/// Gradient of a scalar loss with respect to every chain factor, given the
/// loss gradient with respect to the expanded matrix.
std::vector<DenseMatrix> multi_kron_grad(const MultiKronChain& chain, const DenseMatrix& d_expanded);

/// Trains y = expand(chain) * x against a fixed random teacher matrix by
/// plain gradient descent; returns the snapshot per epoch (index 0 = init).
/// A small instrument for observing how little deep-chain factors move.
std::vector<MultiKronChain> train_chain_regression(MultiKronChain chain, std::size_t epochs,
                                                   double lr, std::uint64_t seed);

}  // namespace kprnn
