#include "kprnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kprnn/rng.hpp"

namespace kprnn {

namespace {

WeightRep zero_like(const WeightRep& rep) {
    WeightRep g = rep;
    std::visit(
        [](auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) {
                std::fill(r.data.begin(), r.data.end(), 0.0);
            } else if constexpr (std::is_same_v<T, KronFactorPair>) {
                std::fill(r.b.data.begin(), r.b.data.end(), 0.0);
                std::fill(r.c.data.begin(), r.c.data.end(), 0.0);
            } else if constexpr (std::is_same_v<T, HybridMatrix>) {
                std::fill(r.upper.data.begin(), r.upper.data.end(), 0.0);
                std::fill(r.lower.b.data.begin(), r.lower.b.data.end(), 0.0);
                std::fill(r.lower.c.data.begin(), r.lower.c.data.end(), 0.0);
            } else if constexpr (std::is_same_v<T, LowRankPair>) {
                std::fill(r.u.data.begin(), r.u.data.end(), 0.0);
                std::fill(r.v.data.begin(), r.v.data.end(), 0.0);
            } else {
                std::fill(r.values.begin(), r.values.end(), 0.0);  // pattern stays frozen
            }
        },
        g);
    return g;
}

void append_view(std::vector<double*>& out, std::vector<double>& v) {
    for (double& x : v) out.push_back(&x);
}

template <typename GateVisitor>
void visit_gate_storage(WeightRep& rep, GateVisitor&& visit_vec) {
    std::visit(
        [&](auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) {
                visit_vec(r.data);
            } else if constexpr (std::is_same_v<T, KronFactorPair>) {
                visit_vec(r.b.data);
                visit_vec(r.c.data);
            } else if constexpr (std::is_same_v<T, HybridMatrix>) {
                visit_vec(r.upper.data);
                visit_vec(r.lower.b.data);
                visit_vec(r.lower.c.data);
            } else if constexpr (std::is_same_v<T, LowRankPair>) {
                visit_vec(r.u.data);
                visit_vec(r.v.data);
            } else {
                visit_vec(r.values);
            }
        },
        rep);
}

}  // namespace

GradientSet zero_gradients_like(const NetworkSpec& net) {
    GradientSet g;
    g.kind = net.cell.kind;
    for (const auto& gate : net.cell.gates) g.gates.push_back(zero_like(gate));
    for (const auto& b : net.cell.biases) g.biases.emplace_back(b.size(), 0.0);
    g.softmax_w = DenseMatrix(net.softmax_w.rows, net.softmax_w.cols);
    g.softmax_b.assign(net.softmax_b.size(), 0.0);
    return g;
}

std::vector<double*> parameter_view(NetworkSpec& net) {
    std::vector<double*> out;
    for (auto& gate : net.cell.gates)
        visit_gate_storage(gate, [&](std::vector<double>& v) { append_view(out, v); });
    for (auto& b : net.cell.biases) append_view(out, b);
    append_view(out, net.softmax_w.data);
    append_view(out, net.softmax_b);
    if (net.cell.kind == CellKind::FastRNN) {
        out.push_back(&net.cell.fastrnn_alpha);
        out.push_back(&net.cell.fastrnn_beta);
    }
    return out;
}

std::vector<double*> gradient_view(GradientSet& g) {
    std::vector<double*> out;
    for (auto& gate : g.gates)
        visit_gate_storage(gate, [&](std::vector<double>& v) { append_view(out, v); });
    for (auto& b : g.biases) append_view(out, b);
    append_view(out, g.softmax_w.data);
    append_view(out, g.softmax_b);
    if (g.kind == CellKind::FastRNN) {
        out.push_back(&g.fastrnn_alpha);
        out.push_back(&g.fastrnn_beta);
    }
    return out;
}

std::size_t parameter_total(const NetworkSpec& net) {
    NetworkSpec copy = net;
    return parameter_view(copy).size();
}

double cross_entropy(const std::vector<double>& logits, std::size_t label) {
    if (label >= logits.size()) throw std::invalid_argument("cross_entropy: label out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double l : logits) lse += std::exp(l - mx);
    return std::log(lse) + mx - logits[label];
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> concat_xh(const std::vector<double>& x, const std::vector<double>& h) {
    std::vector<double> u;
    u.reserve(x.size() + h.size());
    u.insert(u.end(), x.begin(), x.end());
    u.insert(u.end(), h.begin(), h.end());
    return u;
}

void add_outer(DenseMatrix& m, const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double ai = a[i];
        if (ai == 0.0) continue;
        double* row = &m.data[i * m.cols];
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += ai * b[j];
    }
}

void add_transpose_matvec(const DenseMatrix& m, const std::vector<double>& dy,
                          std::vector<double>& du) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double d = dy[i];
        if (d == 0.0) continue;
        const double* row = &m.data[i * m.cols];
        for (std::size_t j = 0; j < m.cols; ++j) du[j] += row[j] * d;
    }
}

// Accumulates parameter gradients for y = rep * u given dy, and adds the
// input gradient into du.
void rep_backward(const WeightRep& rep, WeightRep& grad, const std::vector<double>& u,
                  const std::vector<double>& dy, std::vector<double>& du) {
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) {
                auto& g = std::get<DenseMatrix>(grad);
                add_outer(g, dy, u);
                add_transpose_matvec(r, dy, du);
            } else if constexpr (std::is_same_v<T, KronFactorPair>) {
                auto& g = std::get<KronFactorPair>(grad);
                const KpMatvecGrad kg = kp_matvec_grad(r, u, dy);
                for (std::size_t i = 0; i < g.b.data.size(); ++i) g.b.data[i] += kg.db.data[i];
                for (std::size_t i = 0; i < g.c.data.size(); ++i) g.c.data[i] += kg.dc.data[i];
                for (std::size_t i = 0; i < du.size(); ++i) du[i] += kg.dx[i];
            } else if constexpr (std::is_same_v<T, HybridMatrix>) {
                auto& g = std::get<HybridMatrix>(grad);
                const std::vector<double> dy_up(dy.begin(), dy.begin() + r.upper.rows);
                add_outer(g.upper, dy_up, u);
                add_transpose_matvec(r.upper, dy_up, du);
                if (!r.lower.b.empty()) {
                    const std::vector<double> dy_low(dy.begin() + r.upper.rows, dy.end());
                    const KpMatvecGrad kg = kp_matvec_grad(r.lower, u, dy_low);
                    for (std::size_t i = 0; i < g.lower.b.data.size(); ++i)
                        g.lower.b.data[i] += kg.db.data[i];
                    for (std::size_t i = 0; i < g.lower.c.data.size(); ++i)
                        g.lower.c.data[i] += kg.dc.data[i];
                    for (std::size_t i = 0; i < du.size(); ++i) du[i] += kg.dx[i];
                }
            } else if constexpr (std::is_same_v<T, LowRankPair>) {
                auto& g = std::get<LowRankPair>(grad);
                const std::vector<double> t = matvec(r.v, u);
                add_outer(g.u, dy, t);
                std::vector<double> dt(t.size(), 0.0);
                add_transpose_matvec(r.u, dy, dt);
                add_outer(g.v, dt, u);
                add_transpose_matvec(r.v, dt, du);
            } else {
                auto& g = std::get<SparseCSR>(grad);
                for (std::size_t i = 0; i < r.rows; ++i) {
                    const double d = dy[i];
                    for (std::size_t k = r.row_ptr[i]; k < r.row_ptr[i + 1]; ++k) {
                        g.values[k] += d * u[r.col_idx[k]];
                        du[r.col_idx[k]] += r.values[k] * d;
                    }
                }
            }
        },
        rep);
}

struct StepTape {
    std::vector<double> u;               // concat the gate bank saw
    std::vector<double> i, f, g, o;      // LSTM activations
    std::vector<double> r, z, u2, hc;    // GRU activations
    std::vector<double> a;               // FastRNN tanh
    CellState out;
};

// Forward pass of one direction with everything the backward pass needs.
std::vector<StepTape> forward_tape(const CellSpec& spec,
                                   const std::vector<std::vector<double>>& inputs,
                                   int direction) {
    const std::size_t H = spec.hidden_dim;
    const std::size_t base = (spec.kind == CellKind::BiLSTM && direction == 1) ? 4 : 0;
    std::vector<StepTape> tape;
    tape.reserve(inputs.size());
    CellState state = zero_state(spec);

    auto preact = [&](std::size_t g, const std::vector<double>& u) {
        std::vector<double> zv = rep_matvec(spec.gates[g], u);
        for (std::size_t k = 0; k < zv.size(); ++k) zv[k] += spec.biases[g][k];
        return zv;
    };

    for (const auto& x : inputs) {
        StepTape t;
        t.u = concat_xh(x, state.h);
        switch (spec.kind) {
            case CellKind::RNN: {
                std::vector<double> zv = preact(0, t.u);
                t.out.h.resize(H);
                for (std::size_t k = 0; k < H; ++k) t.out.h[k] = std::tanh(zv[k]);
                break;
            }
            case CellKind::FastRNN: {
                std::vector<double> zv = preact(0, t.u);
                t.a.resize(H);
                t.out.h.resize(H);
                for (std::size_t k = 0; k < H; ++k) {
                    t.a[k] = std::tanh(zv[k]);
                    t.out.h[k] = spec.fastrnn_alpha * t.a[k] + spec.fastrnn_beta * state.h[k];
                }
                break;
            }
            case CellKind::LSTM:
            case CellKind::BiLSTM: {
                const std::vector<double> zi = preact(base + 0, t.u);
                const std::vector<double> zf = preact(base + 1, t.u);
                const std::vector<double> zg = preact(base + 2, t.u);
                const std::vector<double> zo = preact(base + 3, t.u);
                t.i.resize(H); t.f.resize(H); t.g.resize(H); t.o.resize(H);
                t.out.h.resize(H);
                t.out.c.resize(H);
                for (std::size_t k = 0; k < H; ++k) {
                    t.i[k] = sigmoid(zi[k]);
                    t.f[k] = sigmoid(zf[k]);
                    t.g[k] = std::tanh(zg[k]);
                    t.o[k] = sigmoid(zo[k]);
                    t.out.c[k] = t.f[k] * state.c[k] + t.i[k] * t.g[k];
                    t.out.h[k] = t.o[k] * std::tanh(t.out.c[k]);
                }
                break;
            }
            case CellKind::GRU: {
                const std::vector<double> zr = preact(0, t.u);
                const std::vector<double> zz = preact(1, t.u);
                t.r.resize(H); t.z.resize(H);
                std::vector<double> rh(H);
                for (std::size_t k = 0; k < H; ++k) {
                    t.r[k] = sigmoid(zr[k]);
                    t.z[k] = sigmoid(zz[k]);
                    rh[k] = t.r[k] * state.h[k];
                }
                t.u2 = concat_xh(x, rh);
                const std::vector<double> zc = preact(2, t.u2);
                t.hc.resize(H);
                t.out.h.resize(H);
                for (std::size_t k = 0; k < H; ++k) {
                    t.hc[k] = std::tanh(zc[k]);
                    t.out.h[k] = (1.0 - t.z[k]) * state.h[k] + t.z[k] * t.hc[k];
                }
                break;
            }
        }
        state = t.out;
        tape.push_back(std::move(t));
    }
    return tape;
}

// Backpropagation through one direction; d_h_final seeds the recurrence.
void backward_tape(const CellSpec& spec, const std::vector<StepTape>& tape, int direction,
                   std::vector<double> dh, GradientSet& grads, double& d_alpha, double& d_beta) {
    const std::size_t H = spec.hidden_dim;
    const std::size_t n = spec.input_dim;
    const std::size_t base = (spec.kind == CellKind::BiLSTM && direction == 1) ? 4 : 0;
    std::vector<double> dc(H, 0.0);

    auto gate_back = [&](std::size_t g, const std::vector<double>& u,
                         const std::vector<double>& dz, std::vector<double>& du) {
        rep_backward(spec.gates[g], grads.gates[g], u, dz, du);
        for (std::size_t k = 0; k < H; ++k) grads.biases[g][k] += dz[k];
    };

    for (std::size_t ti = tape.size(); ti-- > 0;) {
        const StepTape& t = tape[ti];
        const std::vector<double> zeros(H, 0.0);
        const std::vector<double>& h_prev = ti > 0 ? tape[ti - 1].out.h : zeros;
        const std::vector<double>& c_prev =
            (spec.kind == CellKind::LSTM || spec.kind == CellKind::BiLSTM)
                ? (ti > 0 ? tape[ti - 1].out.c : zeros)
                : zeros;
        std::vector<double> du(t.u.size(), 0.0);
        std::vector<double> dh_prev(H, 0.0);

        switch (spec.kind) {
            case CellKind::RNN: {
                std::vector<double> dz(H);
                for (std::size_t k = 0; k < H; ++k)
                    dz[k] = dh[k] * (1.0 - t.out.h[k] * t.out.h[k]);
                gate_back(0, t.u, dz, du);
                for (std::size_t k = 0; k < H; ++k) dh_prev[k] = du[n + k];
                break;
            }
            case CellKind::FastRNN: {
                std::vector<double> dz(H);
                for (std::size_t k = 0; k < H; ++k) {
                    d_alpha += dh[k] * t.a[k];
                    d_beta += dh[k] * h_prev[k];
                    dz[k] = dh[k] * spec.fastrnn_alpha * (1.0 - t.a[k] * t.a[k]);
                }
                gate_back(0, t.u, dz, du);
                for (std::size_t k = 0; k < H; ++k)
                    dh_prev[k] = du[n + k] + spec.fastrnn_beta * dh[k];
                break;
            }
            case CellKind::LSTM:
            case CellKind::BiLSTM: {
                std::vector<double> dzi(H), dzf(H), dzg(H), dzo(H);
                for (std::size_t k = 0; k < H; ++k) {
                    const double tc = std::tanh(t.out.c[k]);
                    const double dok = dh[k] * tc;
                    dc[k] += dh[k] * t.o[k] * (1.0 - tc * tc);
                    dzo[k] = dok * t.o[k] * (1.0 - t.o[k]);
                    dzi[k] = dc[k] * t.g[k] * t.i[k] * (1.0 - t.i[k]);
                    dzf[k] = dc[k] * c_prev[k] * t.f[k] * (1.0 - t.f[k]);
                    dzg[k] = dc[k] * t.i[k] * (1.0 - t.g[k] * t.g[k]);
                }
                gate_back(base + 0, t.u, dzi, du);
                gate_back(base + 1, t.u, dzf, du);
                gate_back(base + 2, t.u, dzg, du);
                gate_back(base + 3, t.u, dzo, du);
                for (std::size_t k = 0; k < H; ++k) {
                    dh_prev[k] = du[n + k];
                    dc[k] *= t.f[k];  // becomes dc_prev
                }
                break;
            }
            case CellKind::GRU: {
                std::vector<double> dzz(H), dzc(H);
                for (std::size_t k = 0; k < H; ++k) {
                    dzz[k] = dh[k] * (t.hc[k] - h_prev[k]) * t.z[k] * (1.0 - t.z[k]);
                    dzc[k] = dh[k] * t.z[k] * (1.0 - t.hc[k] * t.hc[k]);
                    dh_prev[k] = dh[k] * (1.0 - t.z[k]);
                }
                std::vector<double> du2(t.u2.size(), 0.0);
                gate_back(2, t.u2, dzc, du2);
                std::vector<double> dzr(H);
                for (std::size_t k = 0; k < H; ++k) {
                    const double d_rh = du2[n + k];
                    dzr[k] = d_rh * h_prev[k] * t.r[k] * (1.0 - t.r[k]);
                    dh_prev[k] += d_rh * t.r[k];
                }
                gate_back(0, t.u, dzr, du);
                gate_back(1, t.u, dzz, du);
                for (std::size_t k = 0; k < H; ++k) dh_prev[k] += du[n + k];
                break;
            }
        }
        dh = std::move(dh_prev);
    }
}

// Loss and gradient accumulation for one example.
double example_loss_and_grads(const NetworkSpec& net, const LabeledSequence& ex,
                              GradientSet& grads) {
    std::vector<double> features;
    std::vector<StepTape> fwd_tape, bwd_tape;
    std::vector<std::vector<double>> reversed;

    if (net.cell.kind == CellKind::BiLSTM) {
        fwd_tape = forward_tape(net.cell, ex.inputs, 0);
        reversed.assign(ex.inputs.rbegin(), ex.inputs.rend());
        bwd_tape = forward_tape(net.cell, reversed, 1);
        const std::vector<double> zeros(net.cell.hidden_dim, 0.0);
        features = concat_xh(fwd_tape.empty() ? zeros : fwd_tape.back().out.h,
                             bwd_tape.empty() ? zeros : bwd_tape.back().out.h);
    } else {
        fwd_tape = forward_tape(net.cell, ex.inputs, 0);
        features = fwd_tape.empty() ? std::vector<double>(net.cell.hidden_dim, 0.0)
                                    : fwd_tape.back().out.h;
    }

    std::vector<double> logits = matvec(net.softmax_w, features);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += net.softmax_b[i];
    const double loss = cross_entropy(logits, ex.label);

    // d(loss)/d(logits) = softmax(logits) - onehot(label)
    const double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double l : logits) lse += std::exp(l - mx);
    std::vector<double> dlogits(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) dlogits[i] = std::exp(logits[i] - mx) / lse;
    dlogits[ex.label] -= 1.0;

    add_outer(grads.softmax_w, dlogits, features);
    for (std::size_t i = 0; i < dlogits.size(); ++i) grads.softmax_b[i] += dlogits[i];
    std::vector<double> dfeat(features.size(), 0.0);
    add_transpose_matvec(net.softmax_w, dlogits, dfeat);

    const std::size_t H = net.cell.hidden_dim;
    if (net.cell.kind == CellKind::BiLSTM) {
        backward_tape(net.cell, fwd_tape, 0, {dfeat.begin(), dfeat.begin() + H}, grads,
                      grads.fastrnn_alpha, grads.fastrnn_beta);
        backward_tape(net.cell, bwd_tape, 1, {dfeat.begin() + H, dfeat.end()}, grads,
                      grads.fastrnn_alpha, grads.fastrnn_beta);
    } else {
        backward_tape(net.cell, fwd_tape, 0, dfeat, grads, grads.fastrnn_alpha,
                      grads.fastrnn_beta);
    }
    return loss;
}

}  // namespace

std::pair<double, GradientSet> bptt_grads(const NetworkSpec& net,
                                          const std::vector<LabeledSequence>& batch) {
    if (batch.empty()) throw std::invalid_argument("bptt_grads: empty batch");
    GradientSet grads = zero_gradients_like(net);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double loss = example_loss_and_grads(net, batch[i], grads);
        if (!std::isfinite(loss))
            throw DivergenceError("bptt_grads: non-finite loss at batch element " +
                                  std::to_string(i));
        loss_sum += loss;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double* g : gradient_view(grads)) *g *= inv;
    return {loss_sum * inv, std::move(grads)};
}

double scheduled_lr(const TrainConfig& config, std::size_t step_index) {
    switch (config.decay) {
        case LrDecay::None:
            return config.learning_rate;
        case LrDecay::Step:
            return config.learning_rate /
                   std::pow(config.decay_rate,
                            static_cast<double>(step_index / std::max<std::size_t>(1, config.decay_steps)));
        case LrDecay::Exponential:
            return config.learning_rate *
                   std::pow(config.decay_rate,
                            static_cast<double>(step_index) /
                                static_cast<double>(std::max<std::size_t>(1, config.decay_steps)));
    }
    return config.learning_rate;
}

void optimizer_step(const std::vector<double*>& params, const std::vector<double*>& grads,
                    const TrainConfig& config, std::size_t step_index, OptimizerState& state) {
    if (params.size() != grads.size())
        throw std::invalid_argument("optimizer_step: parameter/gradient count mismatch");
    const double lr = scheduled_lr(config, step_index);

    if (config.optimizer == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr * *grads[i];
        return;
    }

    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double t = static_cast<double>(step_index + 1);
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = *grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        *params[i] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
}

std::vector<LabeledSequence> synth_task_generate(std::uint64_t seed, std::size_t count,
                                                 std::size_t T, std::size_t n) {
    Rng rng(seed);
    std::vector<double> teacher(n);
    for (double& w : teacher) w = rng.normal();
    const double decay = 0.9;
    const std::size_t cap = static_cast<std::size_t>(std::ceil(count * 0.525));

    std::vector<LabeledSequence> data;
    std::size_t per_class[2] = {0, 0};
    while (data.size() < count) {
        LabeledSequence ex;
        double score = 0.0;
        double w_t = 1.0;
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> x(n);
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = rng.normal();
                dot += teacher[i] * x[i];
            }
            score += w_t * dot;
            w_t *= decay;
            ex.inputs.push_back(std::move(x));
        }
        ex.label = score > 0.0 ? 1 : 0;
        if (per_class[ex.label] >= cap) continue;  // rebalance by resampling
        ++per_class[ex.label];
        data.push_back(std::move(ex));
    }
    return data;
}

double dataset_accuracy(const NetworkSpec& net, const std::vector<LabeledSequence>& data) {
    std::size_t correct = 0;
    for (const auto& ex : data) {
        const auto logits = sequence_forward(net, ex.inputs);
        const std::size_t pred = std::max_element(logits.begin(), logits.end()) - logits.begin();
        if (pred == ex.label) ++correct;
    }
    return data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_loop(NetworkSpec net, const std::vector<LabeledSequence>& data,
                       const TrainConfig& config) {
    if (data.empty()) throw std::invalid_argument("train_loop: empty dataset");
    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const std::vector<double*> params = parameter_view(net);
    OptimizerState state;
    std::size_t global_step = 0;

    TrainResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<LabeledSequence> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
            auto [loss, grads] = bptt_grads(net, batch);
            loss_sum += loss;
            ++batches;
            optimizer_step(params, gradient_view(grads), config, global_step, state);
            ++global_step;
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.loss = loss_sum / static_cast<double>(batches);
        if (!std::isfinite(m.loss)) throw DivergenceError("train_loop: loss diverged");
        m.train_accuracy = dataset_accuracy(net, data);
        m.lr = scheduled_lr(config, global_step > 0 ? global_step - 1 : 0);
        result.metrics.push_back(m);
    }
    result.net = std::move(net);
    return result;
}

std::vector<std::vector<double>> factor_update_diagnostic(
    const std::vector<MultiKronChain>& trace) {
    if (trace.empty()) return {};
    const std::size_t factors = trace.front().factors.size();
    std::vector<std::vector<double>> series(factors);
    for (std::size_t fi = 0; fi < factors; ++fi) {
        const DenseMatrix& w0 = trace.front().factors[fi];
        double norm0 = 0.0;
        for (double v : w0.data) norm0 += v * v;
        norm0 = std::sqrt(norm0);
        for (const auto& snap : trace) {
            double diff = 0.0;
            for (std::size_t i = 0; i < w0.data.size(); ++i) {
                const double d = snap.factors[fi].data[i] - w0.data[i];
                diff += d * d;
            }
            series[fi].push_back(norm0 > 0.0 ? std::sqrt(diff) / norm0 : 0.0);
        }
    }
    return series;
}

namespace {

// Gradients of a pair expansion: dB[i,j] = <dA_block(i,j), C>,
// dC = sum_ij B[i,j] * dA_block(i,j).
std::pair<DenseMatrix, DenseMatrix> pair_grads_from_dense(const DenseMatrix& b,
                                                          const DenseMatrix& c,
                                                          const DenseMatrix& da) {
    DenseMatrix db(b.rows, b.cols);
    DenseMatrix dc(c.rows, c.cols);
    for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < c.rows; ++k)
                for (std::size_t l = 0; l < c.cols; ++l) {
                    const double dval = da(i * c.rows + k, j * c.cols + l);
                    acc += dval * c(k, l);
                    dc(k, l) += b(i, j) * dval;
                }
            db(i, j) = acc;
        }
    }
    return {std::move(db), std::move(dc)};
}

}  // namespace

std::vector<DenseMatrix> multi_kron_grad(const MultiKronChain& chain,
                                         const DenseMatrix& d_expanded) {
    if (chain.factors.size() < 2) throw std::invalid_argument("multi_kron_grad: need >= 2 factors");
    if (chain.factors.size() == 2) {
        auto [db, dc] = pair_grads_from_dense(chain.factors[0], chain.factors[1], d_expanded);
        return {std::move(db), std::move(dc)};
    }
    MultiKronChain rest;
    rest.factors.assign(chain.factors.begin() + 1, chain.factors.end());
    const DenseMatrix rest_expanded = multi_kron_expand(rest);
    auto [db, d_rest] = pair_grads_from_dense(chain.factors[0], rest_expanded, d_expanded);
    std::vector<DenseMatrix> out;
    out.push_back(std::move(db));
    for (auto& g : multi_kron_grad(rest, d_rest)) out.push_back(std::move(g));
    return out;
}

std::vector<MultiKronChain> train_chain_regression(MultiKronChain chain, std::size_t epochs,
                                                   double lr, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t m = chain.product_rows();
    const std::size_t n = chain.product_cols();
    DenseMatrix teacher(m, n);
    for (double& v : teacher.data) v = rng.uniform(-1.0, 1.0);

    std::vector<MultiKronChain> trace{chain};
    const std::size_t samples_per_epoch = 16;
    for (std::size_t e = 0; e < epochs; ++e) {
        const DenseMatrix w = multi_kron_expand(chain);
        DenseMatrix dw(m, n);
        for (std::size_t s = 0; s < samples_per_epoch; ++s) {
            std::vector<double> x(n);
            for (double& v : x) v = rng.normal();
            const std::vector<double> resid_src = matvec(w, x);
            const std::vector<double> target = matvec(teacher, x);
            std::vector<double> resid(m);
            for (std::size_t i = 0; i < m; ++i) resid[i] = resid_src[i] - target[i];
            add_outer(dw, resid, x);
        }
        for (double& v : dw.data) v /= static_cast<double>(samples_per_epoch);
        const std::vector<DenseMatrix> grads = multi_kron_grad(chain, dw);
        for (std::size_t fi = 0; fi < chain.factors.size(); ++fi)
            for (std::size_t i = 0; i < chain.factors[fi].data.size(); ++i)
                chain.factors[fi].data[i] -= lr * grads[fi].data[i];
        trace.push_back(chain);
    }
    return trace;
}

}  // namespace kprnn
