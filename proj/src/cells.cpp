#include "kprnn/cells.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kprnn/rng.hpp"

namespace kprnn {

const char* cell_kind_name(CellKind k) {
    switch (k) {
        case CellKind::RNN: return "rnn";
        case CellKind::LSTM: return "lstm";
        case CellKind::GRU: return "gru";
        case CellKind::FastRNN: return "fastrnn";
        case CellKind::BiLSTM: return "bilstm";
    }
    return "?";
}

CellKind cell_kind_from_name(const std::string& name) {
    if (name == "rnn") return CellKind::RNN;
    if (name == "lstm") return CellKind::LSTM;
    if (name == "gru") return CellKind::GRU;
    if (name == "fastrnn") return CellKind::FastRNN;
    if (name == "bilstm") return CellKind::BiLSTM;
    throw std::invalid_argument("unknown cell kind: " + name);
}

std::size_t gate_count(CellKind k) {
    switch (k) {
        case CellKind::RNN:
        case CellKind::FastRNN: return 1;
        case CellKind::GRU: return 3;
        case CellKind::LSTM: return 4;
        case CellKind::BiLSTM: return 8;
    }
    return 0;
}

std::size_t rep_rows(const WeightRep& rep) {
    return std::visit(
        [](const auto& r) -> std::size_t {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) return r.rows;
            else if constexpr (std::is_same_v<T, KronFactorPair>) return r.product_rows();
            else if constexpr (std::is_same_v<T, HybridMatrix>) return r.rows();
            else if constexpr (std::is_same_v<T, LowRankPair>) return r.u.rows;
            else return r.rows;
        },
        rep);
}

std::size_t rep_cols(const WeightRep& rep) {
    return std::visit(
        [](const auto& r) -> std::size_t {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) return r.cols;
            else if constexpr (std::is_same_v<T, KronFactorPair>) return r.product_cols();
            else if constexpr (std::is_same_v<T, HybridMatrix>) return r.cols();
            else if constexpr (std::is_same_v<T, LowRankPair>) return r.v.cols;
            else return r.cols;
        },
        rep);
}

std::size_t rep_param_count(const WeightRep& rep) {
    return std::visit(
        [](const auto& r) -> std::size_t {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) return r.size();
            else if constexpr (std::is_same_v<T, KronFactorPair>) return r.param_count();
            else if constexpr (std::is_same_v<T, HybridMatrix>) return r.param_count();
            else if constexpr (std::is_same_v<T, LowRankPair>) return r.param_count();
            else return r.nnz();
        },
        rep);
}

const char* rep_tag(const WeightRep& rep) {
    switch (rep.index()) {
        case 0: return "dense";
        case 1: return "kp";
        case 2: return "hkp";
        case 3: return "lmf";
        default: return "csr";
    }
}

std::vector<double> rep_matvec(const WeightRep& rep, const std::vector<double>& x) {
    return std::visit(
        [&](const auto& r) -> std::vector<double> {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) return matvec(r, x);
            else if constexpr (std::is_same_v<T, KronFactorPair>) return kp_matvec(r, x);
            else if constexpr (std::is_same_v<T, HybridMatrix>) return hkp_matvec(r, x);
            else if constexpr (std::is_same_v<T, LowRankPair>) return lmf_matvec(r, x);
            else return csr_matvec(r, x);
        },
        rep);
}

DenseMatrix rep_to_dense(const WeightRep& rep) {
    return std::visit(
        [](const auto& r) -> DenseMatrix {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) {
                return r;
            } else if constexpr (std::is_same_v<T, KronFactorPair>) {
                return kron_expand(r);
            } else if constexpr (std::is_same_v<T, HybridMatrix>) {
                DenseMatrix out(r.rows(), r.cols());
                for (std::size_t i = 0; i < r.upper.rows; ++i)
                    for (std::size_t j = 0; j < r.upper.cols; ++j) out(i, j) = r.upper(i, j);
                if (!r.lower.b.empty()) {
                    const DenseMatrix low = kron_expand(r.lower);
                    for (std::size_t i = 0; i < low.rows; ++i)
                        for (std::size_t j = 0; j < low.cols; ++j)
                            out(r.upper.rows + i, j) = low(i, j);
                }
                return out;
            } else if constexpr (std::is_same_v<T, LowRankPair>) {
                return matmul(r.u, r.v);
            } else {
                return csr_to_dense(r);
            }
        },
        rep);
}

namespace {

void fill_uniform(DenseMatrix& m, Rng& rng, double limit) {
    for (double& v : m.data) v = rng.uniform(-limit, limit);
}

double glorot_limit(std::size_t fan_out, std::size_t fan_in) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Factor init limits chosen so the materialized product has the same entry
// variance as a Glorot-uniform dense matrix of the full gate shape.
double kron_factor_limit(std::size_t m, std::size_t n) {
    const double var_target = 2.0 / static_cast<double>(m + n);
    return std::sqrt(3.0 * std::sqrt(var_target));
}

double lowrank_factor_limit(std::size_t m, std::size_t n, std::size_t d) {
    const double var_target = 2.0 / static_cast<double>(m + n);
    return std::sqrt(3.0 * std::sqrt(var_target / static_cast<double>(d)));
}

WeightRep build_gate(std::size_t m, std::size_t n, const RepChoice& rep, Rng& rng) {
    switch (rep.kind) {
        case RepChoice::Kind::Dense: {
            DenseMatrix w(m, n);
            fill_uniform(w, rng, glorot_limit(m, n));
            return w;
        }
        case RepChoice::Kind::KP: {
            const ShapePlan plan = select_factor_shapes(m, n);
            KronFactorPair pair = make_pair_for_plan(plan);
            const double lim = kron_factor_limit(m, n);
            fill_uniform(pair.b, rng, lim);
            fill_uniform(pair.c, rng, lim);
            return pair;
        }
        case RepChoice::Kind::HKP: {
            const HkpPlan hplan = hkp_rank_rows_for_target(m, n, rep.target_ratio);
            HybridMatrix h;
            h.r = hplan.r;
            h.upper = DenseMatrix(hplan.r, n);
            fill_uniform(h.upper, rng, glorot_limit(m, n));
            if (hplan.r < m) {
                h.lower = make_pair_for_plan(hplan.lower_plan);
                const double lim = kron_factor_limit(m, n);
                fill_uniform(h.lower.b, rng, lim);
                fill_uniform(h.lower.c, rng, lim);
            }
            return h;
        }
        case RepChoice::Kind::LMF: {
            const LmfRank rank = lmf_rank_for_target(m, n, rep.target_ratio);
            LowRankPair p;
            p.d = rank.d;
            p.u = DenseMatrix(m, rank.d);
            p.v = DenseMatrix(rank.d, n);
            const double lim = lowrank_factor_limit(m, n, rank.d);
            fill_uniform(p.u, rng, lim);
            fill_uniform(p.v, rng, lim);
            return p;
        }
        case RepChoice::Kind::Sparse: {
            if (rep.target_ratio < 1.0)
                throw std::invalid_argument("sparse gate: target ratio must be >= 1");
            DenseMatrix w(m, n);
            fill_uniform(w, rng, glorot_limit(m, n));
            const double sparsity = std::clamp(1.0 - 1.0 / rep.target_ratio, 0.0, 0.999999);
            return magnitude_prune(w, sparsity);
        }
    }
    throw std::logic_error("build_gate: unknown representation");
}

}  // namespace

NetworkSpec build_compressed_network(CellKind kind, std::size_t input_dim, std::size_t hidden_dim,
                                     std::size_t classes, const RepChoice& rep,
                                     std::uint64_t seed) {
    if (input_dim == 0 || hidden_dim == 0 || classes == 0)
        throw std::invalid_argument("build_compressed_network: dims must be positive");
    Rng rng(seed);

    NetworkSpec net;
    net.cell.kind = kind;
    net.cell.input_dim = input_dim;
    net.cell.hidden_dim = hidden_dim;
    net.classes = classes;

    const std::size_t n_tot = input_dim + hidden_dim;
    const std::size_t gates = gate_count(kind);
    for (std::size_t g = 0; g < gates; ++g)
        net.cell.gates.push_back(build_gate(hidden_dim, n_tot, rep, rng));
    net.cell.biases.assign(gates, std::vector<double>(hidden_dim, 0.0));

    if (kind == CellKind::FastRNN) {
        net.cell.fastrnn_alpha = 0.2;
        net.cell.fastrnn_beta = 0.8;
    }

    net.softmax_w = DenseMatrix(classes, net.output_dim());
    fill_uniform(net.softmax_w, rng, glorot_limit(classes, net.output_dim()));
    net.softmax_b.assign(classes, 0.0);
    return net;
}

NetworkSpec expand_to_dense(const NetworkSpec& net) {
    NetworkSpec out = net;
    for (auto& g : out.cell.gates) g = rep_to_dense(g);
    return out;
}

CellState zero_state(const CellSpec& spec) {
    CellState s;
    s.h.assign(spec.hidden_dim, 0.0);
    if (spec.kind == CellKind::LSTM || spec.kind == CellKind::BiLSTM)
        s.c.assign(spec.hidden_dim, 0.0);
    return s;
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

std::vector<double> gate_preact(const CellSpec& spec, std::size_t g, const std::vector<double>& u) {
    std::vector<double> z = rep_matvec(spec.gates[g], u);
    const std::vector<double>& b = spec.biases[g];
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += b[i];
    return z;
}

}  // namespace

CellState cell_step(const CellSpec& spec, const std::vector<double>& x, const CellState& state,
                    int direction) {
    if (x.size() != spec.input_dim) throw std::invalid_argument("cell_step: input dim mismatch");
    if (state.h.size() != spec.hidden_dim)
        throw std::invalid_argument("cell_step: hidden dim mismatch");
    if (direction != 0 && spec.kind != CellKind::BiLSTM)
        throw std::invalid_argument("cell_step: direction only meaningful for BiLSTM");

    const std::size_t H = spec.hidden_dim;
    CellState next;
    next.h.resize(H);

    switch (spec.kind) {
        case CellKind::RNN: {
            std::vector<double> z = gate_preact(spec, 0, concat_xh(x, state.h));
            for (std::size_t i = 0; i < H; ++i) next.h[i] = std::tanh(z[i]);
            break;
        }
        case CellKind::FastRNN: {
            std::vector<double> z = gate_preact(spec, 0, concat_xh(x, state.h));
            for (std::size_t i = 0; i < H; ++i)
                next.h[i] = spec.fastrnn_alpha * std::tanh(z[i]) + spec.fastrnn_beta * state.h[i];
            break;
        }
        case CellKind::LSTM:
        case CellKind::BiLSTM: {
            const std::size_t base = direction == 0 ? 0 : 4;
            const std::vector<double> u = concat_xh(x, state.h);
            const std::vector<double> zi = gate_preact(spec, base + 0, u);
            const std::vector<double> zf = gate_preact(spec, base + 1, u);
            const std::vector<double> zg = gate_preact(spec, base + 2, u);
            const std::vector<double> zo = gate_preact(spec, base + 3, u);
            next.c.resize(H);
            for (std::size_t i = 0; i < H; ++i) {
                const double ig = sigmoid(zi[i]);
                const double fg = sigmoid(zf[i]);
                const double gg = std::tanh(zg[i]);
                const double og = sigmoid(zo[i]);
                next.c[i] = fg * state.c[i] + ig * gg;
                next.h[i] = og * std::tanh(next.c[i]);
            }
            break;
        }
        case CellKind::GRU: {
            // Gate order r, z, candidate; reset applied to the hidden state
            // before the candidate matvec.
            const std::vector<double> u = concat_xh(x, state.h);
            const std::vector<double> zr = gate_preact(spec, 0, u);
            const std::vector<double> zz = gate_preact(spec, 1, u);
            std::vector<double> rh(H);
            for (std::size_t i = 0; i < H; ++i) rh[i] = sigmoid(zr[i]) * state.h[i];
            const std::vector<double> zc = gate_preact(spec, 2, concat_xh(x, rh));
            for (std::size_t i = 0; i < H; ++i) {
                const double zg = sigmoid(zz[i]);
                next.h[i] = (1.0 - zg) * state.h[i] + zg * std::tanh(zc[i]);
            }
            break;
        }
    }
    return next;
}

std::vector<double> sequence_forward(const NetworkSpec& net,
                                     const std::vector<std::vector<double>>& inputs) {
    if (net.time_steps != 0 && inputs.size() != net.time_steps)
        throw std::invalid_argument("sequence_forward: sequence length mismatch");

    std::vector<double> features;
    if (net.cell.kind == CellKind::BiLSTM) {
        CellState fwd = zero_state(net.cell);
        for (const auto& x : inputs) fwd = cell_step(net.cell, x, fwd, 0);
        CellState bwd = zero_state(net.cell);
        for (auto it = inputs.rbegin(); it != inputs.rend(); ++it)
            bwd = cell_step(net.cell, *it, bwd, 1);
        features = concat_xh(fwd.h, bwd.h);
    } else {
        CellState s = zero_state(net.cell);
        for (const auto& x : inputs) s = cell_step(net.cell, x, s);
        features = s.h;
    }

    std::vector<double> logits = matvec(net.softmax_w, features);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += net.softmax_b[i];
    return logits;
}

ParameterCount parameter_count(const NetworkSpec& net) {
    ParameterCount pc;
    std::size_t layer = 0, dense_layer = 0;
    for (const auto& g : net.cell.gates) {
        layer += rep_param_count(g);
        dense_layer += rep_rows(g) * rep_cols(g);
    }
    for (const auto& b : net.cell.biases) {
        layer += b.size();
        dense_layer += b.size();
    }
    if (net.cell.kind == CellKind::FastRNN) {
        layer += 2;
        dense_layer += 2;
    }
    pc.rnn_layer_params = layer;
    pc.compression_factor = layer ? static_cast<double>(dense_layer) / static_cast<double>(layer)
                                  : 1.0;
    pc.total_params = layer + net.softmax_w.size() + net.softmax_b.size();
    pc.size_kb_32bit = static_cast<double>(pc.total_params) * 4.0 / 1024.0;
    return pc;
}

QuantizedNetwork quantize_network(const NetworkSpec& net, QuantScheme scheme) {
    QuantizedNetwork q;
    q.base = net;
    q.scheme = scheme;
    for (const auto& g : net.cell.gates) {
        QuantizedGate qg;
        qg.rep = rep_tag(g);
        std::visit(
            [&](const auto& r) {
                using T = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<T, DenseMatrix>) {
                    qg.tensors.push_back(quantize8(r, scheme));
                } else if constexpr (std::is_same_v<T, KronFactorPair>) {
                    qg.tensors.push_back(quantize8(r.b, scheme));
                    qg.tensors.push_back(quantize8(r.c, scheme));
                } else if constexpr (std::is_same_v<T, HybridMatrix>) {
                    qg.tensors.push_back(quantize8(r.upper, scheme));
                    if (!r.lower.b.empty()) {
                        qg.tensors.push_back(quantize8(r.lower.b, scheme));
                        qg.tensors.push_back(quantize8(r.lower.c, scheme));
                    }
                } else if constexpr (std::is_same_v<T, LowRankPair>) {
                    qg.tensors.push_back(quantize8(r.u, scheme));
                    qg.tensors.push_back(quantize8(r.v, scheme));
                } else {
                    DenseMatrix vals(1, r.values.size());
                    vals.data = r.values;
                    qg.tensors.push_back(quantize8(vals, scheme));
                }
            },
            g);
        q.gates.push_back(std::move(qg));
    }
    return q;
}

namespace {

WeightRep dequantize_gate(const WeightRep& original, const QuantizedGate& qg) {
    WeightRep out = original;
    std::visit(
        [&](auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) {
                r = dequantize8(qg.tensors[0]);
            } else if constexpr (std::is_same_v<T, KronFactorPair>) {
                r.b = dequantize8(qg.tensors[0]);
                r.c = dequantize8(qg.tensors[1]);
            } else if constexpr (std::is_same_v<T, HybridMatrix>) {
                r.upper = dequantize8(qg.tensors[0]);
                if (qg.tensors.size() > 1) {
                    r.lower.b = dequantize8(qg.tensors[1]);
                    r.lower.c = dequantize8(qg.tensors[2]);
                }
            } else if constexpr (std::is_same_v<T, LowRankPair>) {
                r.u = dequantize8(qg.tensors[0]);
                r.v = dequantize8(qg.tensors[1]);
            } else {
                r.values = dequantize8(qg.tensors[0]).data;
            }
        },
        out);
    return out;
}

}  // namespace

std::vector<double> quantized_network_forward(const QuantizedNetwork& qnet,
                                              const std::vector<std::vector<double>>& inputs) {
    NetworkSpec net = qnet.base;
    for (std::size_t g = 0; g < net.cell.gates.size(); ++g)
        net.cell.gates[g] = dequantize_gate(net.cell.gates[g], qnet.gates[g]);
    return sequence_forward(net, inputs);
}

QuantSizeReport quantized_size_report(const NetworkSpec& net) {
    QuantSizeReport rep;
    auto add = [&](const std::string& name, std::size_t params, std::size_t tensor_count) {
        QuantSizeReport::Item item;
        item.name = name;
        item.params = params;
        item.bytes_32bit = params * 4;
        item.bytes_8bit = params;
        item.scale_bytes = tensor_count * 8;
        rep.items.push_back(item);
    };

    std::size_t csr_index_bytes = 0;
    for (std::size_t g = 0; g < net.cell.gates.size(); ++g) {
        const WeightRep& w = net.cell.gates[g];
        std::size_t tensors = 1;
        if (std::holds_alternative<KronFactorPair>(w) || std::holds_alternative<LowRankPair>(w))
            tensors = 2;
        else if (const auto* h = std::get_if<HybridMatrix>(&w))
            tensors = h->lower.b.empty() ? 1 : 3;
        else if (const auto* s = std::get_if<SparseCSR>(&w))
            csr_index_bytes += s->col_idx.size() * 4 + s->row_ptr.size() * 4;
        add("gate" + std::to_string(g) + " (" + rep_tag(w) + ")", rep_param_count(w), tensors);
    }

    std::size_t bias_params = 0;
    for (const auto& b : net.cell.biases) bias_params += b.size();
    add("biases", bias_params, net.cell.biases.size());
    add("softmax", net.softmax_w.size() + net.softmax_b.size(), 2);
    if (csr_index_bytes) {
        QuantSizeReport::Item idx;
        idx.name = "csr indices";
        idx.bytes_32bit = csr_index_bytes;
        idx.bytes_8bit = csr_index_bytes;  // indices are not quantized
        rep.items.push_back(idx);
    }

    for (const auto& item : rep.items) {
        rep.total_bytes_32bit += item.bytes_32bit;
        rep.total_bytes_8bit += item.bytes_8bit + item.scale_bytes;
    }
    return rep;
}

}  // namespace kprnn
