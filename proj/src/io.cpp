#include "kprnn/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace kprnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32_le(std::ostream& os, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(bytes, 4);
}

std::uint32_t get_u32_le(std::istream& is, std::size_t offset) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated u32", offset);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(bytes, 8);
}

double get_f64_le(std::istream& is, std::size_t offset) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated f64", offset);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::uint32_t get_u32_be(std::istream& is, std::size_t offset) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated u32", offset);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void put_u32_be(std::ostream& os, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                           static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
    os.write(bytes, 4);
}

}  // namespace

// 16-byte header: magic "KPM1", u32 rows, u32 cols, u32 reserved (zero).
void save_matrix_kpm1(const fs::path& path, const DenseMatrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os.write("KPM1", 4);
    put_u32_le(os, static_cast<std::uint32_t>(m.rows));
    put_u32_le(os, static_cast<std::uint32_t>(m.cols));
    put_u32_le(os, 0);
    for (double v : m.data) put_f64_le(os, v);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

DenseMatrix load_matrix_kpm1(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4)) throw FormatError("truncated magic", 0);
    if (std::memcmp(magic, "KPM1", 4) != 0) throw FormatError("bad magic", 0);
    const std::uint32_t rows = get_u32_le(is, 4);
    const std::uint32_t cols = get_u32_le(is, 8);
    get_u32_le(is, 12);  // reserved
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = get_f64_le(is, 16 + 8 * i);
    return m;
}

void save_matrix_csv(const fs::path& path, const DenseMatrix& m) {
    if (m.size() > 1000000) throw std::invalid_argument("csv export limited to 1e6 elements");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os.precision(17);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) os << ',';
            os << m(i, j);
        }
        os << '\n';
    }
}

DenseMatrix load_matrix_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError("ragged csv row", rows.size());
        rows.push_back(std::move(row));
    }
    DenseMatrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
    return m;
}

IdxData load_idx(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    const std::uint32_t magic = get_u32_be(is, 0);
    if ((magic & 0xffffff00) != 0x00000800)
        throw FormatError("bad idx magic (expected unsigned-byte type)", 0);
    const std::size_t ndims = magic & 0xff;
    if (ndims == 0 || ndims > 4) throw FormatError("unsupported idx dimensionality", 3);

    IdxData data;
    std::size_t total = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        data.dims.push_back(get_u32_be(is, 4 + 4 * d));
        total *= data.dims.back();
    }
    data.bytes.resize(total);
    const std::size_t header = 4 + 4 * ndims;
    if (!is.read(reinterpret_cast<char*>(data.bytes.data()), static_cast<std::streamsize>(total))) {
        const std::size_t got = static_cast<std::size_t>(is.gcount());
        throw FormatError("truncated idx payload", header + got);
    }
    return data;
}

void save_idx(const fs::path& path, const IdxData& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    put_u32_be(os, 0x00000800 | static_cast<std::uint32_t>(data.dims.size()));
    for (std::size_t d : data.dims) put_u32_be(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(data.bytes.data()),
             static_cast<std::streamsize>(data.bytes.size()));
}

namespace {

DenseMatrix vec_as_row(const std::vector<double>& v) {
    DenseMatrix m(1, v.size());
    m.data = v;
    return m;
}

DenseMatrix sizes_as_row(const std::vector<std::size_t>& v) {
    DenseMatrix m(1, v.size());
    for (std::size_t i = 0; i < v.size(); ++i) m.data[i] = static_cast<double>(v[i]);
    return m;
}

DenseMatrix u32_as_row(const std::vector<std::uint32_t>& v) {
    DenseMatrix m(1, v.size());
    for (std::size_t i = 0; i < v.size(); ++i) m.data[i] = static_cast<double>(v[i]);
    return m;
}

// Writes one gate's tensors, returns the manifest entry.
json save_gate(const fs::path& dir, std::size_t index, const WeightRep& rep) {
    json entry;
    entry["rep"] = rep_tag(rep);
    const std::string stem = "tensors/gate" + std::to_string(index);
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, DenseMatrix>) {
                save_matrix_kpm1(dir / (stem + "_w.kpm"), r);
                entry["w"] = stem + "_w.kpm";
            } else if constexpr (std::is_same_v<T, KronFactorPair>) {
                save_matrix_kpm1(dir / (stem + "_b.kpm"), r.b);
                save_matrix_kpm1(dir / (stem + "_c.kpm"), r.c);
                entry["b"] = stem + "_b.kpm";
                entry["c"] = stem + "_c.kpm";
            } else if constexpr (std::is_same_v<T, HybridMatrix>) {
                entry["r"] = r.r;
                save_matrix_kpm1(dir / (stem + "_upper.kpm"), r.upper);
                entry["upper"] = stem + "_upper.kpm";
                if (!r.lower.b.empty()) {
                    save_matrix_kpm1(dir / (stem + "_b.kpm"), r.lower.b);
                    save_matrix_kpm1(dir / (stem + "_c.kpm"), r.lower.c);
                    entry["b"] = stem + "_b.kpm";
                    entry["c"] = stem + "_c.kpm";
                }
            } else if constexpr (std::is_same_v<T, LowRankPair>) {
                entry["d"] = r.d;
                save_matrix_kpm1(dir / (stem + "_u.kpm"), r.u);
                save_matrix_kpm1(dir / (stem + "_v.kpm"), r.v);
                entry["u"] = stem + "_u.kpm";
                entry["v"] = stem + "_v.kpm";
            } else {
                entry["rows"] = r.rows;
                entry["cols"] = r.cols;
                save_matrix_kpm1(dir / (stem + "_rowptr.kpm"), sizes_as_row(r.row_ptr));
                save_matrix_kpm1(dir / (stem + "_colidx.kpm"), u32_as_row(r.col_idx));
                save_matrix_kpm1(dir / (stem + "_values.kpm"), vec_as_row(r.values));
                entry["row_ptr"] = stem + "_rowptr.kpm";
                entry["col_idx"] = stem + "_colidx.kpm";
                entry["values"] = stem + "_values.kpm";
            }
        },
        rep);
    return entry;
}

WeightRep load_gate(const fs::path& dir, const json& entry) {
    const std::string rep = entry.at("rep");
    if (rep == "dense") {
        return load_matrix_kpm1(dir / entry.at("w").get<std::string>());
    }
    if (rep == "kp") {
        KronFactorPair p;
        p.b = load_matrix_kpm1(dir / entry.at("b").get<std::string>());
        p.c = load_matrix_kpm1(dir / entry.at("c").get<std::string>());
        return p;
    }
    if (rep == "hkp") {
        HybridMatrix h;
        h.r = entry.at("r").get<std::size_t>();
        h.upper = load_matrix_kpm1(dir / entry.at("upper").get<std::string>());
        if (entry.contains("b")) {
            h.lower.b = load_matrix_kpm1(dir / entry.at("b").get<std::string>());
            h.lower.c = load_matrix_kpm1(dir / entry.at("c").get<std::string>());
        }
        return h;
    }
    if (rep == "lmf") {
        LowRankPair p;
        p.d = entry.at("d").get<std::size_t>();
        p.u = load_matrix_kpm1(dir / entry.at("u").get<std::string>());
        p.v = load_matrix_kpm1(dir / entry.at("v").get<std::string>());
        return p;
    }
    if (rep == "csr") {
        SparseCSR s;
        s.rows = entry.at("rows").get<std::size_t>();
        s.cols = entry.at("cols").get<std::size_t>();
        const DenseMatrix rp = load_matrix_kpm1(dir / entry.at("row_ptr").get<std::string>());
        const DenseMatrix ci = load_matrix_kpm1(dir / entry.at("col_idx").get<std::string>());
        const DenseMatrix vals = load_matrix_kpm1(dir / entry.at("values").get<std::string>());
        for (double v : rp.data) s.row_ptr.push_back(static_cast<std::size_t>(v));
        for (double v : ci.data) s.col_idx.push_back(static_cast<std::uint32_t>(v));
        s.values = vals.data;
        return s;
    }
    throw std::runtime_error("unknown gate representation in manifest: " + rep);
}

std::vector<std::string> gate_order_names(CellKind kind) {
    switch (kind) {
        case CellKind::RNN:
        case CellKind::FastRNN: return {"w"};
        case CellKind::GRU: return {"r", "z", "candidate"};
        case CellKind::LSTM: return {"i", "f", "g", "o"};
        case CellKind::BiLSTM:
            return {"fwd_i", "fwd_f", "fwd_g", "fwd_o", "bwd_i", "bwd_f", "bwd_g", "bwd_o"};
    }
    return {};
}

json network_manifest(const fs::path& dir, const NetworkSpec& net) {
    json manifest;
    manifest["format"] = "kprnn-net-v1";
    manifest["cell"] = cell_kind_name(net.cell.kind);
    manifest["input_dim"] = net.cell.input_dim;
    manifest["hidden_dim"] = net.cell.hidden_dim;
    manifest["classes"] = net.classes;
    manifest["time_steps"] = net.time_steps;
    manifest["gate_order"] = gate_order_names(net.cell.kind);
    if (net.cell.kind == CellKind::FastRNN) {
        manifest["fastrnn"] = {{"alpha", net.cell.fastrnn_alpha},
                               {"beta", net.cell.fastrnn_beta}};
    }
    json gates = json::array();
    for (std::size_t g = 0; g < net.cell.gates.size(); ++g)
        gates.push_back(save_gate(dir, g, net.cell.gates[g]));
    manifest["gates"] = gates;

    json biases = json::array();
    for (std::size_t g = 0; g < net.cell.biases.size(); ++g) {
        const std::string rel = "tensors/bias" + std::to_string(g) + ".kpm";
        save_matrix_kpm1(dir / rel, vec_as_row(net.cell.biases[g]));
        biases.push_back(rel);
    }
    manifest["biases"] = biases;

    save_matrix_kpm1(dir / "tensors/softmax_w.kpm", net.softmax_w);
    save_matrix_kpm1(dir / "tensors/softmax_b.kpm", vec_as_row(net.softmax_b));
    manifest["softmax"] = {{"w", "tensors/softmax_w.kpm"}, {"b", "tensors/softmax_b.kpm"}};
    return manifest;
}

NetworkSpec network_from_manifest(const fs::path& dir, const json& manifest) {
    NetworkSpec net;
    net.cell.kind = cell_kind_from_name(manifest.at("cell"));
    net.cell.input_dim = manifest.at("input_dim").get<std::size_t>();
    net.cell.hidden_dim = manifest.at("hidden_dim").get<std::size_t>();
    net.classes = manifest.at("classes").get<std::size_t>();
    net.time_steps = manifest.at("time_steps").get<std::size_t>();
    if (manifest.contains("fastrnn")) {
        net.cell.fastrnn_alpha = manifest["fastrnn"].at("alpha").get<double>();
        net.cell.fastrnn_beta = manifest["fastrnn"].at("beta").get<double>();
    }
    for (const auto& entry : manifest.at("gates")) net.cell.gates.push_back(load_gate(dir, entry));
    for (const auto& rel : manifest.at("biases"))
        net.cell.biases.push_back(load_matrix_kpm1(dir / rel.get<std::string>()).data);
    net.softmax_w = load_matrix_kpm1(dir / manifest.at("softmax").at("w").get<std::string>());
    net.softmax_b = load_matrix_kpm1(dir / manifest.at("softmax").at("b").get<std::string>()).data;
    return net;
}

void write_manifest(const fs::path& dir, const json& manifest) {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
}

json read_manifest(const fs::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("cannot open manifest in " + dir.string());
    json manifest;
    is >> manifest;
    return manifest;
}

}  // namespace

void save_network(const fs::path& dir, const NetworkSpec& net) {
    fs::create_directories(dir / "tensors");
    write_manifest(dir, network_manifest(dir, net));
}

NetworkSpec load_network(const fs::path& dir) {
    return network_from_manifest(dir, read_manifest(dir));
}

void save_quantized_network(const fs::path& dir, const QuantizedNetwork& qnet) {
    fs::create_directories(dir / "tensors");
    json manifest = network_manifest(dir, qnet.base);
    manifest["format"] = "kprnn-qnet-v1";
    manifest["quant_scheme"] = quant_scheme_name(qnet.scheme);
    json qgates = json::array();
    for (std::size_t g = 0; g < qnet.gates.size(); ++g) {
        json tensors = json::array();
        for (std::size_t t = 0; t < qnet.gates[g].tensors.size(); ++t) {
            const QuantTensor& qt = qnet.gates[g].tensors[t];
            const std::string rel =
                "tensors/qgate" + std::to_string(g) + "_" + std::to_string(t) + ".bin";
            std::ofstream os(dir / rel, std::ios::binary);
            os.write(reinterpret_cast<const char*>(qt.payload.data()),
                     static_cast<std::streamsize>(qt.payload.size()));
            tensors.push_back({{"path", rel},
                               {"scale", qt.scale},
                               {"rows", qt.rows},
                               {"cols", qt.cols}});
        }
        qgates.push_back({{"rep", qnet.gates[g].rep}, {"tensors", tensors}});
    }
    manifest["quant_gates"] = qgates;
    write_manifest(dir, manifest);
}

QuantizedNetwork load_quantized_network(const fs::path& dir) {
    const json manifest = read_manifest(dir);
    QuantizedNetwork qnet;
    qnet.base = network_from_manifest(dir, manifest);
    qnet.scheme = quant_scheme_from_name(manifest.at("quant_scheme"));
    std::size_t gate_index = 0;
    for (const auto& gate : manifest.at("quant_gates")) {
        QuantizedGate qg;
        qg.rep = rep_tag(qnet.base.cell.gates[gate_index++]);
        for (const auto& tj : gate.at("tensors")) {
            QuantTensor qt;
            qt.scheme = qnet.scheme;
            qt.scale = tj.at("scale").get<double>();
            qt.rows = tj.at("rows").get<std::size_t>();
            qt.cols = tj.at("cols").get<std::size_t>();
            std::ifstream is(dir / tj.at("path").get<std::string>(), std::ios::binary);
            if (!is) throw std::runtime_error("missing quant payload");
            qt.payload.resize(qt.rows * qt.cols);
            if (!is.read(reinterpret_cast<char*>(qt.payload.data()),
                         static_cast<std::streamsize>(qt.payload.size())))
                throw FormatError("truncated quant payload", static_cast<std::size_t>(is.gcount()));
            qg.tensors.push_back(std::move(qt));
        }
        qnet.gates.push_back(std::move(qg));
    }
    return qnet;
}

void save_checkpoint(const fs::path& dir, const NetworkSpec& net, const OptimizerState& state,
                     std::size_t step) {
    save_network(dir, net);
    save_matrix_kpm1(dir / "optimizer_m.kpm", vec_as_row(state.m));
    save_matrix_kpm1(dir / "optimizer_v.kpm", vec_as_row(state.v));
    json meta;
    meta["step"] = step;
    std::ofstream os(dir / "optimizer.json");
    os << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
    Checkpoint ck;
    ck.net = load_network(dir);
    ck.state.m = load_matrix_kpm1(dir / "optimizer_m.kpm").data;
    ck.state.v = load_matrix_kpm1(dir / "optimizer_v.kpm").data;
    std::ifstream is(dir / "optimizer.json");
    if (is) {
        json meta;
        is >> meta;
        ck.step = meta.at("step").get<std::size_t>();
    }
    return ck;
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics) {
    std::ostringstream os;
    os.precision(12);
    os << "epoch,loss,train_acc,lr\n";
    for (const auto& m : metrics)
        os << m.epoch << ',' << m.loss << ',' << m.train_accuracy << ',' << m.lr << '\n';
    return os.str();
}

void save_metrics_csv(const fs::path& path, const std::vector<EpochMetrics>& metrics) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << metrics_to_csv(metrics);
}

}  // namespace kprnn
