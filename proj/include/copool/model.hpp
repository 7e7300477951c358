#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "copool/dataset.hpp"
#include "copool/layers.hpp"
#include "copool/pool.hpp"

namespace copool {

struct ModelConfig {
    int attr_dim = 1;
    int hidden = 64;
    double dropout = 0.0;
    CoPoolConfig pool;
    TaskSpec task;

    int head_hidden() const { return std::max(1, hidden / 2); }
    int out_dim() const { return task.kind == TaskKind::classification ? task.num_classes : 1; }
    int conv_layers() const { return task.kind == TaskKind::classification ? 3 : 2; }

    void validate() const {
        if (attr_dim < 1)
            throw std::invalid_argument("ModelConfig: attr_dim must be >= 1 (pad plain datasets first)");
        if (hidden < 1) throw std::invalid_argument("ModelConfig: hidden must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("ModelConfig: dropout outside [0,1)");
        if (task.kind == TaskKind::classification && task.num_classes < 2)
            throw std::invalid_argument("ModelConfig: classification needs >= 2 classes");
        pool.validate();
    }
};

/// All learnable tensors: conv weights, two pooling stages, three-layer head.
struct ModelParams {
    std::vector<Tensor> gcn;
    CoPoolParams pool1, pool2;
    Tensor w1, b1, w2, b2, w3, b3;

    std::vector<Tensor> all() const {
        std::vector<Tensor> out = gcn;
        for (const auto& t : pool1.parameters()) out.push_back(t);
        for (const auto& t : pool2.parameters()) out.push_back(t);
        for (const auto& t : {w1, b1, w2, b2, w3, b3}) out.push_back(t);
        return out;
    }

    std::vector<std::pair<std::string, Tensor>> named() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (std::size_t i = 0; i < gcn.size(); ++i) out.emplace_back("gcn" + std::to_string(i), gcn[i]);
        auto stage = [&out](const char* prefix, const CoPoolParams& p) {
            if (p.beta.size() > 0) out.emplace_back(std::string(prefix) + ".beta", p.beta);
            out.emplace_back(std::string(prefix) + ".w_prox", p.w_prox);
            out.emplace_back(std::string(prefix) + ".a", p.a);
            out.emplace_back(std::string(prefix) + ".w_fuse", p.w_fuse);
        };
        stage("pool1", pool1);
        stage("pool2", pool2);
        out.emplace_back("head.w1", w1);
        out.emplace_back("head.b1", b1);
        out.emplace_back("head.w2", w2);
        out.emplace_back("head.b2", b2);
        out.emplace_back("head.w3", w3);
        out.emplace_back("head.b3", b3);
        return out;
    }

    /// Deep copy of the parameter values (fresh leaves, no shared storage).
    ModelParams snapshot() const {
        ModelParams c = *this;
        auto copy = [](Tensor& t) {
            if (t.size() > 0) t = Tensor::param(t.rows(), t.cols(), t.values());
        };
        for (auto& t : c.gcn) copy(t);
        for (CoPoolParams* p : {&c.pool1, &c.pool2}) {
            copy(p->beta);
            copy(p->w_prox);
            copy(p->a);
            copy(p->w_fuse);
        }
        for (Tensor* t : {&c.w1, &c.b1, &c.w2, &c.b2, &c.w3, &c.b3}) copy(*t);
        return c;
    }
};

inline ModelParams make_model_params(const ModelConfig& config, Rng& rng) {
    config.validate();
    const int h = config.hidden;
    ModelParams p;
    p.gcn.push_back(glorot_uniform(config.attr_dim, h, rng));
    for (int layer = 1; layer < config.conv_layers(); ++layer) p.gcn.push_back(glorot_uniform(h, h, rng));
    p.pool1 = make_copool_params(h, h, h, config.pool, rng);
    p.pool2 = make_copool_params(h, h, h, config.pool, rng);
    p.w1 = glorot_uniform(4 * h, h, rng);
    p.b1 = Tensor::param(1, h, std::vector<double>(h, 0.0));
    p.w2 = glorot_uniform(h, config.head_hidden(), rng);
    p.b2 = Tensor::param(1, config.head_hidden(), std::vector<double>(config.head_hidden(), 0.0));
    p.w3 = glorot_uniform(config.head_hidden(), config.out_dim(), rng);
    p.b3 = Tensor::param(1, config.out_dim(), std::vector<double>(config.out_dim(), 0.0));
    return p;
}

namespace detail {

inline Tensor slot_attrs(const Batch& batch, int slot) {
    const int n = batch.slot_size(slot);
    const int d = batch.attr_dim;
    std::vector<double> v(batch.attrs.begin() + static_cast<std::size_t>(batch.slot_begin(slot)) * d,
                          batch.attrs.begin() + static_cast<std::size_t>(batch.slot_begin(slot) + n) * d);
    return Tensor(n, d, std::move(v));
}

inline std::vector<std::pair<int, int>> slot_edges(const Batch& batch, int slot) {
    const int base = batch.slot_begin(slot);
    const int end = base + batch.slot_size(slot);
    std::vector<std::pair<int, int>> out;
    for (auto [u, v] : batch.edges)
        if (u >= base && u < end) out.emplace_back(u - base, v - base);
    return out;
}

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), matmul(Tensor::ones(x.rows(), 1), b));
}

inline Tensor stage_readout(const Tensor& z) { return hcat(mean_rows(z), max_rows(z)); }

// conv/pool trunk shared by both tasks; returns the 1 x 4h per-slot feature
inline Tensor slot_features(const Batch& batch, int slot, const ModelParams& params,
                            const ModelConfig& config, std::vector<PooledGraph>* diagnostics = nullptr) {
    Tensor x = slot_attrs(batch, slot);
    Tensor adj = dense_adjacency(x.rows(), slot_edges(batch, slot));

    Tensor h = x;
    PooledGraph p1, p2;
    if (config.task.kind == TaskKind::classification) {
        h = relu(gcn_forward(h, adj, params.gcn[0]));
        h = relu(gcn_forward(h, adj, params.gcn[1]));
        p1 = copool_forward(h, adj, params.pool1, config.pool);
        Tensor h3 = relu(gcn_forward(p1.z, p1.adj, params.gcn[2]));
        p2 = copool_forward(h3, p1.adj, params.pool2, config.pool);
    } else {
        h = relu(gcn_forward(h, adj, params.gcn[0]));
        p1 = copool_forward(h, adj, params.pool1, config.pool);
        Tensor h2 = relu(gcn_forward(p1.z, p1.adj, params.gcn[1]));
        p2 = copool_forward(h2, p1.adj, params.pool2, config.pool);
    }
    Tensor out = hcat(stage_readout(p1.z), stage_readout(p2.z));
    if (diagnostics) {
        diagnostics->push_back(std::move(p1));
        diagnostics->push_back(std::move(p2));
    }
    return out;
}

inline Tensor head(const Tensor& features, const ModelParams& params, const ModelConfig& config,
                   bool train_mode, Rng* dropout_rng) {
    Tensor h = relu(linear(features, params.w1, params.b1));
    if (train_mode && config.dropout > 0.0) h = dropout(h, config.dropout, *dropout_rng);
    h = relu(linear(h, params.w2, params.b2));
    if (train_mode && config.dropout > 0.0) h = dropout(h, config.dropout, *dropout_rng);
    return linear(h, params.w3, params.b3);
}

inline Tensor batch_features(const Batch& batch, const ModelParams& params, const ModelConfig& config) {
    Tensor features;
    for (int s = 0; s < batch.slots(); ++s) {
        Tensor f = slot_features(batch, s, params, config);
        features = s == 0 ? f : vcat(features, f);
    }
    return features;
}

}  // namespace detail

/// Both pooling stages of every slot, evaluated without tape recording.
/// Exposes the discrete choices (selected nodes, surviving edges) and the cut
/// matrices for experiment diagnostics and stability screens.
inline std::vector<std::vector<PooledGraph>> pooling_diagnostics(const Batch& batch,
                                                                 const ModelParams& params,
                                                                 const ModelConfig& config) {
    NoGradGuard guard;
    std::vector<std::vector<PooledGraph>> out(batch.slots());
    for (int s = 0; s < batch.slots(); ++s) detail::slot_features(batch, s, params, config, &out[s]);
    return out;
}

/// slots x C logits. Dropout is active only in train mode, drawing masks from
/// the caller's RNG.
inline Tensor classify_forward(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                               bool train_mode = false, Rng* dropout_rng = nullptr) {
    if (config.task.kind != TaskKind::classification)
        throw std::invalid_argument("classify_forward: config task is not classification");
    if (batch.attr_dim != config.attr_dim)
        throw std::invalid_argument("classify_forward: batch attr_dim " + std::to_string(batch.attr_dim) +
                                    " != config attr_dim " + std::to_string(config.attr_dim));
    if (train_mode && config.dropout > 0.0 && dropout_rng == nullptr)
        throw std::invalid_argument("classify_forward: train mode with dropout needs an RNG");
    return detail::head(detail::batch_features(batch, params, config), params, config, train_mode,
                        dropout_rng);
}

/// slots x 1 predictions; deterministic (no stochastic layers).
inline Tensor regress_forward(const Batch& batch, const ModelParams& params, const ModelConfig& config) {
    if (config.task.kind != TaskKind::regression)
        throw std::invalid_argument("regress_forward: config task is not regression");
    if (batch.attr_dim != config.attr_dim)
        throw std::invalid_argument("regress_forward: batch attr_dim mismatch");
    return detail::head(detail::batch_features(batch, params, config), params, config, false, nullptr);
}

/// Cross-entropy (mean NLL of log-softmax) for classification, mean absolute
/// error for regression.
inline Tensor model_loss(const Tensor& outputs, const Batch& batch, const TaskSpec& task) {
    if (task.kind == TaskKind::classification) {
        std::vector<int> targets(batch.targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(batch.targets[i]);
        return nll_loss(log_softmax(outputs), targets);
    }
    return abs_error_mean(outputs, Tensor(outputs.rows(), 1, batch.targets));
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, config echo, named tensors with shape
// headers. Doubles are stored as raw little-endian bytes, so write/read
// round-trips are bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'P', 'O', 'O', 'L', 'C', 'K'};

inline void save_checkpoint(const std::string& path, const std::string& config_json,
                            const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, 8);
    detail::write_u32(out, 1);  // version
    detail::write_u64(out, config_json.size());
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    const auto named = params.named();
    detail::write_u32(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(tensor.rows()));
        detail::write_u32(out, static_cast<std::uint32_t>(tensor.cols()));
        out.write(reinterpret_cast<const char*>(tensor.values().data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

struct Checkpoint {
    std::string config_json;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const std::uint32_t version = detail::read_u32(in);
    if (version != 1)
        throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    ck.config_json.resize(detail::read_u64(in));
    in.read(ck.config_json.data(), static_cast<std::streamsize>(ck.config_json.size()));
    const std::uint32_t count = detail::read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(detail::read_u32(in), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        const int rows = static_cast<int>(detail::read_u32(in));
        const int cols = static_cast<int>(detail::read_u32(in));
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        ck.tensors.emplace_back(std::move(name), Tensor::param(rows, cols, std::move(values)));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return ck;
}

/// Copies checkpoint values into a params instance of matching structure.
inline void restore_params(ModelParams& params, const Checkpoint& ck) {
    auto named = params.named();
    if (named.size() != ck.tensors.size())
        throw std::runtime_error("restore_params: tensor count mismatch");
    for (std::size_t i = 0; i < named.size(); ++i) {
        auto& [name, tensor] = named[i];
        const auto& [ck_name, ck_tensor] = ck.tensors[i];
        if (name != ck_name || tensor.rows() != ck_tensor.rows() || tensor.cols() != ck_tensor.cols())
            throw std::runtime_error("restore_params: mismatch at '" + name + "'");
        tensor.values() = ck_tensor.values();
    }
}

}  // namespace copool
