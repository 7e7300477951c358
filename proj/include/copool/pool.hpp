#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "copool/layers.hpp"
#include "copool/rng.hpp"
#include "copool/tensor.hpp"

namespace copool {

enum class PoolMode { full, no_gpr, no_node_view };

struct CoPoolConfig {
    double gamma = 1.0;    // edge retaining ratio, (0, 1]
    double epsilon = 0.5;  // node pooling ratio, (0, 1]
    int gpr_steps = 3;     // propagation steps T
    PoolMode mode = PoolMode::full;
    // Eq. of the score treats the cut matrix's unit diagonal and the extra
    // identity literally, giving self-weight 2 before normalization. Setting
    // this false collapses the two into a single self-loop.
    bool score_extra_self_loop = true;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw std::invalid_argument("CoPoolConfig: gamma " + std::to_string(gamma) + " outside (0,1]");
        if (!(epsilon > 0.0 && epsilon <= 1.0))
            throw std::invalid_argument("CoPoolConfig: epsilon " + std::to_string(epsilon) + " outside (0,1]");
        if (gpr_steps < 0) throw std::invalid_argument("CoPoolConfig: gpr_steps must be >= 0");
    }
};

/// Learnable symbols of one pooling stage.
struct CoPoolParams {
    Tensor beta;    // (T+1) x 1 GPR weights; empty in no_gpr mode
    Tensor w_prox;  // f x f' proximity transform
    Tensor a;       // 2f' x 1 proximity vector
    Tensor w_fuse;  // fusion transform: (2f in full, f in no_node_view) x f_out

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        if (beta.size() > 0) out.push_back(beta);
        out.push_back(w_prox);
        out.push_back(a);
        out.push_back(w_fuse);
        return out;
    }
};

/// beta starts uniform at 1/(T+1); the transforms are Glorot-initialized.
inline CoPoolParams make_copool_params(int f, int f_prime, int f_out, const CoPoolConfig& config,
                                       Rng& rng) {
    config.validate();
    CoPoolParams p;
    if (config.mode != PoolMode::no_gpr) {
        const int t1 = config.gpr_steps + 1;
        p.beta = Tensor::param(t1, 1, std::vector<double>(t1, 1.0 / t1));
    }
    p.w_prox = glorot_uniform(f, f_prime, rng);
    p.a = glorot_uniform(2 * f_prime, 1, rng);
    p.w_fuse = glorot_uniform(config.mode == PoolMode::no_node_view ? f : 2 * f, f_out, rng);
    return p;
}

struct PooledGraph {
    Tensor z;                                     // K x f_out fused features
    Tensor adj;                                   // K x K pooled weighted adjacency
    std::vector<int> indices;                     // selected original ids, descending score
    Tensor proximity_full;                        // n x n cut proximity matrix (diagnostic)
    std::vector<std::pair<int, int>> kept_edges;  // surviving original edges (diagnostic)
};

namespace detail {

// ceil(ratio * count) robust to decimal-literal FP wobble (0.3*10 etc.)
inline std::size_t ceil_ratio(std::size_t count, double ratio) {
    return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(count) - 1e-9));
}

}  // namespace detail

/// Unordered off-diagonal support of a weighted adjacency.
inline std::vector<std::pair<int, int>> offdiag_edges(const Tensor& adj) {
    std::vector<std::pair<int, int>> edges;
    const int n = adj.rows();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (adj.at(i, j) != 0.0 || adj.at(j, i) != 0.0) edges.emplace_back(i, j);
    return edges;
}

/// Generalized PageRank: O = sum_t beta_t H^t with H^0 = H and
/// H^t = sym_norm(A + I) H^{t-1}. Differentiable in H, beta, and A.
inline Tensor gpr_propagate(const Tensor& h, const Tensor& adj, const Tensor& beta, int steps) {
    if (beta.size() != static_cast<std::size_t>(steps) + 1)
        throw std::invalid_argument("gpr_propagate: beta has " + std::to_string(beta.size()) +
                                    " entries for T=" + std::to_string(steps));
    Tensor acc = mul(h, row_select(beta, {0}));
    if (steps == 0) return acc;
    Tensor norm = sym_norm(add(adj, Tensor::identity(adj.rows())));
    Tensor ht = h;
    for (int t = 1; t <= steps; ++t) {
        ht = matmul(norm, ht);
        acc = add(acc, mul(ht, row_select(beta, {t})));
    }
    return acc;
}

/// Proximity weights P_ij = sigma(a^T [W O_i || W O_j]) on both orientations
/// of each edge, zero elsewhere and on the diagonal.
inline Tensor proximity_weights(const Tensor& o, const std::vector<std::pair<int, int>>& edges,
                                const Tensor& a, const Tensor& w_prox) {
    const int n = o.rows();
    const int fp = w_prox.cols();
    if (a.rows() != 2 * fp || a.cols() != 1)
        throw std::invalid_argument("proximity_weights: a is " + a.shape_str() + ", expected " +
                                    std::to_string(2 * fp) + "x1");
    Tensor transformed = matmul(o, w_prox);  // n x f'
    std::vector<int> head_idx(fp), tail_idx(fp);
    std::iota(head_idx.begin(), head_idx.end(), 0);
    std::iota(tail_idx.begin(), tail_idx.end(), fp);
    Tensor s_head = matmul(transformed, row_select(a, head_idx));  // n x 1
    Tensor s_tail = matmul(transformed, row_select(a, tail_idx));  // n x 1

    // logits L_ij = s_head_i + s_tail_j, masked to the directed edge support
    Tensor logits = add(matmul(s_head, Tensor::ones(1, n)), matmul(Tensor::ones(n, 1), transpose(s_tail)));
    Tensor mask = Tensor::zeros(n, n);
    for (auto [u, v] : edges) {
        if (u == v || u < 0 || v < 0 || u >= n || v >= n)
            throw std::invalid_argument("proximity_weights: bad edge (" + std::to_string(u) + "," +
                                        std::to_string(v) + ")");
        mask.values()[std::size_t(u) * n + v] = 1.0;
        mask.values()[std::size_t(v) * n + u] = 1.0;
    }
    return mul(sigmoid(logits), mask);
}

/// P_sym = (P + I + (P + I)^T) / 2.
inline Tensor symmetrize_proximity(const Tensor& p) {
    if (p.rows() != p.cols())
        throw std::invalid_argument("symmetrize_proximity: matrix is " + p.shape_str() + ", not square");
    Tensor hat = add(p, Tensor::identity(p.rows()));
    return scale(add(hat, transpose(hat)), 0.5);
}

/// The edges surviving a Top_gamma cut, ranked by symmetric proximity weight,
/// ties broken by ascending (i,j). Value-level helper shared with diagnostics.
inline std::vector<std::pair<int, int>> top_gamma_edges(const Tensor& p_sym, double gamma,
                                                        std::vector<std::pair<int, int>> edges) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw std::invalid_argument("top_gamma_edges: gamma " + std::to_string(gamma) + " outside (0,1]");
    const std::size_t keep = std::min(detail::ceil_ratio(edges.size(), gamma), edges.size());
    std::sort(edges.begin(), edges.end(), [&](const auto& lhs, const auto& rhs) {
        const double wl = p_sym.at(lhs.first, lhs.second);
        const double wr = p_sym.at(rhs.first, rhs.second);
        if (wl != wr) return wl > wr;
        return lhs < rhs;
    });
    edges.resize(keep);
    std::sort(edges.begin(), edges.end());
    return edges;
}

struct TopGammaCut {
    Tensor p_cut;
    std::vector<std::pair<int, int>> kept;
};

/// Keeps the ceil(gamma * |E|) strongest original edges of P_sym (both
/// orientations), zeroes the rest, and preserves the diagonal unconditionally.
inline TopGammaCut top_gamma_cut(const Tensor& p_sym, double gamma,
                                 const std::vector<std::pair<int, int>>& original_edges) {
    const int n = p_sym.rows();
    TopGammaCut result;
    result.kept = top_gamma_edges(p_sym, gamma, original_edges);
    Tensor mask = Tensor::identity(n);
    for (auto [u, v] : result.kept) {
        mask.values()[std::size_t(u) * n + v] = 1.0;
        mask.values()[std::size_t(v) * n + u] = 1.0;
    }
    result.p_cut = mul(p_sym, mask);
    return result;
}

/// Node importance per the score equation: s = sym_norm(P_cut + I) H 1.
/// Value-level only; scores feed the (piecewise-constant) selection.
inline std::vector<double> node_scores(const Tensor& p_cut, const Tensor& h,
                                       bool extra_self_loop = true) {
    const int n = p_cut.rows();
    if (h.rows() != n)
        throw std::invalid_argument("node_scores: H is " + h.shape_str() + " for " + std::to_string(n) +
                                    " nodes");
    std::vector<double> hat(p_cut.values());
    if (extra_self_loop)
        for (int i = 0; i < n; ++i) hat[std::size_t(i) * n + i] += 1.0;
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[i] += hat[std::size_t(i) * n + j];
    std::vector<double> h_row_sum(n, 0.0);  // H * 1
    for (int j = 0; j < n; ++j)
        for (int c = 0; c < h.cols(); ++c) h_row_sum[j] += h.at(j, c);
    std::vector<double> scores(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const double w = hat[std::size_t(i) * n + j];
            if (w != 0.0) acc += w / std::sqrt(deg[i] * deg[j]) * h_row_sum[j];
        }
        scores[i] = acc;
    }
    return scores;
}

/// Top K = max(1, ceil(n * epsilon)) node ids by descending score, ties broken
/// by ascending index.
inline std::vector<int> select_top_nodes(const std::vector<double>& scores, double epsilon, int n) {
    if (static_cast<int>(scores.size()) != n)
        throw std::invalid_argument("select_top_nodes: " + std::to_string(scores.size()) +
                                    " scores for n=" + std::to_string(n));
    const std::size_t k = std::max<std::size_t>(1, detail::ceil_ratio(n, epsilon));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
        if (scores[lhs] != scores[rhs]) return scores[lhs] > scores[rhs];
        return lhs < rhs;
    });
    order.resize(std::min<std::size_t>(k, n));
    return order;
}

/// One Co-Pooling stage: edge-view pruning, node-view selection, cross-view
/// fusion Z = [P_cut(idx,:) O || H(idx,:)] W_fuse, pooled adjacency
/// P_cut(idx, idx). Ablations: no_gpr skips propagation (O = H); no_node_view
/// keeps every node and fuses P_cut O alone.
inline PooledGraph copool_forward(const Tensor& h, const Tensor& adj, const CoPoolParams& params,
                                  const CoPoolConfig& config) {
    config.validate();
    const int n = h.rows();
    if (adj.rows() != n || adj.cols() != n)
        throw std::invalid_argument("copool_forward: adjacency " + adj.shape_str() + " for " +
                                    std::to_string(n) + " nodes");

    const auto edges = offdiag_edges(adj);
    Tensor o = config.mode == PoolMode::no_gpr
                   ? h
                   : gpr_propagate(h, adj, params.beta, config.gpr_steps);
    Tensor p = proximity_weights(o, edges, params.a, params.w_prox);
    Tensor p_sym = symmetrize_proximity(p);
    TopGammaCut cut = top_gamma_cut(p_sym, config.gamma, edges);

    PooledGraph out;
    out.proximity_full = cut.p_cut;
    out.kept_edges = std::move(cut.kept);

    if (config.mode == PoolMode::no_node_view) {
        out.indices.resize(n);
        std::iota(out.indices.begin(), out.indices.end(), 0);
        out.z = matmul(matmul(cut.p_cut, o), params.w_fuse);
        out.adj = cut.p_cut;
        return out;
    }

    const auto scores = node_scores(cut.p_cut, h, config.score_extra_self_loop);
    out.indices = select_top_nodes(scores, config.epsilon, n);

    Tensor p_rows = row_select(cut.p_cut, out.indices);  // K x n
    Tensor fused_in = hcat(matmul(p_rows, o), row_select(h, out.indices));
    out.z = matmul(fused_in, params.w_fuse);
    out.adj = transpose(row_select(transpose(p_rows), out.indices));  // K x K
    return out;
}

inline PooledGraph copool_forward(const Tensor& h, const std::vector<std::pair<int, int>>& edges,
                                  const CoPoolParams& params, const CoPoolConfig& config) {
    return copool_forward(h, dense_adjacency(h.rows(), edges), params, config);
}

}  // namespace copool
