#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "copool/dataset.hpp"
#include "copool/rng.hpp"
#include "copool/tensor.hpp"

namespace copool {

/// Symmetric degree normalization D^{-1/2} W D^{-1/2} with D = diag(row sums).
/// Recorded as a single fused tape op; the input must be square, nonnegative,
/// with strictly positive row sums (callers guarantee self-loops).
inline Tensor sym_norm(const Tensor& w) {
    if (w.rows() != w.cols())
        throw std::invalid_argument("sym_norm: matrix is " + w.shape_str() + ", not square");
    const int n = w.rows();
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = w.values()[std::size_t(i) * n + j];
            if (v < 0.0)
                throw std::invalid_argument("sym_norm: negative entry at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
            deg[i] += v;
        }
        if (deg[i] <= 0.0)
            throw std::invalid_argument("sym_norm: zero row sum at node " + std::to_string(i));
    }
    std::vector<double> inv_sqrt(n);
    for (int i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);
    std::vector<double> out(w.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out[std::size_t(i) * n + j] = w.values()[std::size_t(i) * n + j] * inv_sqrt[i] * inv_sqrt[j];

    // d(L)/d(W_pq) = G_pq/sqrt(d_p d_q) - (r_p + c_p)/(2 d_p)
    // where r_p = sum_j G_pj N_pj and c_p = sum_i G_ip N_ip (N = output).
    return detail::make_result("sym_norm", n, n, std::move(out), {w}, [deg, inv_sqrt](TensorNode& self) {
        auto& pw = *self.parents[0];
        if (!pw.requires_grad) return;
        const int n = self.rows;
        std::vector<double> row_dot(n, 0.0), col_dot(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double gn = self.grad[std::size_t(i) * n + j] * self.values[std::size_t(i) * n + j];
                row_dot[i] += gn;
                col_dot[j] += gn;
            }
        auto& g = pw.grad_buf();
        for (int p = 0; p < n; ++p) {
            const double corr = (row_dot[p] + col_dot[p]) / (2.0 * deg[p]);
            for (int q = 0; q < n; ++q)
                g[std::size_t(p) * n + q] += self.grad[std::size_t(p) * n + q] * inv_sqrt[p] * inv_sqrt[q] - corr;
        }
    });
}

/// Dense 0/1 adjacency tensor (no self-loops) from an unordered edge list.
inline Tensor dense_adjacency(int n, const std::vector<std::pair<int, int>>& edges) {
    Tensor a = Tensor::zeros(n, n);
    for (auto [u, v] : edges) {
        if (u < 0 || v < 0 || u >= n || v >= n)
            throw std::invalid_argument("dense_adjacency: edge endpoint out of range");
        a.values()[std::size_t(u) * n + v] = 1.0;
        a.values()[std::size_t(v) * n + u] = 1.0;
    }
    return a;
}

/// Graph convolution H = sym_norm(A + I) X Theta. `adj` may be a constant 0/1
/// adjacency or a weighted (possibly tape-recorded) matrix.
inline Tensor gcn_forward(const Tensor& x, const Tensor& adj, const Tensor& theta) {
    if (adj.rows() != x.rows())
        throw std::invalid_argument("gcn_forward: adjacency " + adj.shape_str() + " does not match X " +
                                    x.shape_str());
    if (x.cols() != theta.rows())
        throw std::invalid_argument("gcn_forward: X " + x.shape_str() + " does not match Theta " +
                                    theta.shape_str());
    Tensor norm = sym_norm(add(adj, Tensor::identity(adj.rows())));
    return matmul(matmul(norm, x), theta);
}

inline Tensor gcn_forward(const Tensor& x, const std::vector<std::pair<int, int>>& edges,
                          const Tensor& theta) {
    return gcn_forward(x, dense_adjacency(x.rows(), edges), theta);
}

/// Per-slot mean || max readout: slots x 2f.
inline Tensor readout(const Tensor& h, const std::vector<int>& membership) {
    if (static_cast<int>(membership.size()) != h.rows())
        throw std::invalid_argument("readout: membership size " + std::to_string(membership.size()) +
                                    " does not match " + h.shape_str());
    int slots = 0;
    for (int s : membership) slots = std::max(slots, s + 1);
    std::vector<std::vector<int>> slot_nodes(slots);
    for (int v = 0; v < h.rows(); ++v) {
        if (membership[v] < 0) throw std::invalid_argument("readout: negative slot id");
        slot_nodes[membership[v]].push_back(v);
    }
    Tensor out;
    for (int s = 0; s < slots; ++s) {
        if (slot_nodes[s].empty()) throw std::invalid_argument("readout: empty slot " + std::to_string(s));
        Tensor rows = row_select(h, slot_nodes[s]);
        Tensor r = hcat(mean_rows(rows), max_rows(rows));
        out = s == 0 ? r : vcat(out, r);
    }
    return out;
}

inline Tensor glorot_uniform(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::vector<double> v(std::size_t(rows) * cols);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return Tensor::param(rows, cols, std::move(v));
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamState {
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;  // per parameter, lazily sized
    std::vector<std::vector<double>> v;
};

/// One optimizer step over all parameters. Weight decay is applied as
/// p <- p - lr*wd*p before the Adam delta.
inline void adam_step(std::vector<Tensor>& params, AdamState& state) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size(), 0.0);
            state.v[i].assign(params[i].size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: parameter count changed");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& vals = params[i].values();
        const auto& grad = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double g = grad[j];
            if (std::isnan(g))
                throw std::runtime_error("adam_step: NaN gradient in parameter " + std::to_string(i) +
                                         " (" + params[i].shape_str() + ") at step " +
                                         std::to_string(state.step));
            if (state.weight_decay != 0.0) vals[j] -= state.lr * state.weight_decay * vals[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            vals[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

}  // namespace copool
