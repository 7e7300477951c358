#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "copool/rng.hpp"

namespace copool {

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Thread-local switch: when false, forward ops do not record tape nodes.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

/// RAII guard that disables tape recording on the current thread (eval mode).
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first needed
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward;  // reads this->grad, accumulates into parents

    std::size_t size() const { return values.size(); }
    std::vector<double>& grad_buf() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
        return grad;
    }
};

/// Dense 2-D double matrix participating in reverse-mode differentiation.
/// Value-semantics handle over a shared node; copies alias the same storage.
class Tensor {
public:
    Tensor() : node_(std::make_shared<TensorNode>()) {}

    Tensor(int rows, int cols, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<TensorNode>()) {
        if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows) * cols)
            throw std::invalid_argument("Tensor: values length " + std::to_string(values.size()) +
                                        " does not match shape " + std::to_string(rows) + "x" +
                                        std::to_string(cols));
        node_->rows = rows;
        node_->cols = cols;
        node_->values = std::move(values);
        node_->requires_grad = requires_grad;
        if (requires_grad) node_->grad.assign(node_->values.size(), 0.0);
    }

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols, std::vector<double>(std::size_t(rows) * cols, 0.0)); }
    static Tensor ones(int rows, int cols) { return Tensor(rows, cols, std::vector<double>(std::size_t(rows) * cols, 1.0)); }
    static Tensor full(int rows, int cols, double v) { return Tensor(rows, cols, std::vector<double>(std::size_t(rows) * cols, v)); }

    static Tensor identity(int n) {
        Tensor t = zeros(n, n);
        for (int i = 0; i < n; ++i) t.node_->values[std::size_t(i) * n + i] = 1.0;
        return t;
    }

    static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
        const int r = static_cast<int>(rows.size());
        const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
        std::vector<double> v;
        v.reserve(std::size_t(r) * c);
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != c)
                throw std::invalid_argument("Tensor::from_rows: ragged rows");
            v.insert(v.end(), row.begin(), row.end());
        }
        return Tensor(r, c, std::move(v));
    }

    /// Learnable leaf (requires_grad = true).
    static Tensor param(int rows, int cols, std::vector<double> values) {
        return Tensor(rows, cols, std::move(values), true);
    }

    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    std::size_t size() const { return node_->values.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }

    double at(int i, int j) const { return node_->values[std::size_t(i) * node_->cols + j]; }
    double item() const {
        if (rows() != 1 || cols() != 1)
            throw std::invalid_argument("Tensor::item: tensor is " + shape_str() + ", not 1x1");
        return node_->values[0];
    }

    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& values() { return node_->values; }

    const std::vector<double>& grad() const {
        if (node_->grad.empty())
            throw std::logic_error("Tensor::grad: gradient absent");
        return node_->grad;
    }
    bool has_grad() const { return !node_->grad.empty(); }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->values.size(), 0.0);
    }

    std::string shape_str() const { return std::to_string(rows()) + "x" + std::to_string(cols()); }

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline Tensor make_result(const char* op, int rows, int cols, std::vector<double> values,
                          std::vector<Tensor> parents,
                          std::function<void(TensorNode&)> backward) {
    Tensor out(rows, cols, std::move(values));
    bool needs = false;
    if (grad_mode())
        for (const auto& p : parents) needs |= p.requires_grad();
    if (needs) {
        auto n = out.node();
        n->requires_grad = true;
        n->is_leaf = false;
        n->op = op;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return out;
}

inline ConstMatMap map_of(const TensorNode& n) { return ConstMatMap(n.values.data(), n.rows, n.cols); }
inline MatMap grad_map(TensorNode& n) {
    auto& g = n.grad_buf();
    return MatMap(g.data(), n.rows, n.cols);
}

[[noreturn]] inline void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(op + ": shape mismatch (" + a.shape_str() + " vs " + b.shape_str() + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward operations. Each records a tape node when any input requires grad.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(std::size_t(m) * n);
    {
        detail::ConstMatMap ma(a.values().data(), m, k), mb(b.values().data(), k, n);
        detail::MatMap mo(out.data(), m, n);
        mo.noalias() = ma * mb;
    }
    return detail::make_result("matmul", m, n, std::move(out), {a, b}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        detail::ConstMatMap go(self.grad.data(), self.rows, self.cols);
        if (pa.requires_grad)
            detail::grad_map(pa).noalias() += go * detail::map_of(pb).transpose();
        if (pb.requires_grad)
            detail::grad_map(pb).noalias() += detail::map_of(pa).transpose() * go;
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_error("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return detail::make_result("add", a.rows(), a.cols(), std::move(out), {a, b}, [](TensorNode& self) {
        for (int p = 0; p < 2; ++p) {
            auto& par = *self.parents[p];
            if (!par.requires_grad) continue;
            auto& g = par.grad_buf();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.values()[i];
    return detail::make_result("scale", a.rows(), a.cols(), std::move(out), {a}, [c](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
    });
}

/// Elementwise product. Either operand may be 1x1, in which case it scales
/// the other (the only broadcast in the op set).
inline Tensor mul(const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.rows() == 1 && a.cols() == 1;
    const bool b_scalar = b.rows() == 1 && b.cols() == 1;
    if (!a_scalar && !b_scalar && (a.rows() != b.rows() || a.cols() != b.cols()))
        detail::shape_error("mul", a, b);

    const Tensor& big = b_scalar && !a_scalar ? a : (a_scalar && !b_scalar ? b : a);
    std::vector<double> out(big.size());
    if (a_scalar != b_scalar) {
        const double s = (a_scalar ? a : b).values()[0];
        const auto& v = big.values();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * v[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    }
    return detail::make_result("mul", big.rows(), big.cols(), std::move(out), {a, b}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        auto accumulate = [&](TensorNode& target, TensorNode& other) {
            if (!target.requires_grad) return;
            const bool target_scalar = target.values.size() == 1 && other.values.size() != 1;
            auto& g = target.grad_buf();
            if (target_scalar) {
                double s = 0.0;
                for (std::size_t i = 0; i < self.grad.size(); ++i) s += self.grad[i] * other.values[i];
                g[0] += s;
            } else if (other.values.size() == 1 && target.values.size() != 1) {
                const double s = other.values[0];
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other.values[i];
            }
        };
        accumulate(pa, pb);
        accumulate(pb, pa);
    });
}

inline Tensor transpose(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[std::size_t(j) * r + i] = a.values()[std::size_t(i) * c + j];
    return detail::make_result("transpose", c, r, std::move(out), {a}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        for (int i = 0; i < self.rows; ++i)
            for (int j = 0; j < self.cols; ++j)
                g[std::size_t(j) * self.rows + i] += self.grad[std::size_t(i) * self.cols + j];
    });
}

/// Column-wise concatenation [a ‖ b].
inline Tensor hcat(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) detail::shape_error("hcat", a, b);
    const int r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(std::size_t(r) * (ca + cb));
    for (int i = 0; i < r; ++i) {
        std::copy_n(a.values().begin() + std::size_t(i) * ca, ca, out.begin() + std::size_t(i) * (ca + cb));
        std::copy_n(b.values().begin() + std::size_t(i) * cb, cb, out.begin() + std::size_t(i) * (ca + cb) + ca);
    }
    return detail::make_result("hcat", r, ca + cb, std::move(out), {a, b}, [ca, cb](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (int i = 0; i < self.rows; ++i) {
            const std::size_t base = std::size_t(i) * (ca + cb);
            if (pa.requires_grad) {
                auto& g = pa.grad_buf();
                for (int j = 0; j < ca; ++j) g[std::size_t(i) * ca + j] += self.grad[base + j];
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buf();
                for (int j = 0; j < cb; ++j) g[std::size_t(i) * cb + j] += self.grad[base + ca + j];
            }
        }
    });
}

/// Gather rows by index list; duplicate indices are allowed and their
/// gradients accumulate.
inline Tensor row_select(const Tensor& a, const std::vector<int>& indices) {
    const int c = a.cols();
    std::vector<double> out(indices.size() * c);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const int i = indices[k];
        if (i < 0 || i >= a.rows())
            throw std::invalid_argument("row_select: index " + std::to_string(i) +
                                        " out of range for " + a.shape_str());
        std::copy_n(a.values().begin() + std::size_t(i) * c, c, out.begin() + k * c);
    }
    return detail::make_result("row_select", static_cast<int>(indices.size()), c, std::move(out), {a},
                               [indices](TensorNode& self) {
                                   auto& pa = *self.parents[0];
                                   if (!pa.requires_grad) return;
                                   auto& g = pa.grad_buf();
                                   const int c = self.cols;
                                   for (std::size_t k = 0; k < indices.size(); ++k)
                                       for (int j = 0; j < c; ++j)
                                           g[std::size_t(indices[k]) * c + j] += self.grad[k * c + j];
                               });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.values()[i];
        if (x >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            out[i] = e / (1.0 + e);
        }
    }
    return detail::make_result("sigmoid", a.rows(), a.cols(), std::move(out), {a}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = self.values[i];
            g[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    return detail::make_result("relu", a.rows(), a.cols(), std::move(out), {a}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (pa.values[i] > 0.0) g[i] += self.grad[i];  // subgradient at 0 is 0
    });
}

/// Per-row sum, n x 1.
inline Tensor row_sum(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(r, 0.0);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[i] += a.values()[std::size_t(i) * c + j];
    return detail::make_result("row_sum", r, 1, std::move(out), {a}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        for (int i = 0; i < pa.rows; ++i)
            for (int j = 0; j < pa.cols; ++j) g[std::size_t(i) * pa.cols + j] += self.grad[i];
    });
}

/// Per-column sum, 1 x m.
inline Tensor col_sum(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[j] += a.values()[std::size_t(i) * c + j];
    return detail::make_result("col_sum", 1, c, std::move(out), {a}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        for (int i = 0; i < pa.rows; ++i)
            for (int j = 0; j < pa.cols; ++j) g[std::size_t(i) * pa.cols + j] += self.grad[j];
    });
}

/// Column-wise mean over rows, 1 x m.
inline Tensor mean_rows(const Tensor& a) {
    if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[j] += a.values()[std::size_t(i) * c + j];
    for (int j = 0; j < c; ++j) out[j] /= r;
    return detail::make_result("mean_rows", 1, c, std::move(out), {a}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        const double inv = 1.0 / pa.rows;
        for (int i = 0; i < pa.rows; ++i)
            for (int j = 0; j < pa.cols; ++j) g[std::size_t(i) * pa.cols + j] += inv * self.grad[j];
    });
}

/// Column-wise max over rows, 1 x m. Gradient routes to the first maximal row.
inline Tensor max_rows(const Tensor& a) {
    if (a.rows() == 0) throw std::invalid_argument("max_rows: empty input");
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(c);
    std::vector<int> arg(c, 0);
    for (int j = 0; j < c; ++j) {
        double best = a.values()[j];
        int bi = 0;
        for (int i = 1; i < r; ++i) {
            const double v = a.values()[std::size_t(i) * c + j];
            if (v > best) {
                best = v;
                bi = i;
            }
        }
        out[j] = best;
        arg[j] = bi;
    }
    return detail::make_result("max_rows", 1, c, std::move(out), {a}, [arg](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        for (int j = 0; j < pa.cols; ++j) g[std::size_t(arg[j]) * pa.cols + j] += self.grad[j];
    });
}

/// Inverted-scaling dropout: kept entries are multiplied by 1/(1-rate).
/// The mask is drawn from the caller's seeded RNG.
inline Tensor dropout(const Tensor& a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0,1)");
    const double inv = 1.0 / (1.0 - rate);
    std::vector<double> mask(a.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.real() >= rate ? inv : 0.0;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * mask[i];
    return detail::make_result("dropout", a.rows(), a.cols(), std::move(out), {a},
                               [mask](TensorNode& self) {
                                   auto& pa = *self.parents[0];
                                   if (!pa.requires_grad) return;
                                   auto& g = pa.grad_buf();
                                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                               });
}

/// Row-wise log-softmax.
inline Tensor log_softmax(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    if (c == 0) throw std::invalid_argument("log_softmax: zero columns");
    std::vector<double> out(a.size());
    for (int i = 0; i < r; ++i) {
        const double* row = a.values().data() + std::size_t(i) * c;
        double m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(row[j] - m);
        const double lse = m + std::log(sum);
        for (int j = 0; j < c; ++j) out[std::size_t(i) * c + j] = row[j] - lse;
    }
    return detail::make_result("log_softmax", r, c, std::move(out), {a}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        const int c = self.cols;
        for (int i = 0; i < self.rows; ++i) {
            double gsum = 0.0;
            for (int j = 0; j < c; ++j) gsum += self.grad[std::size_t(i) * c + j];
            for (int j = 0; j < c; ++j) {
                const double p = std::exp(self.values[std::size_t(i) * c + j]);
                g[std::size_t(i) * c + j] += self.grad[std::size_t(i) * c + j] - p * gsum;
            }
        }
    });
}

/// Mean negative log-likelihood of per-row log-probabilities at the target
/// class indices: 1 x 1.
inline Tensor nll_loss(const Tensor& logp, const std::vector<int>& targets) {
    const int r = logp.rows(), c = logp.cols();
    if (static_cast<int>(targets.size()) != r)
        throw std::invalid_argument("nll_loss: " + std::to_string(targets.size()) + " targets for " +
                                    std::to_string(r) + " rows");
    double total = 0.0;
    for (int i = 0; i < r; ++i) {
        if (targets[i] < 0 || targets[i] >= c)
            throw std::invalid_argument("nll_loss: target " + std::to_string(targets[i]) +
                                        " out of class range [0," + std::to_string(c) + ")");
        total -= logp.values()[std::size_t(i) * c + targets[i]];
    }
    return detail::make_result("nll_loss", 1, 1, {total / r}, {logp}, [targets](TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& g = pa.grad_buf();
        const double gi = self.grad[0] / static_cast<double>(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) g[i * pa.cols + targets[i]] -= gi;
    });
}

/// Mean absolute error between same-shape tensors: 1 x 1.
/// The subgradient of |x| at 0 is taken as 0.
inline Tensor abs_error_mean(const Tensor& pred, const Tensor& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        detail::shape_error("abs_error_mean", pred, target);
    if (pred.size() == 0) throw std::invalid_argument("abs_error_mean: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred.values()[i] - target.values()[i]);
    return detail::make_result("abs_error_mean", 1, 1, {total / pred.size()}, {pred, target},
                               [](TensorNode& self) {
                                   auto& pp = *self.parents[0];
                                   auto& pt = *self.parents[1];
                                   const double gi = self.grad[0] / static_cast<double>(pp.values.size());
                                   for (std::size_t i = 0; i < pp.values.size(); ++i) {
                                       const double d = pp.values[i] - pt.values[i];
                                       const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                                       if (pp.requires_grad) pp.grad_buf()[i] += gi * s;
                                       if (pt.requires_grad) pt.grad_buf()[i] -= gi * s;
                                   }
                               });
}

// Composites over the op set.

inline Tensor sum_all(const Tensor& a) { return col_sum(row_sum(a)); }

/// Row-wise stack [a; b] built from transpose + hcat.
inline Tensor vcat(const Tensor& a, const Tensor& b) {
    return transpose(hcat(transpose(a), transpose(b)));
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

/// Runs one reverse pass from a scalar loss. Populates `grad` of every
/// reachable requires_grad leaf (unreachable leaves keep their zeros) and
/// consumes the tape: interior nodes drop their parent links and rules.
inline void backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
        throw std::invalid_argument("backward: loss must be 1x1, got " + loss.shape_str());

    // Post-order DFS so that `order` is topological (inputs before outputs).
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buf()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward) (*it)->backward(**it);

    for (TensorNode* n : order) {
        if (!n->is_leaf) {
            n->parents.clear();
            n->backward = nullptr;
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

/// Central-difference check of d(loss)/d(leaf) for every entry of every leaf.
/// Returns the max of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// The builder must rebuild the loss from the leaves' current values and be
/// deterministic; this is verified by comparing two forward evaluations.
inline double grad_check(const std::function<Tensor()>& build, const std::vector<Tensor>& leaves,
                         double step) {
    if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
    for (const auto& leaf : leaves)
        if (!leaf.requires_grad())
            throw std::invalid_argument("grad_check: leaf without requires_grad");

    const double f1 = build().item();
    const double f2 = build().item();
    if (f1 != f2) throw std::runtime_error("grad_check: builder is non-deterministic");

    for (const auto& leaf : leaves) const_cast<Tensor&>(leaf).zero_grad();
    backward(build());
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = const_cast<Tensor&>(leaves[li]).values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + step;
            const double fp = build().item();
            vals[i] = orig - step;
            const double fm = build().item();
            vals[i] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[li][i];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace copool
