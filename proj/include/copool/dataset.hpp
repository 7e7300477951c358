#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "copool/rng.hpp"

namespace copool {

enum class AttrKind { attributed, labeled, plain };
enum class TaskKind { classification, regression };

struct TaskSpec {
    TaskKind kind = TaskKind::classification;
    int num_classes = 0;

    static TaskSpec classification(int classes) { return {TaskKind::classification, classes}; }
    static TaskSpec regression() { return {TaskKind::regression, 0}; }
};

/// One undirected graph: unordered edge pairs (i < j, no self-loops, no
/// duplicates), row-major node attributes, and a per-graph target.
struct Graph {
    int n = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<double> attrs;  // n x attr_dim
    double target = 0.0;

    int label() const { return static_cast<int>(target); }
};

struct GraphDataset {
    std::string name;
    AttrKind attr_kind = AttrKind::plain;
    int attr_dim = 0;
    TaskSpec task;
    std::vector<Graph> graphs;

    std::size_t total_nodes() const {
        std::size_t t = 0;
        for (const auto& g : graphs) t += g.n;
        return t;
    }
};

struct FoldSplit {
    int fold_index = 0;
    std::vector<int> train_ids;
    std::vector<int> val_ids;
    std::vector<int> test_ids;
};

/// Block-diagonal collation of several graphs.
struct Batch {
    int total_nodes = 0;
    int attr_dim = 0;
    std::vector<double> attrs;                    // total_nodes x attr_dim
    std::vector<std::pair<int, int>> edges;       // global indices
    std::vector<int> membership;                  // node -> slot
    std::vector<int> slot_offsets;                // size slots+1, offsets[s]..offsets[s+1]
    std::vector<double> targets;                  // per slot

    int slots() const { return static_cast<int>(targets.size()); }
    int slot_begin(int s) const { return slot_offsets[s]; }
    int slot_size(int s) const { return slot_offsets[s + 1] - slot_offsets[s]; }
};

inline void validate_dataset(const GraphDataset& ds) {
    for (std::size_t gi = 0; gi < ds.graphs.size(); ++gi) {
        const Graph& g = ds.graphs[gi];
        if (g.n < 1) throw std::logic_error("dataset: graph " + std::to_string(gi) + " has no nodes");
        if (g.attrs.size() != static_cast<std::size_t>(g.n) * ds.attr_dim)
            throw std::logic_error("dataset: attribute matrix shape mismatch in graph " + std::to_string(gi));
        std::set<std::pair<int, int>> seen;
        for (auto [a, b] : g.edges) {
            if (a < 0 || b < 0 || a >= g.n || b >= g.n || a >= b)
                throw std::logic_error("dataset: bad edge in graph " + std::to_string(gi));
            if (!seen.insert({a, b}).second)
                throw std::logic_error("dataset: duplicate edge in graph " + std::to_string(gi));
        }
        if (ds.task.kind == TaskKind::classification) {
            if (g.label() < 0 || g.label() >= ds.task.num_classes)
                throw std::logic_error("dataset: target out of class range in graph " + std::to_string(gi));
        }
    }
}

// ---------------------------------------------------------------------------
// Transforms (datasets are immutable; each returns a new dataset)
// ---------------------------------------------------------------------------

/// Give every node of a plain dataset the all-one attribute vector.
inline GraphDataset pad_plain_attributes(const GraphDataset& ds, int dim) {
    if (ds.attr_kind != AttrKind::plain)
        throw std::invalid_argument("pad_plain_attributes: dataset '" + ds.name + "' is not plain");
    if (dim < 1) throw std::invalid_argument("pad_plain_attributes: dim must be >= 1");
    GraphDataset out = ds;
    out.attr_dim = dim;
    for (auto& g : out.graphs) g.attrs.assign(static_cast<std::size_t>(g.n) * dim, 1.0);
    return out;
}

/// Zero the attribute rows of floor(ratio * total_nodes) nodes chosen
/// uniformly across the whole dataset.
inline GraphDataset make_incomplete(const GraphDataset& ds, double ratio, std::uint64_t seed) {
    if (ds.attr_kind == AttrKind::plain)
        throw std::invalid_argument("make_incomplete: dataset '" + ds.name + "' has no attributes");
    if (ratio < 0.0 || ratio > 1.0)
        throw std::invalid_argument("make_incomplete: ratio " + std::to_string(ratio) + " outside [0,1]");

    std::vector<std::pair<int, int>> nodes;  // (graph, local node)
    nodes.reserve(ds.total_nodes());
    for (int gi = 0; gi < static_cast<int>(ds.graphs.size()); ++gi)
        for (int v = 0; v < ds.graphs[gi].n; ++v) nodes.emplace_back(gi, v);

    const std::size_t k = static_cast<std::size_t>(ratio * nodes.size());
    Rng rng(seed);
    rng.partial_shuffle(nodes, k);

    GraphDataset out = ds;
    for (std::size_t i = 0; i < k; ++i) {
        auto [gi, v] = nodes[i];
        auto& attrs = out.graphs[gi].attrs;
        std::fill_n(attrs.begin() + static_cast<std::size_t>(v) * ds.attr_dim, ds.attr_dim, 0.0);
    }
    return out;
}

enum class PerturbMode { drop, add_from_empty };

/// Per graph: drop floor(ratio*|E|) uniformly chosen edges, or rebuild the
/// edge set from scratch with floor(ratio*|E_original|) random distinct pairs.
inline GraphDataset perturb_edges(const GraphDataset& ds, PerturbMode mode, double ratio,
                                  std::uint64_t seed) {
    if (ratio < 0.0) throw std::invalid_argument("perturb_edges: negative ratio");
    if (mode == PerturbMode::drop && ratio > 1.0)
        throw std::invalid_argument("perturb_edges: drop ratio " + std::to_string(ratio) + " > 1");

    Rng rng(seed);
    GraphDataset out = ds;
    for (auto& g : out.graphs) {
        if (mode == PerturbMode::drop) {
            const std::size_t k = static_cast<std::size_t>(ratio * g.edges.size());
            rng.partial_shuffle(g.edges, k);
            g.edges.erase(g.edges.begin(), g.edges.begin() + k);
            std::sort(g.edges.begin(), g.edges.end());
        } else {
            const std::size_t cap = static_cast<std::size_t>(g.n) * (g.n - 1) / 2;
            const std::size_t want = std::min(static_cast<std::size_t>(ratio * g.edges.size()), cap);
            std::vector<std::pair<int, int>> fresh;
            if (want * 3 >= cap) {
                fresh.reserve(cap);
                for (int a = 0; a < g.n; ++a)
                    for (int b = a + 1; b < g.n; ++b) fresh.emplace_back(a, b);
                rng.partial_shuffle(fresh, want);
                fresh.resize(want);
            } else {
                std::set<std::pair<int, int>> picked;
                while (picked.size() < want) {
                    int a = static_cast<int>(rng.below(g.n));
                    int b = static_cast<int>(rng.below(g.n));
                    if (a == b) continue;
                    picked.insert({std::min(a, b), std::max(a, b)});
                }
                fresh.assign(picked.begin(), picked.end());
            }
            std::sort(fresh.begin(), fresh.end());
            g.edges = std::move(fresh);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation folds
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> take_val(std::vector<int>& pool, std::size_t count, Rng& rng) {
    rng.partial_shuffle(pool, count);
    std::vector<int> val(pool.begin(), pool.begin() + count);
    pool.erase(pool.begin(), pool.begin() + count);
    return val;
}

}  // namespace detail

/// k test folds that partition the dataset; within each fold the remaining
/// graphs are split 8:1 into train/val. Classification folds are stratified.
inline std::vector<FoldSplit> stratified_kfold(const GraphDataset& ds, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
    const int n = static_cast<int>(ds.graphs.size());

    // group ids by class (single group for regression)
    std::map<int, std::vector<int>> groups;
    if (ds.task.kind == TaskKind::classification) {
        for (int i = 0; i < n; ++i) groups[ds.graphs[i].label()].push_back(i);
        for (const auto& [cls, ids] : groups)
            if (static_cast<int>(ids.size()) < k)
                throw std::invalid_argument("stratified_kfold: class " + std::to_string(cls) + " has " +
                                            std::to_string(ids.size()) + " members, fewer than k=" +
                                            std::to_string(k));
    } else {
        auto& all = groups[0];
        all.resize(n);
        for (int i = 0; i < n; ++i) all[i] = i;
    }

    Rng deal_rng(split_seed(seed, 1));
    std::vector<std::vector<int>> test_buckets(k);
    for (auto& [cls, ids] : groups) {
        deal_rng.shuffle(ids);
        for (std::size_t i = 0; i < ids.size(); ++i) test_buckets[i % k].push_back(ids[i]);
    }

    std::vector<FoldSplit> folds(k);
    for (int f = 0; f < k; ++f) {
        FoldSplit& split = folds[f];
        split.fold_index = f;
        split.test_ids = test_buckets[f];
        std::sort(split.test_ids.begin(), split.test_ids.end());

        Rng val_rng(split_seed(seed, 2, f));
        std::set<int> in_test(split.test_ids.begin(), split.test_ids.end());
        for (auto& [cls, ids] : groups) {
            std::vector<int> rest;
            for (int id : ids)
                if (!in_test.count(id)) rest.push_back(id);
            std::sort(rest.begin(), rest.end());
            const std::size_t val_count = rest.size() / 9;  // 8:1 train/val
            auto val = detail::take_val(rest, val_count, val_rng);
            split.val_ids.insert(split.val_ids.end(), val.begin(), val.end());
            split.train_ids.insert(split.train_ids.end(), rest.begin(), rest.end());
        }
        std::sort(split.val_ids.begin(), split.val_ids.end());
        std::sort(split.train_ids.begin(), split.train_ids.end());
    }
    return folds;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

inline Batch batch_graphs(const std::vector<Graph>& graphs) {
    if (graphs.empty()) throw std::invalid_argument("batch_graphs: empty graph list");
    const int d = graphs[0].n > 0 ? static_cast<int>(graphs[0].attrs.size()) / graphs[0].n : 0;

    Batch b;
    b.attr_dim = d;
    b.slot_offsets.push_back(0);
    for (std::size_t s = 0; s < graphs.size(); ++s) {
        const Graph& g = graphs[s];
        if (static_cast<std::size_t>(g.n) * d != g.attrs.size())
            throw std::invalid_argument("batch_graphs: mixed attr_dim at slot " + std::to_string(s));
        const int base = b.total_nodes;
        for (int v = 0; v < g.n; ++v) b.membership.push_back(static_cast<int>(s));
        b.attrs.insert(b.attrs.end(), g.attrs.begin(), g.attrs.end());
        for (auto [u, v] : g.edges) b.edges.emplace_back(base + u, base + v);
        b.targets.push_back(g.target);
        b.total_nodes += g.n;
        b.slot_offsets.push_back(b.total_nodes);
    }
    return b;
}

}  // namespace copool
