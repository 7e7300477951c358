#pragma once

#include <cstdint>

#include "copool/dataset.hpp"
#include "copool/rng.hpp"

namespace copool {
namespace synth {

namespace detail {

inline Graph random_er_graph(int n, double p, Rng& rng) {
    Graph g;
    g.n = n;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (rng.real() < p) g.edges.emplace_back(a, b);
    return g;
}

inline void one_hot_types(Graph& g, int types, Rng& rng, std::vector<int>* out_types = nullptr) {
    g.attrs.assign(static_cast<std::size_t>(g.n) * types, 0.0);
    for (int v = 0; v < g.n; ++v) {
        const int t = static_cast<int>(rng.below(types));
        g.attrs[static_cast<std::size_t>(v) * types + t] = 1.0;
        if (out_types) out_types->push_back(t);
    }
}

}  // namespace detail

/// Two-class benchmark where the class is the edge density (sparse vs dense
/// Erdos-Renyi), so it is learnable from structure alone. Balanced classes.
inline GraphDataset make_classification(int n_graphs, std::uint64_t seed, bool plain = false) {
    Rng rng(split_seed(seed, 101));
    GraphDataset ds;
    ds.name = plain ? "SYNTH-CLS-PLAIN" : "SYNTH-CLS";
    ds.task = TaskSpec::classification(2);
    ds.attr_kind = plain ? AttrKind::plain : AttrKind::labeled;
    ds.attr_dim = plain ? 0 : 3;
    for (int i = 0; i < n_graphs; ++i) {
        const int cls = i % 2;
        const int n = 10 + static_cast<int>(rng.below(15));
        Graph g = detail::random_er_graph(n, cls == 0 ? 0.15 : 0.35, rng);
        if (!plain) detail::one_hot_types(g, 3, rng);
        g.target = cls;
        ds.graphs.push_back(std::move(g));
    }
    return ds;
}

/// Regression surrogate with a structure-dependent target:
/// y = 0.5 * mean_degree + 2 * (fraction of type-0 nodes).
inline GraphDataset make_regression(int n_graphs, std::uint64_t seed) {
    Rng rng(split_seed(seed, 202));
    GraphDataset ds;
    ds.name = "SYNTH-REG";
    ds.task = TaskSpec::regression();
    ds.attr_kind = AttrKind::labeled;
    ds.attr_dim = 4;
    for (int i = 0; i < n_graphs; ++i) {
        const int n = 8 + static_cast<int>(rng.below(17));
        const double p = rng.uniform(0.15, 0.5);
        Graph g = detail::random_er_graph(n, p, rng);
        std::vector<int> types;
        detail::one_hot_types(g, 4, rng, &types);
        int type0 = 0;
        for (int t : types) type0 += t == 0;
        const double mean_degree = 2.0 * g.edges.size() / g.n;
        g.target = 0.5 * mean_degree + 2.0 * type0 / g.n;
        ds.graphs.push_back(std::move(g));
    }
    return ds;
}

}  // namespace synth
}  // namespace copool
