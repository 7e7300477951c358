#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "copool/dataset.hpp"

namespace copool {
namespace tu {

// TU text convention: {name}_A.txt holds one "i, j" 1-based directed edge per
// line, {name}_graph_indicator.txt one 1-based graph id per node line,
// {name}_graph_labels.txt one label per graph line; node labels / attributes
// files are optional. Whitespace around commas is tolerated.

namespace detail {

inline std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool read_lines(const std::string& path, std::vector<std::string>& lines) {
    std::ifstream in(path);
    if (!in) return false;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) lines.pop_back();
    return true;
}

inline double parse_real(const std::string& token, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(token, &pos);
        while (pos < token.size() && (token[pos] == ' ' || token[pos] == '\t')) ++pos;
        if (pos != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("parse_tu_dataset: bad number '" + token + "' in " + context);
    }
}

inline long parse_int(const std::string& token, const std::string& context) {
    const double v = parse_real(token, context);
    const long n = static_cast<long>(v);
    if (static_cast<double>(n) != v)
        throw std::invalid_argument("parse_tu_dataset: expected integer '" + token + "' in " + context);
    return n;
}

}  // namespace detail

inline GraphDataset parse_tu_dataset(const std::string& root, const std::string& name,
                                     TaskKind task = TaskKind::classification) {
    const std::string base = root + "/" + name + "/" + name;

    std::vector<std::string> indicator_lines, label_lines, edge_lines;
    if (!detail::read_lines(base + "_graph_indicator.txt", indicator_lines))
        throw std::runtime_error("parse_tu_dataset: missing required file " + base + "_graph_indicator.txt");
    if (!detail::read_lines(base + "_graph_labels.txt", label_lines))
        throw std::runtime_error("parse_tu_dataset: missing required file " + base + "_graph_labels.txt");
    if (!detail::read_lines(base + "_A.txt", edge_lines))
        throw std::runtime_error("parse_tu_dataset: missing required file " + base + "_A.txt");

    const int total_nodes = static_cast<int>(indicator_lines.size());
    const int n_graphs = static_cast<int>(label_lines.size());

    // node -> (graph, local index), in order of appearance
    std::vector<int> node_graph(total_nodes), node_local(total_nodes);
    std::vector<int> graph_size(n_graphs, 0);
    for (int v = 0; v < total_nodes; ++v) {
        const long gid = detail::parse_int(indicator_lines[v], "graph_indicator");
        if (gid < 1 || gid > n_graphs)
            throw std::runtime_error("parse_tu_dataset: graph indicator " + std::to_string(gid) +
                                     " outside [1," + std::to_string(n_graphs) + "]");
        node_graph[v] = static_cast<int>(gid) - 1;
        node_local[v] = graph_size[node_graph[v]]++;
    }

    GraphDataset ds;
    ds.name = name;
    ds.task = task == TaskKind::classification ? TaskSpec::classification(0) : TaskSpec::regression();
    ds.graphs.resize(n_graphs);
    for (int g = 0; g < n_graphs; ++g) {
        if (graph_size[g] == 0)
            throw std::runtime_error("parse_tu_dataset: graph " + std::to_string(g + 1) + " has no nodes");
        ds.graphs[g].n = graph_size[g];
    }

    // edges: dedupe to unordered pairs, drop self-loops
    std::vector<std::set<std::pair<int, int>>> edge_sets(n_graphs);
    for (const auto& line : edge_lines) {
        const auto parts = detail::split_commas(line);
        if (parts.size() != 2)
            throw std::runtime_error("parse_tu_dataset: malformed edge line '" + line + "'");
        const long a = detail::parse_int(parts[0], "_A.txt");
        const long b = detail::parse_int(parts[1], "_A.txt");
        if (a < 1 || a > total_nodes || b < 1 || b > total_nodes)
            throw std::runtime_error("parse_tu_dataset: node id " + std::to_string(a > total_nodes || a < 1 ? a : b) +
                                     " outside [1," + std::to_string(total_nodes) + "]");
        const int u = static_cast<int>(a) - 1, v = static_cast<int>(b) - 1;
        if (node_graph[u] != node_graph[v])
            throw std::runtime_error("parse_tu_dataset: edge " + line +
                                     " references a node outside its graph's indicator range");
        if (u == v) continue;
        const int lu = node_local[u], lv = node_local[v];
        edge_sets[node_graph[u]].insert({std::min(lu, lv), std::max(lu, lv)});
    }
    for (int g = 0; g < n_graphs; ++g)
        ds.graphs[g].edges.assign(edge_sets[g].begin(), edge_sets[g].end());

    // targets
    if (task == TaskKind::classification) {
        std::vector<long> raw(n_graphs);
        std::set<long> distinct;
        for (int g = 0; g < n_graphs; ++g) {
            raw[g] = detail::parse_int(label_lines[g], "graph_labels");
            distinct.insert(raw[g]);
        }
        std::map<long, int> remap;  // sorted original labels -> 0..C-1
        for (long v : distinct) remap.emplace(v, static_cast<int>(remap.size()));
        for (int g = 0; g < n_graphs; ++g) ds.graphs[g].target = remap.at(raw[g]);
        ds.task.num_classes = static_cast<int>(distinct.size());
    } else {
        for (int g = 0; g < n_graphs; ++g)
            ds.graphs[g].target = detail::parse_real(label_lines[g], "graph_labels");
    }

    // attributes: real-valued file wins, else one-hot node labels, else plain
    std::vector<std::string> attr_lines, node_label_lines;
    const bool has_attrs = detail::read_lines(base + "_node_attributes.txt", attr_lines);
    const bool has_labels = detail::read_lines(base + "_node_labels.txt", node_label_lines);

    if (has_attrs) {
        if (static_cast<int>(attr_lines.size()) != total_nodes)
            throw std::runtime_error("parse_tu_dataset: node_attributes has " +
                                     std::to_string(attr_lines.size()) + " rows for " +
                                     std::to_string(total_nodes) + " nodes");
        ds.attr_kind = AttrKind::attributed;
        ds.attr_dim = static_cast<int>(detail::split_commas(attr_lines[0]).size());
        for (int g = 0; g < n_graphs; ++g)
            ds.graphs[g].attrs.resize(static_cast<std::size_t>(ds.graphs[g].n) * ds.attr_dim);
        for (int v = 0; v < total_nodes; ++v) {
            const auto parts = detail::split_commas(attr_lines[v]);
            if (static_cast<int>(parts.size()) != ds.attr_dim)
                throw std::runtime_error("parse_tu_dataset: ragged attribute rows (row " +
                                         std::to_string(v + 1) + " has " + std::to_string(parts.size()) +
                                         " values, expected " + std::to_string(ds.attr_dim) + ")");
            auto& attrs = ds.graphs[node_graph[v]].attrs;
            for (int j = 0; j < ds.attr_dim; ++j)
                attrs[static_cast<std::size_t>(node_local[v]) * ds.attr_dim + j] =
                    detail::parse_real(parts[j], "node_attributes");
        }
    } else if (has_labels) {
        if (static_cast<int>(node_label_lines.size()) != total_nodes)
            throw std::runtime_error("parse_tu_dataset: node_labels has " +
                                     std::to_string(node_label_lines.size()) + " rows for " +
                                     std::to_string(total_nodes) + " nodes");
        std::vector<long> raw(total_nodes);
        std::set<long> alphabet;
        for (int v = 0; v < total_nodes; ++v) {
            raw[v] = detail::parse_int(node_label_lines[v], "node_labels");
            alphabet.insert(raw[v]);
        }
        std::map<long, int> remap;
        for (long v : alphabet) remap.emplace(v, static_cast<int>(remap.size()));
        ds.attr_kind = AttrKind::labeled;
        ds.attr_dim = static_cast<int>(alphabet.size());
        for (int g = 0; g < n_graphs; ++g)
            ds.graphs[g].attrs.assign(static_cast<std::size_t>(ds.graphs[g].n) * ds.attr_dim, 0.0);
        for (int v = 0; v < total_nodes; ++v)
            ds.graphs[node_graph[v]]
                .attrs[static_cast<std::size_t>(node_local[v]) * ds.attr_dim + remap.at(raw[v])] = 1.0;
    } else {
        ds.attr_kind = AttrKind::plain;
        ds.attr_dim = 0;
    }

    validate_dataset(ds);
    return ds;
}

/// Writes the dataset back out in the TU layout (inverse of parse for
/// datasets in parsed form: remapped class ids, one-hot label alphabet).
inline void serialize_tu_dataset(const GraphDataset& ds, const std::string& root) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(root) / ds.name;
    fs::create_directories(dir);
    const std::string base = (dir / ds.name).string();

    char buf[64];
    std::ofstream a_file(base + "_A.txt");
    std::ofstream ind_file(base + "_graph_indicator.txt");
    std::ofstream lab_file(base + "_graph_labels.txt");

    int offset = 0;
    for (std::size_t gi = 0; gi < ds.graphs.size(); ++gi) {
        const Graph& g = ds.graphs[gi];
        std::vector<std::pair<int, int>> directed;
        directed.reserve(g.edges.size() * 2);
        for (auto [u, v] : g.edges) {
            directed.emplace_back(offset + u + 1, offset + v + 1);
            directed.emplace_back(offset + v + 1, offset + u + 1);
        }
        std::sort(directed.begin(), directed.end());
        for (auto [u, v] : directed) a_file << u << ", " << v << "\n";
        for (int v = 0; v < g.n; ++v) ind_file << gi + 1 << "\n";
        if (ds.task.kind == TaskKind::classification) {
            lab_file << g.label() << "\n";
        } else {
            std::snprintf(buf, sizeof buf, "%.17g", g.target);
            lab_file << buf << "\n";
        }
        offset += g.n;
    }

    if (ds.attr_kind == AttrKind::attributed) {
        std::ofstream attr_file(base + "_node_attributes.txt");
        for (const auto& g : ds.graphs)
            for (int v = 0; v < g.n; ++v) {
                for (int j = 0; j < ds.attr_dim; ++j) {
                    std::snprintf(buf, sizeof buf, "%.17g", g.attrs[std::size_t(v) * ds.attr_dim + j]);
                    attr_file << (j ? ", " : "") << buf;
                }
                attr_file << "\n";
            }
    } else if (ds.attr_kind == AttrKind::labeled) {
        std::ofstream nl_file(base + "_node_labels.txt");
        for (const auto& g : ds.graphs)
            for (int v = 0; v < g.n; ++v) {
                int label = 0;
                for (int j = 0; j < ds.attr_dim; ++j)
                    if (g.attrs[std::size_t(v) * ds.attr_dim + j] == 1.0) label = j;
                nl_file << label << "\n";
            }
    }
}

}  // namespace tu

using tu::parse_tu_dataset;
using tu::serialize_tu_dataset;

}  // namespace copool
