#include <catch2/catch_amalgamated.hpp>

#include "copool/pool.hpp"

#include <cmath>
#include <set>

using namespace copool;
using Catch::Approx;

namespace {

using Mat = std::vector<double>;
using EdgeList = std::vector<std::pair<int, int>>;

// Independent dense oracles, plain loops only.

Mat oracle_matmul(const Mat& a, const Mat& b, int m, int k, int n) {
    Mat out(std::size_t(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk)
            for (int j = 0; j < n; ++j)
                out[std::size_t(i) * n + j] += a[std::size_t(i) * k + kk] * b[std::size_t(kk) * n + j];
    return out;
}

Mat oracle_sym_norm(const Mat& w, int n) {
    Mat deg(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[i] += w[std::size_t(i) * n + j];
    Mat out(w.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out[std::size_t(i) * n + j] = w[std::size_t(i) * n + j] / std::sqrt(deg[i] * deg[j]);
    return out;
}

Mat oracle_gpr(const Mat& h, const EdgeList& edges, const Mat& beta, int steps, int n, int f) {
    Mat a_hat(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) a_hat[std::size_t(i) * n + i] = 1.0;
    for (auto [u, v] : edges) a_hat[std::size_t(u) * n + v] = a_hat[std::size_t(v) * n + u] = 1.0;
    Mat norm = oracle_sym_norm(a_hat, n);
    Mat acc(h.size(), 0.0);
    Mat ht = h;
    for (int t = 0; t <= steps; ++t) {
        if (t > 0) ht = oracle_matmul(norm, ht, n, n, f);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += beta[t] * ht[i];
    }
    return acc;
}

double sigma(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

Mat oracle_proximity(const Mat& o, const EdgeList& edges, const Mat& a, const Mat& w_prox, int n,
                     int f, int fp) {
    Mat t = oracle_matmul(o, w_prox, n, f, fp);
    Mat p(std::size_t(n) * n, 0.0);
    for (auto [u, v] : edges)
        for (auto [i, j] : {std::pair{u, v}, std::pair{v, u}}) {
            double logit = 0.0;
            for (int c = 0; c < fp; ++c)
                logit += t[std::size_t(i) * fp + c] * a[c] + t[std::size_t(j) * fp + c] * a[fp + c];
            p[std::size_t(i) * n + j] = sigma(logit);
        }
    return p;
}

Mat oracle_symmetrize(const Mat& p, int n) {
    Mat out(p.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double pij = p[std::size_t(i) * n + j] + (i == j ? 1.0 : 0.0);
            const double pji = p[std::size_t(j) * n + i] + (i == j ? 1.0 : 0.0);
            out[std::size_t(i) * n + j] = (pij + pji) / 2.0;
        }
    return out;
}

// exhaustive-sort oracle for the Top_gamma survivor set
EdgeList oracle_top_gamma(const Mat& p_sym, double gamma, EdgeList edges, int n) {
    const std::size_t keep =
        std::min(edges.size(), static_cast<std::size_t>(std::ceil(gamma * edges.size() - 1e-9)));
    std::sort(edges.begin(), edges.end(), [&](auto lhs, auto rhs) {
        const double wl = p_sym[std::size_t(lhs.first) * n + lhs.second];
        const double wr = p_sym[std::size_t(rhs.first) * n + rhs.second];
        if (wl != wr) return wl > wr;
        return lhs < rhs;
    });
    edges.resize(keep);
    std::sort(edges.begin(), edges.end());
    return edges;
}

Mat oracle_cut_matrix(const Mat& p_sym, const EdgeList& kept, int n) {
    Mat out(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) out[std::size_t(i) * n + i] = p_sym[std::size_t(i) * n + i];
    for (auto [u, v] : kept) {
        out[std::size_t(u) * n + v] = p_sym[std::size_t(u) * n + v];
        out[std::size_t(v) * n + u] = p_sym[std::size_t(v) * n + u];
    }
    return out;
}

std::vector<double> oracle_scores(const Mat& p_cut, const Mat& h, int n, int f, bool extra_loop) {
    Mat hat = p_cut;
    if (extra_loop)
        for (int i = 0; i < n; ++i) hat[std::size_t(i) * n + i] += 1.0;
    Mat norm = oracle_sym_norm(hat, n);
    std::vector<double> s(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int c = 0; c < f; ++c) s[i] += norm[std::size_t(i) * n + j] * h[std::size_t(j) * f + c];
    return s;
}

std::vector<int> oracle_top_nodes(const std::vector<double>& s, double epsilon, int n) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int l, int r) {
        if (s[l] != s[r]) return s[l] > s[r];
        return l < r;
    });
    const std::size_t k =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(epsilon * n - 1e-9)));
    order.resize(std::min<std::size_t>(k, n));
    return order;
}

EdgeList random_edges(int n, double p, Rng& rng) {
    EdgeList edges;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (rng.real() < p) edges.emplace_back(a, b);
    return edges;
}

Tensor random_tensor(int r, int c, Rng& rng, bool grad = false) {
    std::vector<double> v(std::size_t(r) * c);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor(r, c, std::move(v), grad);
}

CoPoolParams identity_fuse_params(int f, const CoPoolConfig& config, Rng& rng) {
    CoPoolParams p = make_copool_params(f, f, 2 * f, config, rng);
    p.w_fuse = Tensor::identity(2 * f);
    return p;
}

}  // namespace

TEST_CASE("gpr_propagate") {
    SECTION("zero steps is the identity") {
        Rng rng(41);
        Tensor h = random_tensor(4, 3, rng);
        Tensor beta = Tensor::ones(1, 1);
        Tensor out = gpr_propagate(h, dense_adjacency(4, {{0, 1}, {2, 3}}), beta, 0);
        REQUIRE(out.values() == h.values());
    }
    SECTION("beta concentrated on t=0 returns H for any T") {
        Rng rng(42);
        Tensor h = random_tensor(4, 2, rng);
        Tensor beta(4, 1, {1.0, 0.0, 0.0, 0.0});
        Tensor out = gpr_propagate(h, dense_adjacency(4, {{0, 1}, {1, 2}}), beta, 3);
        for (std::size_t i = 0; i < h.size(); ++i)
            REQUIRE(out.values()[i] == Approx(h.values()[i]).margin(1e-14));
    }
    SECTION("T=2 matches the explicit three-term oracle") {
        Rng rng(43);
        const int n = 4, f = 3;
        EdgeList edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}};
        Tensor h = random_tensor(n, f, rng);
        Mat beta = {0.5, 0.3, 0.2};
        Tensor out = gpr_propagate(h, dense_adjacency(n, edges), Tensor(3, 1, beta), 2);
        Mat expect = oracle_gpr(h.values(), edges, beta, 2, n, f);
        for (std::size_t i = 0; i < expect.size(); ++i)
            REQUIRE(out.values()[i] == Approx(expect[i]).margin(1e-12));
    }
    SECTION("beta length must be T+1") {
        REQUIRE_THROWS_AS(gpr_propagate(Tensor::zeros(2, 1), Tensor::zeros(2, 2), Tensor::ones(2, 1), 3),
                          std::invalid_argument);
    }
    SECTION("differentiable in H and beta") {
        Rng rng(44);
        const int n = 5;
        EdgeList edges = random_edges(n, 0.5, rng);
        Tensor h = random_tensor(n, 2, rng, true);
        Tensor beta = Tensor::param(3, 1, {0.4, 0.4, 0.2});
        Tensor adj = dense_adjacency(n, edges);
        auto build = [&] { return sum_all(sigmoid(gpr_propagate(h, adj, beta, 2))); };
        REQUIRE(grad_check(build, {h, beta}, 1e-4) < 1e-4);
    }
}

TEST_CASE("proximity_weights") {
    Rng rng(51);
    SECTION("edgeless graph gives the zero matrix") {
        Tensor o = random_tensor(3, 2, rng);
        Tensor p = proximity_weights(o, {}, Tensor::zeros(4, 1), random_tensor(2, 2, rng));
        for (double v : p.values()) REQUIRE(v == 0.0);
    }
    SECTION("a = 0 puts 0.5 on every edge orientation") {
        Tensor o = random_tensor(4, 3, rng);
        EdgeList edges = {{0, 1}, {2, 3}};
        Tensor p = proximity_weights(o, edges, Tensor::zeros(4, 1), random_tensor(3, 2, rng));
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const bool on_edge = (i == 0 && j == 1) || (i == 1 && j == 0) || (i == 2 && j == 3) ||
                                     (i == 3 && j == 2);
                REQUIRE(p.at(i, j) == (on_edge ? 0.5 : 0.0));
            }
    }
    SECTION("support is exactly the directed expansion of the edge set") {
        const int n = 7;
        EdgeList edges = random_edges(n, 0.4, rng);
        Tensor o = random_tensor(n, 3, rng);
        Tensor p = proximity_weights(o, edges, random_tensor(6, 1, rng), random_tensor(3, 3, rng));
        std::set<std::pair<int, int>> directed;
        for (auto [u, v] : edges) {
            directed.insert({u, v});
            directed.insert({v, u});
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (directed.count({i, j}))
                    REQUIRE(p.at(i, j) > 0.0);
                else
                    REQUIRE(p.at(i, j) == 0.0);
            }
    }
    SECTION("matches the per-edge oracle") {
        const int n = 5, f = 3, fp = 2;
        EdgeList edges = random_edges(n, 0.6, rng);
        Tensor o = random_tensor(n, f, rng);
        Tensor a = random_tensor(2 * fp, 1, rng);
        Tensor w = random_tensor(f, fp, rng);
        Tensor p = proximity_weights(o, edges, a, w);
        Mat expect = oracle_proximity(o.values(), edges, a.values(), w.values(), n, f, fp);
        for (std::size_t i = 0; i < expect.size(); ++i)
            REQUIRE(p.values()[i] == Approx(expect[i]).margin(1e-12));
    }
}

TEST_CASE("symmetrize_proximity") {
    SECTION("zero matrix becomes the identity") {
        Tensor out = symmetrize_proximity(Tensor::zeros(3, 3));
        REQUIRE(out.values() == Tensor::identity(3).values());
    }
    SECTION("already symmetric input gains only the diagonal") {
        Tensor p = Tensor::from_rows({{0, 0.3}, {0.3, 0}});
        Tensor out = symmetrize_proximity(p);
        REQUIRE(out.at(0, 1) == Approx(0.3).margin(1e-15));
        REQUIRE(out.at(1, 0) == Approx(0.3).margin(1e-15));
        REQUIRE(out.at(0, 0) == 1.0);
        REQUIRE(out.at(1, 1) == 1.0);
    }
    SECTION("asymmetric weights are averaged") {
        Tensor p = Tensor::from_rows({{0, 0.2}, {0.6, 0}});
        Tensor out = symmetrize_proximity(p);
        REQUIRE(out.at(0, 1) == Approx(0.4).margin(1e-15));
        REQUIRE(out.at(1, 0) == Approx(0.4).margin(1e-15));
    }
}

TEST_CASE("top_gamma_cut") {
    Rng rng(61);
    SECTION("gamma = 1 keeps everything") {
        const int n = 5;
        EdgeList edges = random_edges(n, 0.6, rng);
        Tensor o = random_tensor(n, 2, rng);
        Tensor p_sym = symmetrize_proximity(
            proximity_weights(o, edges, random_tensor(4, 1, rng), random_tensor(2, 2, rng)));
        TopGammaCut cut = top_gamma_cut(p_sym, 1.0, edges);
        REQUIRE(cut.p_cut.values() == p_sym.values());
        REQUIRE(cut.kept.size() == edges.size());
    }
    SECTION("4 edges at gamma 0.5 keep exactly 2 symmetric pairs") {
        const int n = 4;
        EdgeList edges = {{0, 1}, {0, 2}, {1, 3}, {2, 3}};
        Tensor p_sym = Tensor::identity(n);
        const double w[] = {0.9, 0.2, 0.7, 0.4};
        for (std::size_t e = 0; e < edges.size(); ++e) {
            p_sym.values()[std::size_t(edges[e].first) * n + edges[e].second] = w[e];
            p_sym.values()[std::size_t(edges[e].second) * n + edges[e].first] = w[e];
        }
        TopGammaCut cut = top_gamma_cut(p_sym, 0.5, edges);
        REQUIRE(cut.kept == EdgeList{{0, 1}, {1, 3}});
        int nonzero_pairs = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) nonzero_pairs += cut.p_cut.at(i, j) != 0.0;
        REQUIRE(nonzero_pairs == 2);
        for (int i = 0; i < n; ++i) REQUIRE(cut.p_cut.at(i, i) == 1.0);  // diagonal untouched
    }
    SECTION("ties break toward ascending (i,j)") {
        const int n = 4;
        EdgeList edges = {{0, 3}, {1, 2}, {0, 1}};
        Tensor p_sym = Tensor::identity(n);
        for (auto [u, v] : edges) {
            p_sym.values()[std::size_t(u) * n + v] = 0.5;
            p_sym.values()[std::size_t(v) * n + u] = 0.5;
        }
        TopGammaCut cut = top_gamma_cut(p_sym, 0.5, edges);  // ceil(1.5) = 2
        REQUIRE(cut.kept == EdgeList{{0, 1}, {0, 3}});
    }
    SECTION("no edges yields the diagonal-only matrix") {
        Tensor p_sym = symmetrize_proximity(Tensor::zeros(3, 3));
        TopGammaCut cut = top_gamma_cut(p_sym, 0.7, {});
        REQUIRE(cut.p_cut.values() == Tensor::identity(3).values());
        REQUIRE(cut.kept.empty());
    }
    SECTION("200 random graphs match the exhaustive-sort oracle") {
        for (int trial = 0; trial < 200; ++trial) {
            Rng trng(1000 + trial);
            const int n = 2 + static_cast<int>(trng.below(7));
            EdgeList edges = random_edges(n, 0.5, trng);
            Tensor o = random_tensor(n, 2, trng);
            Tensor p_sym = symmetrize_proximity(
                proximity_weights(o, edges, random_tensor(4, 1, trng), random_tensor(2, 2, trng)));
            const double gamma = 0.1 + 0.1 * static_cast<double>(trng.below(10));
            TopGammaCut cut = top_gamma_cut(p_sym, gamma, edges);
            REQUIRE(cut.kept == oracle_top_gamma(p_sym.values(), gamma, edges, n));
            Mat expect = oracle_cut_matrix(p_sym.values(), cut.kept, n);
            REQUIRE(cut.p_cut.values() == expect);
        }
    }
}

TEST_CASE("node_scores") {
    SECTION("single isolated node closed form") {
        Tensor p_cut = Tensor::identity(1);  // diagonal preserved by the cut
        Tensor h = Tensor::from_rows({{2, 3}});
        auto s = node_scores(p_cut, h, true);  // self-weight 2, normalizes to 1
        REQUIRE(s == std::vector<double>{5.0});
    }
    SECTION("zero features give zero scores") {
        Tensor p_cut = symmetrize_proximity(Tensor::zeros(4, 4));
        auto s = node_scores(p_cut, Tensor::zeros(4, 3));
        for (double v : s) REQUIRE(v == 0.0);
    }
    SECTION("random instance matches the dense oracle, both self-loop modes") {
        Rng rng(71);
        const int n = 5, f = 3;
        EdgeList edges = random_edges(n, 0.6, rng);
        Tensor o = random_tensor(n, f, rng);
        Tensor h = random_tensor(n, f, rng);
        Tensor p_sym = symmetrize_proximity(
            proximity_weights(o, edges, random_tensor(6, 1, rng), random_tensor(f, f, rng)));
        TopGammaCut cut = top_gamma_cut(p_sym, 0.6, edges);
        for (bool extra : {true, false}) {
            auto s = node_scores(cut.p_cut, h, extra);
            auto expect = oracle_scores(cut.p_cut.values(), h.values(), n, f, extra);
            for (int i = 0; i < n; ++i) REQUIRE(s[i] == Approx(expect[i]).margin(1e-12));
        }
    }
}

TEST_CASE("select_top_nodes") {
    SECTION("epsilon = 1 keeps all nodes sorted by score") {
        REQUIRE(select_top_nodes({0.3, 0.9, 0.1}, 1.0, 3) == std::vector<int>{1, 0, 2});
    }
    SECTION("ceil arithmetic from the worked example") {
        REQUIRE(select_top_nodes({0.1, 0.9, 0.5}, 0.34, 3) == std::vector<int>{1, 2});
    }
    SECTION("equal scores fall back to ascending index") {
        REQUIRE(select_top_nodes({0.5, 0.5, 0.5, 0.5}, 0.5, 4) == std::vector<int>{0, 1});
    }
    SECTION("a single node always survives") {
        REQUIRE(select_top_nodes({0.7}, 0.01, 1) == std::vector<int>{0});
    }
}

TEST_CASE("copool_forward") {
    SECTION("no pruning, no propagation: Z = [P_sym H || H] ordered by score") {
        Rng rng(81);
        const int n = 5, f = 2;
        EdgeList edges = random_edges(n, 0.6, rng);
        CoPoolConfig config;
        config.gamma = 1.0;
        config.epsilon = 1.0;
        config.gpr_steps = 0;
        CoPoolParams params = identity_fuse_params(f, config, rng);
        params.beta = Tensor::param(1, 1, {1.0});
        Tensor h = random_tensor(n, f, rng);

        PooledGraph out = copool_forward(h, edges, params, config);
        REQUIRE(out.indices.size() == n);

        Tensor p_sym = symmetrize_proximity(proximity_weights(h, edges, params.a, params.w_prox));
        Mat ph = oracle_matmul(p_sym.values(), h.values(), n, n, f);
        for (int k = 0; k < n; ++k) {
            const int src = out.indices[k];
            for (int c = 0; c < f; ++c) {
                REQUIRE(out.z.at(k, c) == Approx(ph[std::size_t(src) * f + c]).margin(1e-10));
                REQUIRE(out.z.at(k, f + c) == Approx(h.at(src, c)).margin(1e-12));
            }
        }
    }
    SECTION("edgeless graph: pooled adjacency is the identity, Z finite") {
        Rng rng(82);
        CoPoolConfig config;
        config.epsilon = 1.0;
        CoPoolParams params = make_copool_params(2, 2, 2, config, rng);
        Tensor h = random_tensor(3, 2, rng);
        PooledGraph out = copool_forward(h, EdgeList{}, params, config);
        REQUIRE(out.adj.values() == Tensor::identity(3).values());
        for (double v : out.z.values()) REQUIRE(std::isfinite(v));
        REQUIRE(out.kept_edges.empty());
    }
    SECTION("random 6-node graph matches the composed dense oracle") {
        for (int trial = 0; trial < 20; ++trial) {
            Rng rng(9100 + trial);
            const int n = 6, f = 3, fp = 2, fout = 4;
            EdgeList edges = random_edges(n, 0.5, rng);
            CoPoolConfig config;
            config.gamma = 0.1 + 0.1 * static_cast<double>(rng.below(10));
            config.epsilon = 0.1 + 0.1 * static_cast<double>(rng.below(10));
            config.gpr_steps = 2;
            CoPoolParams params;
            params.beta = Tensor::param(3, 1, {0.5, 0.3, 0.2});
            params.w_prox = random_tensor(f, fp, rng, true);
            params.a = random_tensor(2 * fp, 1, rng, true);
            params.w_fuse = random_tensor(2 * f, fout, rng, true);
            Tensor h = random_tensor(n, f, rng);

            PooledGraph out = copool_forward(h, edges, params, config);

            Mat o = oracle_gpr(h.values(), edges, params.beta.values(), 2, n, f);
            Mat p = oracle_proximity(o, edges, params.a.values(), params.w_prox.values(), n, f, fp);
            Mat p_sym = oracle_symmetrize(p, n);
            EdgeList kept = oracle_top_gamma(p_sym, config.gamma, edges, n);
            Mat p_cut = oracle_cut_matrix(p_sym, kept, n);
            auto scores = oracle_scores(p_cut, h.values(), n, f, true);
            auto idx = oracle_top_nodes(scores, config.epsilon, n);
            REQUIRE(out.indices == idx);
            REQUIRE(out.kept_edges == kept);

            const int k = static_cast<int>(idx.size());
            Mat fused_in(std::size_t(k) * 2 * f);
            Mat cluster = oracle_matmul(p_cut, o, n, n, f);
            for (int r = 0; r < k; ++r)
                for (int c = 0; c < f; ++c) {
                    fused_in[std::size_t(r) * 2 * f + c] = cluster[std::size_t(idx[r]) * f + c];
                    fused_in[std::size_t(r) * 2 * f + f + c] = h.values()[std::size_t(idx[r]) * f + c];
                }
            Mat z = oracle_matmul(fused_in, params.w_fuse.values(), k, 2 * f, fout);
            for (std::size_t i = 0; i < z.size(); ++i)
                REQUIRE(out.z.values()[i] == Approx(z[i]).margin(1e-9));
            for (int r = 0; r < k; ++r)
                for (int c = 0; c < k; ++c)
                    REQUIRE(out.adj.at(r, c) == Approx(p_cut[std::size_t(idx[r]) * n + idx[c]]).margin(1e-12));
        }
    }
    SECTION("ablation modes") {
        Rng rng(83);
        const int n = 5, f = 2;
        EdgeList edges = random_edges(n, 0.6, rng);
        Tensor h = random_tensor(n, f, rng);

        CoPoolConfig no_gpr;
        no_gpr.mode = PoolMode::no_gpr;
        no_gpr.epsilon = 0.5;
        CoPoolParams p1 = make_copool_params(f, f, f, no_gpr, rng);
        REQUIRE(p1.beta.size() == 0);
        PooledGraph out1 = copool_forward(h, edges, p1, no_gpr);
        REQUIRE(out1.indices.size() == 3);  // ceil(5 * 0.5)

        CoPoolConfig no_nv;
        no_nv.mode = PoolMode::no_node_view;
        CoPoolParams p2 = make_copool_params(f, f, f, no_nv, rng);
        REQUIRE(p2.w_fuse.rows() == f);  // fuses P_cut O alone
        PooledGraph out2 = copool_forward(h, edges, p2, no_nv);
        REQUIRE(out2.indices.size() == static_cast<std::size_t>(n));  // every node kept
        REQUIRE(out2.z.rows() == n);
        REQUIRE(out2.adj.values() == out2.proximity_full.values());
    }
}

TEST_CASE("copool invariants") {
    SECTION("P_cut is exactly symmetric; edge count honors ceil(gamma |E|)") {
        for (int trial = 0; trial < 100; ++trial) {
            Rng rng(11000 + trial);
            const int n = 3 + static_cast<int>(rng.below(6));
            EdgeList edges = random_edges(n, 0.5, rng);
            CoPoolConfig config;
            config.gamma = 0.1 + 0.1 * static_cast<double>(rng.below(10));
            CoPoolParams params = make_copool_params(2, 2, 2, config, rng);
            Tensor h = random_tensor(n, 2, rng);
            PooledGraph out = copool_forward(h, edges, params, config);

            const Tensor& pc = out.proximity_full;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) REQUIRE(pc.at(i, j) == pc.at(j, i));  // bitwise

            std::size_t nonzero_pairs = 0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) nonzero_pairs += pc.at(i, j) != 0.0;
            const std::size_t expect =
                std::min(edges.size(), static_cast<std::size_t>(std::ceil(config.gamma * edges.size() - 1e-9)));
            REQUIRE(nonzero_pairs == expect);
        }
    }
    SECTION("monotone containment across gamma") {
        for (int trial = 0; trial < 100; ++trial) {
            Rng rng(12000 + trial);
            const int n = 4 + static_cast<int>(rng.below(5));
            EdgeList edges = random_edges(n, 0.6, rng);
            Tensor o = random_tensor(n, 2, rng);
            Tensor p_sym = symmetrize_proximity(
                proximity_weights(o, edges, random_tensor(4, 1, rng), random_tensor(2, 2, rng)));
            std::set<std::pair<int, int>> previous;
            for (int g = 1; g <= 10; ++g) {
                auto kept = top_gamma_edges(p_sym, 0.1 * g, edges);
                std::set<std::pair<int, int>> current(kept.begin(), kept.end());
                for (const auto& e : previous) REQUIRE(current.count(e) == 1);
                previous = std::move(current);
            }
        }
    }
    SECTION("permutation consistency with distinct scores") {
        int done = 0;
        for (int trial = 0; trial < 200 && done < 100; ++trial) {
            Rng rng(13000 + trial);
            const int n = 6, f = 2;
            EdgeList edges = random_edges(n, 0.5, rng);
            CoPoolConfig config;
            config.gamma = 1.0;
            config.epsilon = 0.5;
            config.gpr_steps = 1;
            CoPoolParams params = make_copool_params(f, f, f, config, rng);
            params.beta = Tensor::param(2, 1, {0.6, 0.4});
            Tensor h = random_tensor(n, f, rng);

            // require pairwise-distinct scores; resample otherwise
            PooledGraph base = copool_forward(h, edges, params, config);
            auto scores = node_scores(base.proximity_full, h, true);
            bool distinct = true;
            for (int i = 0; i < n && distinct; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (std::abs(scores[i] - scores[j]) < 1e-9) {
                        distinct = false;
                        break;
                    }
            if (!distinct) continue;
            ++done;

            std::vector<int> perm(n);
            for (int i = 0; i < n; ++i) perm[i] = i;
            rng.shuffle(perm);
            std::vector<double> ph_vals(h.size());
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < f; ++c)
                    ph_vals[std::size_t(perm[i]) * f + c] = h.at(i, c);
            EdgeList pedges;
            for (auto [u, v] : edges)
                pedges.emplace_back(std::min(perm[u], perm[v]), std::max(perm[u], perm[v]));
            Tensor ph(n, f, ph_vals);

            PooledGraph permuted = copool_forward(ph, pedges, params, config);
            REQUIRE(permuted.indices.size() == base.indices.size());
            for (std::size_t k = 0; k < base.indices.size(); ++k) {
                REQUIRE(permuted.indices[k] == perm[base.indices[k]]);
                for (int c = 0; c < permuted.z.cols(); ++c)
                    REQUIRE(permuted.z.at(static_cast<int>(k), c) ==
                            Approx(base.z.at(static_cast<int>(k), c)).margin(1e-9));
            }
        }
        REQUIRE(done == 100);
    }
    SECTION("gradients reach beta and a on a generic instance") {
        Rng rng(14000);
        const int n = 6, f = 2;
        EdgeList edges = random_edges(n, 0.6, rng);
        CoPoolConfig config;
        config.gamma = 1.0;  // survivor set fixed, only ranking can move
        config.epsilon = 0.5;
        config.gpr_steps = 2;
        CoPoolParams params;
        params.beta = Tensor::param(3, 1, {0.5, 0.3, 0.2});
        params.w_prox = glorot_uniform(f, f, rng);
        params.a = glorot_uniform(2 * f, 1, rng);
        params.w_fuse = glorot_uniform(2 * f, f, rng);
        Tensor h = random_tensor(n, f, rng, true);
        Tensor adj = dense_adjacency(n, edges);

        auto build = [&] {
            return sum_all(sigmoid(copool_forward(h, adj, params, config).z));
        };
        const double err = grad_check(build, {params.beta, params.a, params.w_prox, params.w_fuse, h}, 1e-4);
        REQUIRE(err < 1e-4);

        params.beta.zero_grad();
        params.a.zero_grad();
        backward(build());
        double beta_norm = 0.0, a_norm = 0.0;
        for (double g : params.beta.grad()) beta_norm += std::abs(g);
        for (double g : params.a.grad()) a_norm += std::abs(g);
        REQUIRE(beta_norm > 1e-8);
        REQUIRE(a_norm > 1e-8);
    }
}
