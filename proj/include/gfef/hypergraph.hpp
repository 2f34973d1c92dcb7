#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gfef/graph.hpp"
#include "gfef/model_config.hpp"
#include "gfef/params.hpp"
#include "gfef/rng.hpp"

namespace gfef {

using Memberships = std::vector<std::vector<int>>;

struct HyperStructure {
    std::shared_ptr<Memberships> edges;      // edge i -> member node indices (anchor included)
    std::shared_ptr<Memberships> incidence;  // node i -> edges containing it
};

inline std::shared_ptr<Memberships> incidence_from(const Memberships& edges, int n_nodes) {
    auto inc = std::make_shared<Memberships>(static_cast<size_t>(n_nodes));
    for (size_t e = 0; e < edges.size(); ++e)
        for (int node : edges[e]) (*inc)[static_cast<size_t>(node)].push_back(static_cast<int>(e));
    return inc;
}

// ---- learned shared structure -------------------------------------------------

template <typename T>
void add_structure_params(ParamStore<T>& ps, const ModelConfig& cfg, int stage) {
    std::string base = "hg.s" + std::to_string(stage);
    int d = cfg.hidden, p_hat = cfg.total_nodes();
    ps.add(base + ".embed", {p_hat, d}, Init::kEmbedding);
    ps.add(base + ".mlp1.w", {d, d}, Init::kXavier);
    ps.add(base + ".mlp1.b", {d}, Init::kZero);
    ps.add(base + ".mlp2.w", {d, d}, Init::kXavier);
    ps.add(base + ".mlp2.b", {d}, Init::kZero);
    for (int c = 1; c <= 3; ++c) {
        std::string conv = base + ".conv" + std::to_string(c);
        ps.add(conv + ".w", {d, d, 3}, Init::kXavier);
        ps.add(conv + ".b", {d}, Init::kZero);
        if (c < 3) {
            ps.add(conv + ".ln.gain", {d}, Init::kOne);
            ps.add(conv + ".ln.bias", {d}, Init::kZero);
        }
    }
    ps.add(base + ".pair.w", {2 * d, 2}, Init::kXavier);
    ps.add(base + ".pair.b", {2}, Init::kZero);
}

// Learnable embeddings -> per-node MLP -> three 1-D convolutions along the
// node axis. Output M: [d, P_hat], used both as attention Key and to learn
// the connection matrix.
template <typename T>
typename Graph<T>::Val shared_node_features(Graph<T>& g, const ParamStore<T>& ps,
                                            const ModelConfig& cfg, int stage) {
    std::string base = "hg.s" + std::to_string(stage);
    auto embed = g.param(&ps.at(base + ".embed").value, ps.id_of(base + ".embed"));
    auto w1 = g.param(&ps.at(base + ".mlp1.w").value, ps.id_of(base + ".mlp1.w"));
    auto b1 = g.param(&ps.at(base + ".mlp1.b").value, ps.id_of(base + ".mlp1.b"));
    auto w2 = g.param(&ps.at(base + ".mlp2.w").value, ps.id_of(base + ".mlp2.w"));
    auto b2 = g.param(&ps.at(base + ".mlp2.b").value, ps.id_of(base + ".mlp2.b"));
    auto h = g.linear_rows(g.relu(g.linear_rows(embed, w1, b1)), w2, b2);  // [P_hat, d]
    auto m = g.transpose2d(h);                                             // [d, P_hat]
    for (int c = 1; c <= 3; ++c) {
        std::string conv = base + ".conv" + std::to_string(c);
        auto w = g.param(&ps.at(conv + ".w").value, ps.id_of(conv + ".w"));
        auto b = g.param(&ps.at(conv + ".b").value, ps.id_of(conv + ".b"));
        m = g.conv1d_same(m, w, b);
        if (c < 3) {
            auto gain = g.param(&ps.at(conv + ".ln.gain").value, ps.id_of(conv + ".ln.gain"));
            auto bias = g.param(&ps.at(conv + ".ln.bias").value, ps.id_of(conv + ".ln.bias"));
            m = g.relu(g.layernorm_channels(m, gain, bias));
        }
    }
    return m;
}

// Pairwise Bernoulli head over concatenated column pairs of M. Train mode
// draws soft Gumbel-Softmax samples (pinned noise [P_hat*P_hat, 2]); infer
// mode thresholds at 0.5. Self-loops are forced so the walk matrix is valid.
// No gradient flows through the sampled matrix: hyperedge membership is a
// discrete selection, so this runs outside the tape.
template <typename T>
Tensor<T> connection_matrix(const Tensor<T>& m, const Tensor<T>& pw, const Tensor<T>& pb,
                            bool train_mode, double tau, const Tensor<T>* gumbel) {
    int d = m.dim(0), p_hat = m.dim(1);
    Tensor<T> c({p_hat, p_hat});
    for (int i = 0; i < p_hat; ++i) {
        for (int j = 0; j < p_hat; ++j) {
            if (i == j) {
                c.at(i, j) = T(1);
                continue;
            }
            T l0 = pb[0], l1 = pb[1];
            for (int k = 0; k < d; ++k) {
                l0 += m.at(k, i) * pw.at(k, 0) + m.at(k, j) * pw.at(d + k, 0);
                l1 += m.at(k, i) * pw.at(k, 1) + m.at(k, j) * pw.at(d + k, 1);
            }
            // two-way softmax
            T mx = std::max(l0, l1);
            T e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
            T p1 = e1 / (e0 + e1);
            if (!train_mode) {
                c.at(i, j) = p1 >= T(0.5) ? T(1) : T(0);
            } else {
                int pair = i * p_hat + j;
                T y0 = (std::log(std::max(T(1) - p1, T(1e-12))) + (*gumbel).at(pair, 0)) / static_cast<T>(tau);
                T y1 = (std::log(std::max(p1, T(1e-12))) + (*gumbel).at(pair, 1)) / static_cast<T>(tau);
                T m2 = std::max(y0, y1);
                T z = std::exp(y1 - m2) / (std::exp(y0 - m2) + std::exp(y1 - m2));
                c.at(i, j) = z;
            }
        }
    }
    return c;
}

// Random walk with restart: P = D^-1 C, relevance = sum_{k=0}^{steps}
// alpha (1-alpha)^k P^k.
template <typename T>
Tensor<T> random_walk_relevance(const Tensor<T>& c, double alpha, int steps) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
    if (steps < 0) throw std::invalid_argument("walk steps must be >= 0");
    int n = c.dim(0);
    Tensor<T> p({n, n});
    for (int i = 0; i < n; ++i) {
        T row_sum = 0;
        for (int j = 0; j < n; ++j) row_sum += c.at(i, j);
        if (row_sum <= T(0)) throw std::invalid_argument("connection matrix row has no mass");
        for (int j = 0; j < n; ++j) p.at(i, j) = c.at(i, j) / row_sum;
    }
    Tensor<T> relevance({n, n});
    Tensor<T> power({n, n});  // P^k, starting at identity
    for (int i = 0; i < n; ++i) power.at(i, i) = T(1);
    double coeff = alpha;
    for (int i = 0; i < n; ++i) relevance.at(i, i) = static_cast<T>(coeff);
    for (int k = 1; k <= steps; ++k) {
        Tensor<T> next({n, n});
        for (int i = 0; i < n; ++i)
            for (int l = 0; l < n; ++l) {
                T v = power.at(i, l);
                if (v == T(0)) continue;
                for (int j = 0; j < n; ++j) next.at(i, j) += v * p.at(l, j);
            }
        power = std::move(next);
        coeff *= (1.0 - alpha);
        if (coeff == 0.0) break;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) relevance.at(i, j) += static_cast<T>(coeff) * power.at(i, j);
    }
    return relevance;
}

// Row i: the K largest off-diagonal relevance entries (ties to the lower node
// index) plus the anchor itself.
template <typename T>
Memberships topk_hyperedges(const Tensor<T>& relevance, int k) {
    int n = relevance.dim(0);
    if (k > n - 1) throw std::invalid_argument("top_k must be <= node count - 1");
    Memberships edges(static_cast<size_t>(n));
    std::vector<std::pair<T, int>> order;
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j)
            if (j != i) order.emplace_back(relevance.at(i, j), j);
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        auto& edge = edges[static_cast<size_t>(i)];
        edge.push_back(i);
        for (int t = 0; t < k; ++t) edge.push_back(order[static_cast<size_t>(t)].second);
        std::sort(edge.begin(), edge.end());
    }
    return edges;
}

// KNN ablation: Euclidean nearest columns of M instead of walk relevance.
template <typename T>
Memberships knn_hyperedges(const Tensor<T>& m, int k) {
    int d = m.dim(0), n = m.dim(1);
    if (k > n - 1) throw std::invalid_argument("top_k must be <= node count - 1");
    Memberships edges(static_cast<size_t>(n));
    std::vector<std::pair<T, int>> order;
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            T dist = 0;
            for (int r = 0; r < d; ++r) {
                T diff = m.at(r, i) - m.at(r, j);
                dist += diff * diff;
            }
            order.emplace_back(dist, j);
        }
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return a.second < b.second;
        });
        auto& edge = edges[static_cast<size_t>(i)];
        edge.push_back(i);
        for (int t = 0; t < k; ++t) edge.push_back(order[static_cast<size_t>(t)].second);
        std::sort(edge.begin(), edge.end());
    }
    return edges;
}

// ---- propagation ---------------------------------------------------------------

template <typename T>
void add_propagation_params(ParamStore<T>& ps, const ModelConfig& cfg, int layer) {
    std::string base = "prop.l" + std::to_string(layer);
    int d = cfg.hidden;
    if (cfg.self_attention) {
        for (const char* n : {"q", "k", "v"}) {
            ps.add(base + ".sa." + n + ".w", {d, d}, Init::kXavier);
            ps.add(base + ".sa." + n + ".b", {d}, Init::kZero);
        }
    } else {
        ps.add(base + ".qx.w", {d, 2 * d}, Init::kXavier);
        ps.add(base + ".qx.b", {2 * d}, Init::kZero);
        ps.add(base + ".edge.w", {d, d}, Init::kXavier);
        ps.add(base + ".edge.b", {d}, Init::kZero);
        ps.add(base + ".edge.ln.gain", {d}, Init::kOne);
        ps.add(base + ".edge.ln.bias", {d}, Init::kZero);
        ps.add(base + ".atte.w", {d, d}, Init::kXavier);
        ps.add(base + ".atte.b", {d}, Init::kZero);
    }
    ps.add(base + ".node.w", {d, d}, Init::kXavier);
    ps.add(base + ".node.b", {d}, Init::kZero);
    ps.add(base + ".node.ln.gain", {d}, Init::kOne);
    ps.add(base + ".node.ln.bias", {d}, Init::kZero);
}

template <typename T>
struct PropagationOut {
    typename Graph<T>::Val nodes;  // [P_hat, d]
    typename Graph<T>::Val att_v;  // [P_hat] (hypergraph mode)
    typename Graph<T>::Val att_e;  // [P_hat]
};

// One hypergraph interaction layer:
//   (Q, X^v) from a joint affine; Att^v from row-aggregated Q*M;
//   hyperedge features from attention-weighted member sums (first structure);
//   Att^e from (X^e Theta3 + b3) * M2; node update over the second structure's
//   incidence with residual X^v.
template <typename T>
PropagationOut<T> propagate_layer(Graph<T>& g, const ParamStore<T>& ps, const ModelConfig& cfg,
                                  int layer, typename Graph<T>::Val z,
                                  typename Graph<T>::Val m1, typename Graph<T>::Val m2,
                                  const HyperStructure& s1, const HyperStructure& s2) {
    std::string base = "prop.l" + std::to_string(layer);
    int d = cfg.hidden;
    auto pget = [&](const std::string& n) { return g.param(&ps.at(n).value, ps.id_of(n)); };

    auto node_w = pget(base + ".node.w");
    auto node_b = pget(base + ".node.b");
    auto node_g = pget(base + ".node.ln.gain");
    auto node_bias = pget(base + ".node.ln.bias");

    if (cfg.self_attention) {
        auto q = g.linear_rows(z, pget(base + ".sa.q.w"), pget(base + ".sa.q.b"));
        auto k = g.linear_rows(z, pget(base + ".sa.k.w"), pget(base + ".sa.k.b"));
        auto v = g.linear_rows(z, pget(base + ".sa.v.w"), pget(base + ".sa.v.b"));
        auto scores = g.softmax_rows(g.scale(g.matmul(q, g.transpose2d(k)),
                                             static_cast<T>(1.0 / std::sqrt(double(d)))));
        auto ctx = g.matmul(scores, v);
        auto updated = g.layernorm_rows(g.linear_rows(g.add(z, ctx), node_w, node_b), node_g,
                                        node_bias);
        return {updated, typename Graph<T>::Val{}, typename Graph<T>::Val{}};
    }

    auto qx = g.linear_rows(z, pget(base + ".qx.w"), pget(base + ".qx.b"));  // [P_hat, 2d]
    auto q = g.slice_cols(qx, 0, d);
    auto xv = g.slice_cols(qx, d, d);
    auto att_v = g.softmax_vec(g.row_sums(g.matmul(q, m1)));

    auto edge_sum = g.group_weighted_sum(xv, att_v, s1.edges);
    auto xe = g.layernorm_rows(
        g.linear_rows(edge_sum, pget(base + ".edge.w"), pget(base + ".edge.b")),
        pget(base + ".edge.ln.gain"), pget(base + ".edge.ln.bias"));

    auto keyed = g.matmul(g.linear_rows(xe, pget(base + ".atte.w"), pget(base + ".atte.b")), m2);
    auto att_e = g.softmax_vec(g.row_sums(keyed));

    auto node_sum = g.group_weighted_sum(xe, att_e, s2.incidence);
    auto updated = g.layernorm_rows(g.linear_rows(g.add(xv, node_sum), node_w, node_b), node_g,
                                    node_bias);
    return {updated, att_v, att_e};
}

// ---- diagnostics ----------------------------------------------------------------

// Per-hyperedge proportion of member nodes drawn from each input type.
inline std::vector<std::array<double, 3>> hyperedge_type_proportions(
    const Memberships& edges, const ModelConfig& cfg) {
    auto types = cfg.active_types();
    std::vector<std::array<double, 3>> out;
    out.reserve(edges.size());
    for (const auto& edge : edges) {
        std::array<double, 3> prop{0.0, 0.0, 0.0};
        for (int node : edge) {
            int slot = node / cfg.nodes_per_type;
            prop[static_cast<size_t>(types[static_cast<size_t>(slot)])] += 1.0;
        }
        for (auto& v : prop) v /= static_cast<double>(edge.size());
        out.push_back(prop);
    }
    return out;
}

inline std::string dump_hyperedges(const Memberships& edges, const ModelConfig& cfg) {
    auto props = hyperedge_type_proportions(edges, cfg);
    std::ostringstream out;
    out << "edge\tanchor\tprop_ts\tprop_img\tprop_exp\tmembers\n";
    for (size_t e = 0; e < edges.size(); ++e) {
        out << e << '\t' << e << '\t' << props[e][0] << '\t' << props[e][1] << '\t'
            << props[e][2] << '\t';
        for (size_t i = 0; i < edges[e].size(); ++i)
            out << edges[e][i] << (i + 1 < edges[e].size() ? "," : "");
        out << '\n';
    }
    return out.str();
}

}  // namespace gfef
