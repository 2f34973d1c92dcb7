#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfef/dataset.hpp"
#include "gfef/encoders.hpp"
#include "gfef/features.hpp"
#include "gfef/graph.hpp"
#include "gfef/hypergraph.hpp"
#include "gfef/losses.hpp"
#include "gfef/model_config.hpp"
#include "gfef/params.hpp"
#include "gfef/robustness.hpp"
#include "gfef/rng.hpp"

namespace gfef {

enum class Mode { kTrain, kInfer };

template <typename T>
struct PreparedInstance {
    Tensor<T> series;  // [1, T], normalized when the config says so
    Tensor<T> image;   // [3, 64, 64]
    Tensor<T> expert;  // [12], standardized with training statistics
    int label = -1;
    uint64_t content_hash = 0;  // over raw series; pins inference-time noise
};

// Pinned stochastic draws and discrete selections of one forward pass.
// recording=true: draw fresh values and store them; recording=false: replay.
// Gradient checks replay so central differences see the differentiable path
// the analytic backward pass computed.
template <typename T>
struct ForwardAux {
    bool recording = true;
    std::array<std::optional<Tensor<T>>, 2> conn_gumbel;
    std::optional<Memberships> edges1, edges2;
    std::vector<std::array<std::optional<Tensor<T>>, 3>> frf_gumbel;  // [sample][type slot]
    std::vector<std::optional<std::vector<double>>> dra;              // [sample]

    void resize(size_t batch) {
        frf_gumbel.resize(batch);
        dra.resize(batch);
    }
};

template <typename T>
struct SampleOut {
    typename Graph<T>::Val final_logits;
    std::array<typename Graph<T>::Val, 3> type_logits;  // by active-type slot
    PropagationOut<T> prop;                             // last layer
    std::vector<double> dra;                            // per active type
    std::vector<std::vector<double>> masks;             // per active type (FRF)
    int prediction = -1;
};

template <typename T>
struct ForwardOut {
    typename Graph<T>::Val loss;  // [1], batch mean of the total loss
    LossReport mean_parts;
    std::vector<SampleOut<T>> samples;
    Memberships edges1, edges2;
};

struct InferResult {
    int label = -1;
    std::vector<double> probabilities;
    std::array<double, 3> reliability{0.0, 0.0, 0.0};  // ts, img, exp (0 when absent)
};

template <typename T>
class GfefModel {
public:
    ModelConfig cfg;
    ParamStore<T> params;
    std::vector<T> expert_mean, expert_stdv;
    uint64_t init_seed = 0;

    GfefModel(const ModelConfig& c, uint64_t seed)
        : cfg(c), params(mix_seed(seed, 0x6fef)), expert_mean(12, T(0)), expert_stdv(12, T(1)),
          init_seed(seed) {
        cfg.validate();
        register_params();
    }

    // ---- input preparation -------------------------------------------------

    void fit_expert_stats(const Dataset& train) {
        std::vector<double> mean(12, 0.0), var(12, 0.0);
        std::vector<std::array<double, 12>> feats;
        feats.reserve(train.instances.size());
        for (const auto& inst : train.instances) {
            auto series = cfg.normalize_input ? znormalize(inst.values) : inst.values;
            feats.push_back(expert_features(series, cfg.repeat_eps).f);
        }
        for (const auto& f : feats)
            for (int i = 0; i < 12; ++i) mean[i] += f[i];
        for (auto& m : mean) m /= static_cast<double>(feats.size());
        for (const auto& f : feats)
            for (int i = 0; i < 12; ++i) var[i] += (f[i] - mean[i]) * (f[i] - mean[i]);
        for (int i = 0; i < 12; ++i) {
            expert_mean[i] = static_cast<T>(mean[i]);
            expert_stdv[i] =
                static_cast<T>(std::max(std::sqrt(var[i] / feats.size()), 1e-8));
        }
    }

    PreparedInstance<T> prepare_instance(const std::vector<double>& raw, int label) const {
        if (static_cast<int>(raw.size()) != cfg.series_length)
            throw std::invalid_argument("series length " + std::to_string(raw.size()) +
                                        " does not match model length " +
                                        std::to_string(cfg.series_length));
        for (double v : raw)
            if (!std::isfinite(v)) throw std::invalid_argument("series contains a non-finite value");
        PreparedInstance<T> out;
        out.label = label;
        out.content_hash = hash_series(raw);
        auto series = cfg.normalize_input ? znormalize(raw) : raw;
        out.series = Tensor<T>({1, cfg.series_length});
        for (int i = 0; i < cfg.series_length; ++i) out.series[i] = static_cast<T>(series[i]);
        if (cfg.use_image) {
            auto img = render_curve_image(series);
            out.image = Tensor<T>({3, CurveImage::kSize, CurveImage::kSize});
            for (int i = 0; i < out.image.numel(); ++i) out.image[i] = static_cast<T>(img.pixels[i]);
        }
        if (cfg.use_expert) {
            auto f = expert_features(series, cfg.repeat_eps);
            out.expert = Tensor<T>({12});
            for (int i = 0; i < 12; ++i)
                out.expert[i] = (static_cast<T>(f[i]) - expert_mean[i]) / expert_stdv[i];
        }
        return out;
    }

    std::vector<PreparedInstance<T>> prepare_dataset(const Dataset& ds) const {
        std::vector<PreparedInstance<T>> out;
        out.reserve(ds.instances.size());
        for (const auto& inst : ds.instances) out.push_back(prepare_instance(inst.values, inst.label));
        return out;
    }

    // ---- forward -------------------------------------------------------------

    ForwardOut<T> forward_batch(Graph<T>& g, const std::vector<const PreparedInstance<T>*>& batch,
                                Mode mode, uint64_t noise_seed, ForwardAux<T>* aux) const {
        if (mode == Mode::kTrain && !aux)
            throw std::invalid_argument("training-mode forward requires a ForwardAux");
        ForwardOut<T> out;
        auto types = cfg.active_types();
        int n_types = static_cast<int>(types.size());
        int p_hat = cfg.total_nodes();
        if (aux) aux->resize(batch.size());

        // Shared structure, built once per batch.
        typename Graph<T>::Val m1{}, m2{};
        HyperStructure s1, s2;
        if (!cfg.self_attention) {
            m1 = shared_node_features(g, params, cfg, 1);
            Memberships e1 = structure_edges(g, m1, 1, mode, mix_seed(noise_seed, 0x51), aux);
            Memberships e2;
            if (cfg.dynamic_hyperedges) {
                m2 = shared_node_features(g, params, cfg, 2);
                e2 = structure_edges(g, m2, 2, mode, mix_seed(noise_seed, 0x52), aux);
            } else {
                m2 = m1;
                e2 = e1;
            }
            s1.edges = std::make_shared<Memberships>(e1);
            s1.incidence = incidence_from(e1, p_hat);
            s2.edges = std::make_shared<Memberships>(e2);
            s2.incidence = incidence_from(e2, p_hat);
            out.edges1 = e1;
            out.edges2 = e2;
        }

        std::vector<typename Graph<T>::Val> totals;
        LossReport acc;
        for (size_t si = 0; si < batch.size(); ++si) {
            const PreparedInstance<T>& inst = *batch[si];
            SampleOut<T> so;

            // encoders + patching
            std::vector<typename Graph<T>::Val> nodes(types.size());
            for (int t = 0; t < n_types; ++t) {
                typename Graph<T>::Val feat;
                switch (types[static_cast<size_t>(t)]) {
                    case InputType::kTs:
                        feat = encode_ts(g, params, cfg, g.constant(inst.series));
                        break;
                    case InputType::kImg:
                        feat = encode_image(g, params, g.constant(inst.image));
                        break;
                    default:
                        feat = encode_expert(g, params, g.constant(inst.expert));
                }
                nodes[static_cast<size_t>(t)] = patchify_project(
                    g, params, cfg, types[static_cast<size_t>(t)], feat);
            }

            // feature redundancy filtering
            if (cfg.use_frf) {
                for (int t = 0; t < n_types; ++t) {
                    const Tensor<T>* gum = nullptr;
                    Tensor<T> fresh;
                    if (mode == Mode::kTrain) {
                        auto& slot = aux->frf_gumbel[si][static_cast<size_t>(t)];
                        if (aux->recording) {
                            RngStream rng(mix_seed(noise_seed, 0xF8F, si, static_cast<uint64_t>(t)));
                            fresh = Tensor<T>({cfg.hidden, 2});
                            for (int i = 0; i < fresh.numel(); ++i)
                                fresh[i] = static_cast<T>(rng.gumbel());
                            slot = fresh;
                        }
                        gum = &slot.value();
                    }
                    auto frf = redundancy_filter(g, params, cfg, types[static_cast<size_t>(t)],
                                                 nodes[static_cast<size_t>(t)],
                                                 mode == Mode::kTrain, gum);
                    nodes[static_cast<size_t>(t)] = typename Graph<T>::Val{frf.masked_node};
                    so.masks.push_back(std::move(frf.mask_values));
                }
            }

            // intermediate classifiers (on unperturbed, unscaled features)
            for (int t = 0; t < n_types; ++t) {
                std::string base = std::string("cls.") + type_name(types[static_cast<size_t>(t)]);
                auto w = g.param(&params.at(base + ".w").value, params.id_of(base + ".w"));
                auto b = g.param(&params.at(base + ".b").value, params.id_of(base + ".b"));
                auto flat = g.reshape(nodes[static_cast<size_t>(t)],
                                      {cfg.nodes_per_type * cfg.hidden});
                so.type_logits[static_cast<size_t>(t)] = g.linear_vec(flat, w, b);
            }

            // data reliability scores; evaluation-only branch, scores enter the
            // forward pass as constants
            if (cfg.use_dra && n_types >= 2) {
                std::vector<double> scores;
                if (aux && !aux->recording) {
                    scores = aux->dra[si].value();
                } else {
                    std::vector<const Tensor<T>*> zv, ws, bs;
                    for (int t = 0; t < n_types; ++t) {
                        zv.push_back(&g.value(nodes[static_cast<size_t>(t)]));
                        std::string base =
                            std::string("cls.") + type_name(types[static_cast<size_t>(t)]);
                        ws.push_back(&params.at(base + ".w").value);
                        bs.push_back(&params.at(base + ".b").value);
                    }
                    uint64_t dra_seed = mode == Mode::kInfer
                                            ? mix_seed(0xD8A, inst.content_hash)
                                            : mix_seed(noise_seed, 0xD8A, si);
                    std::vector<uint64_t> type_seeds;
                    for (int t = 0; t < n_types; ++t)
                        type_seeds.push_back(mix_seed(
                            dra_seed, static_cast<uint64_t>(types[static_cast<size_t>(t)])));
                    scores = dra_scores(zv, ws, bs, cfg.num_classes, type_seeds);
                    if (aux && aux->recording) aux->dra[si] = scores;
                }
                for (int t = 0; t < n_types; ++t)
                    nodes[static_cast<size_t>(t)] =
                        g.scale(nodes[static_cast<size_t>(t)], static_cast<T>(scores[static_cast<size_t>(t)]));
                so.dra = scores;
            } else {
                so.dra.assign(static_cast<size_t>(n_types), 1.0);
            }

            // hypergraph interaction fusion
            auto fused = n_types == 1 ? nodes[0] : g.concat_rows(nodes);
            PropagationOut<T> prop{};
            for (int layer = 1; layer <= cfg.layers; ++layer) {
                prop = propagate_layer(g, params, cfg, layer, fused, m1, m2, s1, s2);
                fused = prop.nodes;
            }
            so.prop = prop;

            auto wf = g.param(&params.at("cls.final.w").value, params.id_of("cls.final.w"));
            auto bf = g.param(&params.at("cls.final.b").value, params.id_of("cls.final.b"));
            so.final_logits = g.linear_vec(g.reshape(fused, {p_hat * cfg.hidden}), wf, bf);

            // losses
            auto total = g.cross_entropy(so.final_logits, inst.label);
            LossReport parts;
            parts.ce_final = g.value(total)[0];
            for (int t = 0; t < n_types; ++t) {
                auto ce = g.cross_entropy(so.type_logits[static_cast<size_t>(t)], inst.label);
                auto js = js_tape(g, so.final_logits, so.type_logits[static_cast<size_t>(t)]);
                double ce_v = g.value(ce)[0];
                switch (types[static_cast<size_t>(t)]) {
                    case InputType::kTs: parts.ce_ts = ce_v; break;
                    case InputType::kImg: parts.ce_img = ce_v; break;
                    default: parts.ce_exp = ce_v;
                }
                parts.js_total += g.value(js)[0];
                total = g.add(total, g.add(ce, js));
            }
            parts.total = g.value(total)[0];
            acc.ce_final += parts.ce_final;
            acc.ce_ts += parts.ce_ts;
            acc.ce_img += parts.ce_img;
            acc.ce_exp += parts.ce_exp;
            acc.js_total += parts.js_total;
            acc.total += parts.total;
            totals.push_back(total);

            so.prediction = argmax_low_tie(g.value(so.final_logits));
            out.samples.push_back(std::move(so));
        }

        auto sum = totals[0];
        for (size_t i = 1; i < totals.size(); ++i) sum = g.add(sum, totals[i]);
        out.loss = g.scale(sum, T(1) / static_cast<T>(totals.size()));
        double inv = 1.0 / static_cast<double>(totals.size());
        acc.ce_final *= inv;
        acc.ce_ts *= inv;
        acc.ce_img *= inv;
        acc.ce_exp *= inv;
        acc.js_total *= inv;
        acc.total *= inv;
        out.mean_parts = acc;
        return out;
    }

    // Full deterministic inference for one raw series.
    InferResult infer_instance(const std::vector<double>& raw) const {
        auto prepared = prepare_instance(raw, 0);
        Graph<T> g;
        g.set_no_grad(true);
        std::vector<const PreparedInstance<T>*> batch{&prepared};
        auto fo = forward_batch(g, batch, Mode::kInfer, 0, nullptr);
        return result_from(g, fo.samples[0]);
    }

    InferResult result_from(Graph<T>& g, const SampleOut<T>& so) const {
        InferResult r;
        const auto& logits = g.value(so.final_logits);
        std::vector<double> l(logits.data.begin(), logits.data.end());
        r.probabilities = gfef::softmax(l);
        r.label = so.prediction;
        auto types = cfg.active_types();
        if (types.size() == 1) {
            r.reliability[static_cast<size_t>(types[0])] = 1.0;
        } else {
            for (size_t t = 0; t < types.size(); ++t)
                r.reliability[static_cast<size_t>(types[t])] = so.dra[t];
        }
        return r;
    }

    static int argmax_low_tie(const Tensor<T>& v) {
        int best = 0;
        for (int i = 1; i < v.numel(); ++i)
            if (v[i] > v[best]) best = i;
        return best;
    }

    static typename Graph<T>::Val js_tape(Graph<T>& g, typename Graph<T>::Val logits_p,
                                          typename Graph<T>::Val logits_q) {
        auto p = g.softmax_vec(logits_p);
        auto q = g.softmax_vec(logits_q);
        auto mid = g.scale(g.add(p, q), T(0.5));
        auto lp = g.log_floored(p, T(1e-12));
        auto lq = g.log_floored(q, T(1e-12));
        auto lm = g.log_floored(mid, T(1e-12));
        auto t1 = g.dot(p, g.sub(lp, lm));
        auto t2 = g.dot(q, g.sub(lq, lm));
        return g.scale(g.add(t1, t2), T(0.5));
    }

private:
    void register_params() {
        add_ts_encoder_params(params, cfg);
        if (cfg.use_image) add_image_encoder_params(params);
        if (cfg.use_expert) add_expert_encoder_params(params, cfg);
        for (InputType t : cfg.active_types()) {
            add_patch_params(params, cfg, t);
            if (cfg.use_frf) add_frf_params(params, cfg, t);
            std::string base = std::string("cls.") + type_name(t);
            params.add(base + ".w", {cfg.nodes_per_type * cfg.hidden, cfg.num_classes},
                       Init::kXavier);
            params.add(base + ".b", {cfg.num_classes}, Init::kZero);
        }
        if (!cfg.self_attention) {
            add_structure_params(params, cfg, 1);
            if (cfg.dynamic_hyperedges) add_structure_params(params, cfg, 2);
        }
        for (int l = 1; l <= cfg.layers; ++l) add_propagation_params(params, cfg, l);
        params.add("cls.final.w", {cfg.total_nodes() * cfg.hidden, cfg.num_classes}, Init::kXavier);
        params.add("cls.final.b", {cfg.num_classes}, Init::kZero);
    }

    Memberships structure_edges(Graph<T>& g, typename Graph<T>::Val m, int stage, Mode mode,
                                uint64_t seed, ForwardAux<T>* aux) const {
        std::optional<Memberships>* slot = nullptr;
        std::optional<Tensor<T>>* gum_slot = nullptr;
        if (aux) {
            slot = stage == 1 ? &aux->edges1 : &aux->edges2;
            gum_slot = &aux->conn_gumbel[static_cast<size_t>(stage - 1)];
        }
        if (slot && !aux->recording) return slot->value();

        const Tensor<T>& mv = g.value(m);
        Memberships edges;
        if (cfg.construction == Construction::kKnn) {
            edges = knn_hyperedges(mv, cfg.top_k);
        } else {
            std::string base = "hg.s" + std::to_string(stage) + ".pair";
            const Tensor<T>& pw = params.at(base + ".w").value;
            const Tensor<T>& pb = params.at(base + ".b").value;
            Tensor<T> fresh;
            const Tensor<T>* gum = nullptr;
            if (mode == Mode::kTrain) {
                int p_hat = cfg.total_nodes();
                fresh = Tensor<T>({p_hat * p_hat, 2});
                RngStream rng(seed);
                for (int i = 0; i < fresh.numel(); ++i) fresh[i] = static_cast<T>(rng.gumbel());
                if (gum_slot) {
                    *gum_slot = std::move(fresh);
                    gum = &gum_slot->value();
                } else {
                    gum = &fresh;
                }
            }
            auto c = connection_matrix(mv, pw, pb, mode == Mode::kTrain, cfg.tau, gum);
            auto rel = random_walk_relevance(c, cfg.alpha, cfg.walk_steps);
            edges = topk_hyperedges(rel, cfg.top_k);
        }
        if (slot && aux->recording) *slot = edges;
        return edges;
    }
};

}  // namespace gfef
