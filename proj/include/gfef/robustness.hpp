#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "gfef/graph.hpp"
#include "gfef/model_config.hpp"
#include "gfef/params.hpp"
#include "gfef/rng.hpp"

namespace gfef {

template <typename T>
void add_frf_params(ParamStore<T>& ps, const ModelConfig& cfg, InputType type) {
    std::string base = std::string("frf.") + type_name(type);
    ps.add(base + ".w", {cfg.nodes_per_type, 2}, Init::kXavier);
    ps.add(base + ".b", {2}, Init::kZero);
}

// Per-dimension keep probabilities: softmax over the two logits of
// permute(Z) * Theta1 + b1, one row per feature dimension.
template <typename T>
typename Graph<T>::Val frf_probabilities(Graph<T>& g, const ParamStore<T>& ps, InputType type,
                                         typename Graph<T>::Val z) {
    std::string base = std::string("frf.") + type_name(type);
    auto w = g.param(&ps.at(base + ".w").value, ps.id_of(base + ".w"));
    auto b = g.param(&ps.at(base + ".b").value, ps.id_of(base + ".b"));
    auto logits = g.linear_rows(g.transpose2d(z), w, b);  // [d, 2]
    return g.softmax_rows(logits);
}

// Training-time mask: differentiable Gumbel-Softmax relaxation of the
// Bernoulli sample. gumbel: pinned draws [d, 2]. Returns the soft mask [d].
template <typename T>
typename Graph<T>::Val gumbel_soft_mask(Graph<T>& g, typename Graph<T>::Val probs,
                                        const Tensor<T>& gumbel, T tau) {
    auto logc = g.log_floored(probs, T(1e-12));
    auto noisy = g.scale(g.add_const(logc, gumbel), T(1) / tau);
    auto soft = g.softmax_rows(noisy);  // [d, 2]
    return g.col(soft, 1);
}

struct FrfOutput {
    int masked_node = -1;  // graph Val index of the masked node set
    int mask_node = -1;    // graph Val index of the mask (train mode only)
    std::vector<double> mask_values;
};

// mode train: soft differentiable mask; mode infer: hard threshold c1 >= 0.5.
template <typename T>
FrfOutput redundancy_filter(Graph<T>& g, const ParamStore<T>& ps, const ModelConfig& cfg,
                            InputType type, typename Graph<T>::Val z, bool train_mode,
                            const Tensor<T>* gumbel) {
    FrfOutput out;
    if (train_mode) {
        auto probs = frf_probabilities(g, ps, type, z);
        auto mask = gumbel_soft_mask(g, probs, *gumbel, static_cast<T>(cfg.tau));
        auto masked = g.scale_columns(z, mask);
        out.masked_node = masked.i;
        out.mask_node = mask.i;
        const auto& mv = g.value(mask);
        out.mask_values.assign(mv.data.begin(), mv.data.end());
        return out;
    }
    // Deterministic threshold mask computed outside the tape.
    const Tensor<T>& zv = g.value(z);
    std::string base = std::string("frf.") + type_name(type);
    const Tensor<T>& w = ps.at(base + ".w").value;
    const Tensor<T>& b = ps.at(base + ".b").value;
    int p = zv.dim(0), d = zv.dim(1);
    std::vector<T> mask(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        T l0 = b[0], l1 = b[1];
        for (int r = 0; r < p; ++r) {
            l0 += zv.at(r, i) * w.at(r, 0);
            l1 += zv.at(r, i) * w.at(r, 1);
        }
        // two-way softmax threshold: c1 >= 0.5 iff l1 >= l0
        mask[static_cast<size_t>(i)] = l1 >= l0 ? T(1) : T(0);
    }
    auto masked = g.scale_columns_const(z, mask);
    out.masked_node = masked.i;
    out.mask_values.assign(mask.begin(), mask.end());
    return out;
}

// Data reliability scores (Algorithm of the noise-perturbation variance kind):
// for each input type and noise level j in {1,2,3}, perturb Z elementwise by
// Z*(G+1)*j with fresh standard Gaussian G, run the type's classifier, take
// the per-class variance of the softmax outputs across levels, reduce to
// max-min over classes, and return 1 - softmax over the per-type reductions.
// Evaluation only: callers treat the scores as constants in the forward pass.
template <typename T>
std::vector<double> dra_scores(const std::vector<const Tensor<T>*>& z_values,
                               const std::vector<const Tensor<T>*>& cls_w,
                               const std::vector<const Tensor<T>*>& cls_b, int num_classes,
                               const std::vector<uint64_t>& type_seeds) {
    size_t n_types = z_values.size();
    std::vector<double> rel_var(n_types, 0.0);
    for (size_t t = 0; t < n_types; ++t) {
        const Tensor<T>& z = *z_values[t];
        const Tensor<T>& w = *cls_w[t];
        const Tensor<T>& b = *cls_b[t];
        RngStream rng(type_seeds[t]);
        int n = z.numel();
        std::vector<std::vector<double>> probs;
        for (int level = 1; level <= 3; ++level) {
            std::vector<double> logits(static_cast<size_t>(num_classes));
            for (int c = 0; c < num_classes; ++c) logits[static_cast<size_t>(c)] = static_cast<double>(b[c]);
            for (int i = 0; i < n; ++i) {
                double perturbed = static_cast<double>(z[i]) * (rng.gaussian() + 1.0) * level;
                for (int c = 0; c < num_classes; ++c)
                    logits[static_cast<size_t>(c)] +=
                        perturbed * static_cast<double>(w.at(i, c));
            }
            double mx = logits[0];
            for (double v : logits) mx = std::max(mx, v);
            double denom = 0;
            for (double& v : logits) {
                v = std::exp(v - mx);
                denom += v;
            }
            for (double& v : logits) v /= denom;
            probs.push_back(std::move(logits));
        }
        double worst = -1e300, best = 1e300;
        for (int c = 0; c < num_classes; ++c) {
            double mean = 0;
            for (int j = 0; j < 3; ++j) mean += probs[static_cast<size_t>(j)][static_cast<size_t>(c)];
            mean /= 3.0;
            double var = 0;
            for (int j = 0; j < 3; ++j) {
                double d = probs[static_cast<size_t>(j)][static_cast<size_t>(c)] - mean;
                var += d * d;
            }
            var /= 3.0;
            worst = std::max(worst, var);
            best = std::min(best, var);
        }
        rel_var[t] = worst - best;
    }
    // scores = 1 - softmax(relative variances)
    double mx = rel_var[0];
    for (double v : rel_var) mx = std::max(mx, v);
    double denom = 0;
    std::vector<double> scores(n_types);
    for (size_t t = 0; t < n_types; ++t) {
        scores[t] = std::exp(rel_var[t] - mx);
        denom += scores[t];
    }
    for (auto& s : scores) s = 1.0 - s / denom;
    return scores;
}

}  // namespace gfef
