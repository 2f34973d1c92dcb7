#pragma once

#include <string>
#include <vector>

#include "gfef/graph.hpp"
#include "gfef/model_config.hpp"
#include "gfef/params.hpp"

namespace gfef {

// Multi-branch kernel plan for the series encoder: primes plus 1, branches
// with kernel larger than the series are skipped, total channels distributed
// evenly with the remainder on the leading branches.
inline std::vector<std::pair<int, int>> oscnn_branches(int t_len, int total_channels) {
    static const int kKernels[] = {1, 2, 3, 5, 7, 11};
    std::vector<int> active;
    for (int k : kKernels)
        if (k <= t_len) active.push_back(k);
    int nb = static_cast<int>(active.size());
    std::vector<std::pair<int, int>> plan;
    int base = total_channels / nb, rem = total_channels % nb;
    for (int i = 0; i < nb; ++i) plan.emplace_back(active[i], base + (i < rem ? 1 : 0));
    return plan;
}

constexpr int kTsBlock1Channels = 64;

template <typename T>
void add_ts_encoder_params(ParamStore<T>& ps, const ModelConfig& cfg) {
    int in_ch = 1;
    int block = 1;
    for (int out_total : {kTsBlock1Channels, cfg.encoder_out()}) {
        for (auto [k, ch] : oscnn_branches(cfg.series_length, out_total)) {
            std::string base = "enc_ts.b" + std::to_string(block) + ".k" + std::to_string(k);
            ps.add(base + ".w", {ch, in_ch, k}, Init::kXavier);
            ps.add(base + ".b", {ch}, Init::kZero);
        }
        std::string ln = "enc_ts.b" + std::to_string(block) + ".ln";
        ps.add(ln + ".gain", {out_total}, Init::kOne);
        ps.add(ln + ".bias", {out_total}, Init::kZero);
        in_ch = out_total;
        ++block;
    }
}

// x: [1, T] -> [encoder_out]
template <typename T>
typename Graph<T>::Val encode_ts(Graph<T>& g, const ParamStore<T>& ps, const ModelConfig& cfg,
                                 typename Graph<T>::Val x) {
    int t_len = g.value(x).dim(1);
    auto cur = x;
    int block = 1;
    for (int out_total : {kTsBlock1Channels, cfg.encoder_out()}) {
        std::vector<typename Graph<T>::Val> branches;
        for (auto [k, ch] : oscnn_branches(cfg.series_length, out_total)) {
            (void)ch;
            std::string base = "enc_ts.b" + std::to_string(block) + ".k" + std::to_string(k);
            auto w = g.param(&ps.at(base + ".w").value, ps.id_of(base + ".w"));
            auto b = g.param(&ps.at(base + ".b").value, ps.id_of(base + ".b"));
            branches.push_back(g.conv1d_same(cur, w, b));
        }
        auto cat = branches.size() == 1 ? branches[0] : g.concat_rows(branches);
        std::string ln = "enc_ts.b" + std::to_string(block) + ".ln";
        auto gain = g.param(&ps.at(ln + ".gain").value, ps.id_of(ln + ".gain"));
        auto bias = g.param(&ps.at(ln + ".bias").value, ps.id_of(ln + ".bias"));
        cur = g.relu(g.layernorm_channels(cat, gain, bias));
        ++block;
    }
    (void)t_len;
    return g.mean_dim1(cur);
}

inline const std::vector<int>& image_encoder_channels() {
    static const std::vector<int> ch{3, 16, 32, 64, 128};
    return ch;
}

template <typename T>
void add_image_encoder_params(ParamStore<T>& ps) {
    const auto& ch = image_encoder_channels();
    for (size_t i = 1; i < ch.size(); ++i) {
        std::string base = "enc_img.conv" + std::to_string(i);
        ps.add(base + ".w", {ch[i], ch[i - 1], 3, 3}, Init::kXavier);
        ps.add(base + ".b", {ch[i]}, Init::kZero);
        ps.add(base + ".ln.gain", {ch[i]}, Init::kOne);
        ps.add(base + ".ln.bias", {ch[i]}, Init::kZero);
    }
}

// img: [3, 64, 64] -> [128]
template <typename T>
typename Graph<T>::Val encode_image(Graph<T>& g, const ParamStore<T>& ps, typename Graph<T>::Val img) {
    const auto& x = g.value(img);
    if (x.ndim() != 3 || x.dim(0) != 3 || x.dim(1) != 64 || x.dim(2) != 64)
        throw std::invalid_argument("encode_image expects a 3x64x64 input");
    const auto& ch = image_encoder_channels();
    auto cur = img;
    int side = 64;
    for (size_t i = 1; i < ch.size(); ++i) {
        std::string base = "enc_img.conv" + std::to_string(i);
        auto w = g.param(&ps.at(base + ".w").value, ps.id_of(base + ".w"));
        auto b = g.param(&ps.at(base + ".b").value, ps.id_of(base + ".b"));
        cur = g.conv2d_s2(cur, w, b);
        side = (side + 1) / 2;
        auto gain = g.param(&ps.at(base + ".ln.gain").value, ps.id_of(base + ".ln.gain"));
        auto bias = g.param(&ps.at(base + ".ln.bias").value, ps.id_of(base + ".ln.bias"));
        cur = g.reshape(cur, {ch[i], side * side});
        cur = g.relu(g.layernorm_channels(cur, gain, bias));
        cur = g.reshape(cur, {ch[i], side, side});
    }
    return g.mean_dim1(g.reshape(cur, {ch.back(), side * side}));
}

template <typename T>
void add_expert_encoder_params(ParamStore<T>& ps, const ModelConfig& cfg) {
    ps.add("enc_exp.w", {12, cfg.encoder_out()}, Init::kXavier);
    ps.add("enc_exp.b", {cfg.encoder_out()}, Init::kZero);
}

// standardized expert vector [12] -> [128]
template <typename T>
typename Graph<T>::Val encode_expert(Graph<T>& g, const ParamStore<T>& ps, typename Graph<T>::Val v) {
    auto w = g.param(&ps.at("enc_exp.w").value, ps.id_of("enc_exp.w"));
    auto b = g.param(&ps.at("enc_exp.b").value, ps.id_of("enc_exp.b"));
    return g.linear_vec(v, w, b);
}

template <typename T>
void add_patch_params(ParamStore<T>& ps, const ModelConfig& cfg, InputType type) {
    std::string base = std::string("patch.") + type_name(type);
    ps.add(base + ".w", {cfg.patch_len, cfg.hidden}, Init::kXavier);
    ps.add(base + ".b", {cfg.hidden}, Init::kZero);
}

// feature [P*L] -> nodes [P, hidden]; node p sources elements [p*L, (p+1)*L)
// and every patch goes through the same per-type affine map.
template <typename T>
typename Graph<T>::Val patchify_project(Graph<T>& g, const ParamStore<T>& ps, const ModelConfig& cfg,
                                        InputType type, typename Graph<T>::Val feature) {
    if (g.value(feature).numel() != cfg.patch_len * cfg.nodes_per_type)
        throw std::invalid_argument("patchify_project: feature length mismatch");
    std::string base = std::string("patch.") + type_name(type);
    auto w = g.param(&ps.at(base + ".w").value, ps.id_of(base + ".w"));
    auto b = g.param(&ps.at(base + ".b").value, ps.id_of(base + ".b"));
    auto patches = g.reshape(feature, {cfg.nodes_per_type, cfg.patch_len});
    return g.linear_rows(patches, w, b);
}

}  // namespace gfef
