#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gfef/encoders.hpp"
#include "gfef/graph.hpp"
#include "gfef/params.hpp"
#include "gfef/rng.hpp"
#include "testutil.hpp"

using gfef::Graph;
using gfef::Init;
using gfef::InputType;
using gfef::ModelConfig;
using gfef::ParamStore;
using gfef::RngStream;
using gfef::Tensor;

namespace {

ModelConfig config_for_length(int t_len) {
    ModelConfig cfg;
    cfg.series_length = t_len;
    return cfg;
}

Tensor<double> random_series(int t_len, uint64_t seed) {
    RngStream rng(seed);
    Tensor<double> x({1, t_len});
    for (int i = 0; i < t_len; ++i) x[i] = rng.gaussian();
    return x;
}

// FD check over one named parameter tensor of an encoder pipeline.
double fd_param(ParamStore<double>& ps, const std::string& name,
                const std::function<double()>& eval, const Tensor<double>& analytic) {
    auto& entry = ps.at(name);
    double worst = 0.0;
    RngStream rng(123);
    int n = entry.value.numel();
    int checks = std::min(6, n);
    for (int t = 0; t < checks; ++t) {
        int idx = rng.uniform_int(0, n - 1);
        worst = std::max(worst, gfef::testutil::fd_entry(entry.value[idx], eval, analytic[idx]));
    }
    return worst;
}

}  // namespace

TEST_CASE("kernel plan covers 128 channels and skips oversized kernels") {
    auto plan = gfef::oscnn_branches(101, 128);
    int total = 0;
    for (auto [k, ch] : plan) {
        CHECK(k <= 101);
        total += ch;
    }
    CHECK(total == 128);
    CHECK(plan.size() == 6);

    auto short_plan = gfef::oscnn_branches(8, 128);
    total = 0;
    for (auto [k, ch] : short_plan) {
        CHECK(k <= 8);
        total += ch;
    }
    CHECK(total == 128);
    CHECK(short_plan.size() == 5);  // kernel 11 skipped
    CHECK(short_plan[0].first == 1);
}

TEST_CASE("series encoder emits 128 features for varying lengths") {
    for (int t_len : {8, 101, 150}) {
        ModelConfig cfg = config_for_length(t_len);
        ParamStore<double> ps(7);
        gfef::add_ts_encoder_params(ps, cfg);
        Graph<double> g;
        auto x = g.constant(random_series(t_len, 99));
        auto feat = gfef::encode_ts(g, ps, cfg, x);
        CHECK(g.value(feat).numel() == 128);
        for (int i = 0; i < 128; ++i) CHECK(std::isfinite(g.value(feat)[i]));
    }
}

TEST_CASE("series encoder output is per-sample deterministic") {
    ModelConfig cfg = config_for_length(64);
    ParamStore<double> ps(3);
    gfef::add_ts_encoder_params(ps, cfg);
    auto x = random_series(64, 5);
    Graph<double> g1, g2;
    auto f1 = gfef::encode_ts(g1, ps, cfg, g1.constant(x));
    auto f2 = gfef::encode_ts(g2, ps, cfg, g2.constant(x));
    CHECK(g1.value(f1).data == g2.value(f2).data);
}

TEST_CASE("series encoder gradients match finite differences on a 3xT batch") {
    ModelConfig cfg = config_for_length(24);
    ParamStore<double> ps(11);
    gfef::add_ts_encoder_params(ps, cfg);
    std::vector<Tensor<double>> xs{random_series(24, 1), random_series(24, 2),
                                   random_series(24, 3)};

    auto eval = [&]() {
        Graph<double> g;
        double total = 0;
        for (auto& x : xs) {
            auto f = gfef::encode_ts(g, ps, cfg, g.constant(x));
            auto loss = g.sum_all(g.mul(f, f));
            total += g.value(loss)[0];
        }
        return total;
    };

    ps.zero_grads();
    {
        Graph<double> g;
        std::vector<Graph<double>::Val> losses;
        for (auto& x : xs) {
            auto f = gfef::encode_ts(g, ps, cfg, g.constant(x));
            losses.push_back(g.sum_all(g.mul(f, f)));
        }
        auto total = g.add(g.add(losses[0], losses[1]), losses[2]);
        g.backward(total);
        g.collect_param_grads([&](int pid, const Tensor<double>& grad) {
            auto& dst = ps.at(pid).grad;
            for (int i = 0; i < grad.numel(); ++i) dst[i] += grad[i];
        });
    }
    for (const std::string name : {"enc_ts.b1.k3.w", "enc_ts.b2.k5.w", "enc_ts.b1.ln.gain"}) {
        CAPTURE(name);
        CHECK(fd_param(ps, name, eval, ps.at(name).grad) < 1e-4);
    }
}

TEST_CASE("image encoder shape, determinism, zero-input bias path") {
    ParamStore<double> ps(13);
    gfef::add_image_encoder_params(ps);
    Tensor<double> zero({3, 64, 64});
    Graph<double> g1, g2;
    auto f1 = gfef::encode_image(g1, ps, g1.constant(zero));
    auto f2 = gfef::encode_image(g2, ps, g2.constant(zero));
    CHECK(g1.value(f1).numel() == 128);
    CHECK(g1.value(f1).data == g2.value(f2).data);

    Graph<double> g3;
    Tensor<double> bad({3, 32, 32});
    CHECK_THROWS_AS(gfef::encode_image(g3, ps, g3.constant(bad)), std::invalid_argument);
}

TEST_CASE("image encoder gradient check") {
    ParamStore<double> ps(17);
    gfef::add_image_encoder_params(ps);
    RngStream rng(55);
    Tensor<double> img({3, 64, 64});
    for (int i = 0; i < img.numel(); ++i) img[i] = rng.uniform01() > 0.9 ? 1.0 : 0.0;

    auto eval = [&]() {
        Graph<double> g;
        auto f = gfef::encode_image(g, ps, g.constant(img));
        return g.value(g.sum_all(g.mul(f, f)))[0];
    };
    ps.zero_grads();
    {
        Graph<double> g;
        auto f = gfef::encode_image(g, ps, g.constant(img));
        g.backward(g.sum_all(g.mul(f, f)));
        g.collect_param_grads([&](int pid, const Tensor<double>& grad) {
            auto& dst = ps.at(pid).grad;
            for (int i = 0; i < grad.numel(); ++i) dst[i] += grad[i];
        });
    }
    for (const std::string name : {"enc_img.conv1.w", "enc_img.conv4.w", "enc_img.conv2.ln.gain"}) {
        CAPTURE(name);
        CHECK(fd_param(ps, name, eval, ps.at(name).grad) < 1e-4);
    }
}

TEST_CASE("expert encoder is affine") {
    ModelConfig cfg;
    ParamStore<double> ps(19);
    gfef::add_expert_encoder_params(ps, cfg);

    Graph<double> g;
    Tensor<double> zero({12});
    auto fz = gfef::encode_expert(g, ps, g.constant(zero));
    const auto& bias = ps.at("enc_exp.b").value;
    for (int i = 0; i < 128; ++i) CHECK(g.value(fz)[i] == bias[i]);

    RngStream rng(2);
    Tensor<double> a({12}), b({12}), ab({12});
    for (int i = 0; i < 12; ++i) {
        a[i] = rng.gaussian();
        b[i] = rng.gaussian();
        ab[i] = a[i] + b[i];
    }
    auto fa = gfef::encode_expert(g, ps, g.constant(a));
    auto fb = gfef::encode_expert(g, ps, g.constant(b));
    auto fab = gfef::encode_expert(g, ps, g.constant(ab));
    for (int i = 0; i < 128; ++i)
        CHECK(g.value(fab)[i] ==
              doctest::Approx(g.value(fa)[i] + g.value(fb)[i] - bias[i]).epsilon(1e-9));

    // gradient of an affine map is exact
    auto eval = [&]() {
        Graph<double> g2;
        auto f = gfef::encode_expert(g2, ps, g2.constant(a));
        return g2.value(g2.sum_all(g2.mul(f, f)))[0];
    };
    ps.zero_grads();
    {
        Graph<double> g2;
        auto f = gfef::encode_expert(g2, ps, g2.constant(a));
        g2.backward(g2.sum_all(g2.mul(f, f)));
        g2.collect_param_grads([&](int pid, const Tensor<double>& grad) {
            auto& dst = ps.at(pid).grad;
            for (int i = 0; i < grad.numel(); ++i) dst[i] += grad[i];
        });
    }
    CHECK(fd_param(ps, "enc_exp.w", eval, ps.at("enc_exp.w").grad) < 1e-6);
}

TEST_CASE("patchify maps element ranges to nodes through one shared affine") {
    ModelConfig cfg;
    ParamStore<double> ps(23);
    gfef::add_patch_params(ps, cfg, InputType::kTs);

    Tensor<double> feat({128});
    for (int i = 0; i < 128; ++i) feat[i] = i;
    Graph<double> g;
    auto nodes = gfef::patchify_project(g, ps, cfg, InputType::kTs, g.constant(feat));
    CHECK(g.value(nodes).dim(0) == 16);
    CHECK(g.value(nodes).dim(1) == 128);

    // projecting patch p alone equals row p of the full output
    const auto& w = ps.at("patch.ts.w").value;
    const auto& b = ps.at("patch.ts.b").value;
    for (int p : {0, 7, 15}) {
        for (int j = 0; j < cfg.hidden; ++j) {
            double manual = b[j];
            for (int l = 0; l < cfg.patch_len; ++l) manual += feat[p * cfg.patch_len + l] * w.at(l, j);
            CHECK(g.value(nodes).at(p, j) == doctest::Approx(manual).epsilon(1e-9));
        }
    }

    Tensor<double> wrong({64});
    CHECK_THROWS_AS(gfef::patchify_project(g, ps, cfg, InputType::kTs, g.constant(wrong)),
                    std::invalid_argument);
}
