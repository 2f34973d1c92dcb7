#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "gfef/graph.hpp"
#include "gfef/rng.hpp"
#include "testutil.hpp"

using gfef::Graph;
using gfef::RngStream;
using gfef::Tensor;
using gfef::testutil::fd_compare;
using gfef::testutil::random_tensor;

namespace {

// Finite-difference check of a tape builder against its own backward pass.
// The builder must read the parameter tensor through the given pointer.
double check_op(const std::function<Graph<double>::Val(Graph<double>&, Graph<double>::Val)>& build,
                Tensor<double> param) {
    Tensor<double> p = param;
    auto eval = [&]() {
        Graph<double> g;
        auto leaf = g.leaf(&p);
        auto loss = build(g, leaf);
        return g.value(loss)[0];
    };
    Graph<double> g;
    auto leaf = g.leaf(&p);
    auto loss = build(g, leaf);
    g.backward(loss);
    std::vector<double> analytic(g.grad(leaf).data.begin(), g.grad(leaf).data.end());
    auto rep = fd_compare(p.data, eval, analytic);
    return rep.max_rel;
}

}  // namespace

TEST_CASE("elementwise and reduction backwards match finite differences") {
    RngStream rng(7);
    Tensor<double> a = random_tensor({4, 5}, rng);
    Tensor<double> b = random_tensor({4, 5}, rng);

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto c = g.constant(b);
                  auto y = g.mul(g.add(p, c), g.sub(p, c));
                  y = g.relu(y);
                  return g.sum_all(y);
              },
              a) < 1e-7);

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto y = g.scale(p, 0.37);
                  return g.sum_all(g.mul(y, y));
              },
              a) < 1e-7);
}

TEST_CASE("matmul / transpose / slicing backwards") {
    RngStream rng(11);
    Tensor<double> a = random_tensor({3, 6}, rng);
    Tensor<double> w = random_tensor({6, 4}, rng);

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto wl = g.constant(w);
                  auto y = g.matmul(p, wl);
                  auto z = g.slice_cols(y, 1, 2);
                  return g.sum_all(g.mul(z, z));
              },
              a) < 1e-7);

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto al = g.constant(a);
                  auto y = g.matmul(al, p);  // grad w.r.t. right operand
                  auto t = g.transpose2d(y);
                  return g.sum_all(g.mul(t, t));
              },
              w) < 1e-7);
}

TEST_CASE("softmax, log_softmax, layernorm backwards") {
    RngStream rng(13);
    Tensor<double> x = random_tensor({5}, rng);
    Tensor<double> m = random_tensor({4, 5}, rng);
    Tensor<double> gain = random_tensor({5}, rng, 0.3);
    Tensor<double> bias = random_tensor({5}, rng, 0.3);
    for (int i = 0; i < gain.numel(); ++i) gain[i] += 1.0;

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto s = g.softmax_vec(p);
                  auto l = g.log_floored(s, 1e-12);
                  return g.dot(s, l);
              },
              x) < 1e-6);

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto lp = g.log_softmax_vec(p);
                  return g.scale(g.pick(lp, 2), -1.0);
              },
              x) < 1e-7);

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto gn = g.constant(gain);
                  auto bs = g.constant(bias);
                  auto y = g.layernorm_rows(p, gn, bs);
                  return g.sum_all(g.mul(y, y));
              },
              m) < 1e-6);

    // gradient through the gain
    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto xm = g.constant(m);
                  auto bs = g.constant(bias);
                  auto y = g.layernorm_rows(xm, p, bs);
                  return g.sum_all(g.mul(y, y));
              },
              gain) < 1e-6);
}

TEST_CASE("conv1d backward (kernel, bias, input)") {
    RngStream rng(17);
    Tensor<double> x = random_tensor({2, 12}, rng);
    Tensor<double> k = random_tensor({3, 2, 5}, rng, 0.5);
    Tensor<double> b = random_tensor({3}, rng, 0.2);

    auto loss_of = [&](Graph<double>& g, Graph<double>::Val xv, Graph<double>::Val kv,
                       Graph<double>::Val bv) {
        auto y = g.conv1d_same(xv, kv, bv);
        y = g.relu(y);
        return g.sum_all(g.mul(y, y));
    };

    CHECK(check_op([&](Graph<double>& g, Graph<double>::Val p) {
              return loss_of(g, p, g.constant(k), g.constant(b));
          }, x) < 1e-6);
    CHECK(check_op([&](Graph<double>& g, Graph<double>::Val p) {
              return loss_of(g, g.constant(x), p, g.constant(b));
          }, k) < 1e-6);
    CHECK(check_op([&](Graph<double>& g, Graph<double>::Val p) {
              return loss_of(g, g.constant(x), g.constant(k), p);
          }, b) < 1e-6);
}

TEST_CASE("conv2d stride-2 backward") {
    RngStream rng(19);
    Tensor<double> x = random_tensor({2, 8, 8}, rng);
    Tensor<double> k = random_tensor({3, 2, 3, 3}, rng, 0.5);
    Tensor<double> b = random_tensor({3}, rng, 0.2);

    auto loss_of = [&](Graph<double>& g, Graph<double>::Val xv, Graph<double>::Val kv,
                       Graph<double>::Val bv) {
        auto y = g.conv2d_s2(xv, kv, bv);
        return g.sum_all(g.mul(y, y));
    };

    CHECK(check_op([&](Graph<double>& g, Graph<double>::Val p) {
              return loss_of(g, p, g.constant(k), g.constant(b));
          }, x) < 1e-6);
    CHECK(check_op([&](Graph<double>& g, Graph<double>::Val p) {
              return loss_of(g, g.constant(x), p, g.constant(b));
          }, k) < 1e-6);
}

TEST_CASE("group_weighted_sum backward") {
    RngStream rng(23);
    Tensor<double> x = random_tensor({6, 4}, rng);
    Tensor<double> att = random_tensor({6}, rng, 0.5);
    auto groups = std::make_shared<std::vector<std::vector<int>>>(
        std::vector<std::vector<int>>{{0, 1, 2}, {3}, {1, 4, 5}, {0, 5}, {2, 3, 4}, {5}});

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto a = g.constant(att);
                  auto y = g.group_weighted_sum(p, a, groups);
                  return g.sum_all(g.mul(y, y));
              },
              x) < 1e-6);
    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto xv = g.constant(x);
                  auto y = g.group_weighted_sum(xv, p, groups);
                  return g.sum_all(g.mul(y, y));
              },
              att) < 1e-6);
}

TEST_CASE("scale_columns and concat_rows backward") {
    RngStream rng(29);
    Tensor<double> z = random_tensor({3, 4}, rng);
    Tensor<double> s = random_tensor({4}, rng, 0.5);
    Tensor<double> z2 = random_tensor({2, 4}, rng);

    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto sv = g.constant(s);
                  auto y = g.scale_columns(p, sv);
                  auto cat = g.concat_rows({y, g.constant(z2)});
                  return g.sum_all(g.mul(cat, cat));
              },
              z) < 1e-7);
    CHECK(check_op(
              [&](Graph<double>& g, Graph<double>::Val p) {
                  auto zv = g.constant(z);
                  auto y = g.scale_columns(zv, p);
                  return g.sum_all(g.mul(y, y));
              },
              s) < 1e-7);
}

TEST_CASE("cross entropy value and gradient") {
    Graph<double> g;
    Tensor<double> logits({3}, {1.0, 2.0, 0.5});
    auto p = g.leaf(&logits);
    auto ce = g.cross_entropy(p, 1);
    // -log softmax(logits)[1]
    double denom = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
    CHECK(g.value(ce)[0] == doctest::Approx(-std::log(std::exp(2.0) / denom)).epsilon(1e-12));
    g.backward(ce);
    // grad = softmax - onehot
    CHECK(g.grad(p)[0] == doctest::Approx(std::exp(1.0) / denom).epsilon(1e-12));
    CHECK(g.grad(p)[1] == doctest::Approx(std::exp(2.0) / denom - 1.0).epsilon(1e-12));
}

TEST_CASE("no_grad tape tracks nothing") {
    Graph<double> g;
    g.set_no_grad(true);
    Tensor<double> x({2, 2}, {1, 2, 3, 4});
    auto p = g.leaf(&x);
    auto y = g.sum_all(g.mul(p, p));
    CHECK(g.value(y)[0] == doctest::Approx(30.0));
    CHECK_FALSE(g.tracked(y));
}
