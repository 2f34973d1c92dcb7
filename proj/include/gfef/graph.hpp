#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "gfef/tensor.hpp"

namespace gfef {

// Reverse-mode autodiff tape over dense tensors. One Graph per forward pass;
// nodes are appended in evaluation order and swept in reverse on backward().
// Values of leaf nodes may live outside the tape (model parameters, shared
// structure features) so no copies are made per pass.
template <typename T>
class Graph {
public:
    struct Val {
        int i = -1;
        bool ok() const { return i >= 0; }
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    void clear() {
        nodes_.clear();
        param_uses_.clear();
    }

    // When set, no gradients are tracked anywhere on this tape (inference).
    void set_no_grad(bool v) { no_grad_ = v; }

    // ---- leaves ------------------------------------------------------------

    Val constant(Tensor<T> t) {
        Node n;
        n.value = std::move(t);
        n.track = false;
        return push(std::move(n));
    }

    // External value, gradient tracked (parameters, cross-tape handoffs).
    Val leaf(const Tensor<T>* t) {
        Node n;
        n.ext = t;
        n.track = !no_grad_;
        return push(std::move(n));
    }

    // Parameter leaf tagged with a store id; collect_param_grads() uses the tag.
    Val param(const Tensor<T>* t, int param_id) {
        Val v = leaf(t);
        param_uses_.push_back({v.i, param_id});
        return v;
    }

    const Tensor<T>& value(Val v) const {
        const Node& n = nodes_[v.i];
        return n.ext ? *n.ext : n.value;
    }

    Tensor<T>& grad(Val v) {
        Node& n = nodes_[v.i];
        ensure_grad(n);
        return n.grad;
    }

    bool tracked(Val v) const { return nodes_[v.i].track; }

    // ---- elementwise -------------------------------------------------------

    Val add(Val a, Val b) {
        const Tensor<T>& x = value(a);
        const Tensor<T>& y = value(b);
        assert(x.shape == y.shape);
        Tensor<T> out = x;
        for (int i = 0; i < out.numel(); ++i) out[i] += y[i];
        return make(std::move(out), {a, b}, [this, a, b](const Tensor<T>& g) {
            axpy(a, g, T(1));
            axpy(b, g, T(1));
        });
    }

    Val sub(Val a, Val b) {
        const Tensor<T>& x = value(a);
        const Tensor<T>& y = value(b);
        assert(x.shape == y.shape);
        Tensor<T> out = x;
        for (int i = 0; i < out.numel(); ++i) out[i] -= y[i];
        return make(std::move(out), {a, b}, [this, a, b](const Tensor<T>& g) {
            axpy(a, g, T(1));
            axpy(b, g, T(-1));
        });
    }

    Val mul(Val a, Val b) {
        const Tensor<T>& x = value(a);
        const Tensor<T>& y = value(b);
        assert(x.shape == y.shape);
        Tensor<T> out = x;
        for (int i = 0; i < out.numel(); ++i) out[i] *= y[i];
        return make(std::move(out), {a, b}, [this, a, b](const Tensor<T>& g) {
            const Tensor<T>& xv = value(a);
            const Tensor<T>& yv = value(b);
            if (tracked(a)) {
                Tensor<T>& ga = grad(a);
                for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * yv[i];
            }
            if (tracked(b)) {
                Tensor<T>& gb = grad(b);
                for (int i = 0; i < g.numel(); ++i) gb[i] += g[i] * xv[i];
            }
        });
    }

    Val scale(Val a, T c) {
        Tensor<T> out = value(a);
        for (int i = 0; i < out.numel(); ++i) out[i] *= c;
        return make(std::move(out), {a}, [this, a, c](const Tensor<T>& g) { axpy(a, g, c); });
    }

    // value add of a fixed tensor (e.g. pinned Gumbel noise); grad passes through.
    Val add_const(Val a, const Tensor<T>& t) {
        const Tensor<T>& x = value(a);
        assert(x.shape == t.shape);
        Tensor<T> out = x;
        for (int i = 0; i < out.numel(); ++i) out[i] += t[i];
        return make(std::move(out), {a}, [this, a](const Tensor<T>& g) { axpy(a, g, T(1)); });
    }

    Val relu(Val a) {
        Tensor<T> out = value(a);
        for (int i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
        Val v = make(std::move(out), {a}, nullptr);
        nodes_[v.i].back = [this, a, v](const Tensor<T>& g) {
            if (!tracked(a)) return;
            const Tensor<T>& y = value(v);
            Tensor<T>& ga = grad(a);
            for (int i = 0; i < g.numel(); ++i)
                if (y[i] > T(0)) ga[i] += g[i];
        };
        return v;
    }

    // log with floor inside (subgradient 0 in the clamped region).
    Val log_floored(Val a, T floor_v) {
        const Tensor<T>& x = value(a);
        Tensor<T> out = x;
        for (int i = 0; i < out.numel(); ++i) out[i] = std::log(std::max(out[i], floor_v));
        return make(std::move(out), {a}, [this, a, floor_v](const Tensor<T>& g) {
            if (!tracked(a)) return;
            const Tensor<T>& x = value(a);
            Tensor<T>& ga = grad(a);
            for (int i = 0; i < g.numel(); ++i)
                if (x[i] > floor_v) ga[i] += g[i] / x[i];
        });
    }

    // ---- shape -------------------------------------------------------------

    Val reshape(Val a, std::vector<int> shape) {
        const Tensor<T>& x = value(a);
        assert(Tensor<T>::count(shape) == x.numel());
        Tensor<T> out(std::move(shape), x.data);
        return make(std::move(out), {a}, [this, a](const Tensor<T>& g) { axpy(a, g, T(1)); });
    }

    Val transpose2d(Val a) {
        const Tensor<T>& x = value(a);
        int m = x.dim(0), n = x.dim(1);
        Tensor<T> out({n, m});
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) out.at(c, r) = x.at(r, c);
        return make(std::move(out), {a}, [this, a, m, n](const Tensor<T>& g) {
            if (!tracked(a)) return;
            Tensor<T>& ga = grad(a);
            for (int c = 0; c < n; ++c)
                for (int r = 0; r < m; ++r) ga.at(r, c) += g.at(c, r);
        });
    }

    Val concat_rows(const std::vector<Val>& parts) {
        int n = value(parts[0]).dim(1);
        int rows = 0;
        for (Val p : parts) {
            assert(value(p).dim(1) == n);
            rows += value(p).dim(0);
        }
        Tensor<T> out({rows, n});
        int r0 = 0;
        for (Val p : parts) {
            const Tensor<T>& x = value(p);
            std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<size_t>(r0) * n);
            r0 += x.dim(0);
        }
        std::vector<Val> ins = parts;
        return make(std::move(out), parts, [this, ins, n](const Tensor<T>& g) {
            int r0 = 0;
            for (Val p : ins) {
                int m = value(p).dim(0);
                if (tracked(p)) {
                    Tensor<T>& gp = grad(p);
                    for (int i = 0; i < m * n; ++i) gp[i] += g[r0 * n + i];
                }
                r0 += m;
            }
        });
    }

    Val slice_cols(Val a, int c0, int len) {
        const Tensor<T>& x = value(a);
        int m = x.dim(0), n = x.dim(1);
        Tensor<T> out({m, len});
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < len; ++c) out.at(r, c) = x.at(r, c0 + c);
        return make(std::move(out), {a}, [this, a, c0, len, m](const Tensor<T>& g) {
            if (!tracked(a)) return;
            Tensor<T>& ga = grad(a);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < len; ++c) ga.at(r, c0 + c) += g.at(r, c);
        });
    }

    Val col(Val a, int j) {
        const Tensor<T>& x = value(a);
        int m = x.dim(0);
        Tensor<T> out({m});
        for (int r = 0; r < m; ++r) out[r] = x.at(r, j);
        return make(std::move(out), {a}, [this, a, j, m](const Tensor<T>& g) {
            if (!tracked(a)) return;
            Tensor<T>& ga = grad(a);
            for (int r = 0; r < m; ++r) ga.at(r, j) += g[r];
        });
    }

    // ---- linear algebra ----------------------------------------------------

    Val matmul(Val a, Val b) {
        const Tensor<T>& x = value(a);
        const Tensor<T>& y = value(b);
        int m = x.dim(0), k = x.dim(1), n = y.dim(1);
        assert(y.dim(0) == k);
        Tensor<T> out({m, n});
        for (int i = 0; i < m; ++i) {
            T* orow = &out.data[static_cast<size_t>(i) * n];
            const T* xrow = &x.data[static_cast<size_t>(i) * k];
            for (int p = 0; p < k; ++p) {
                T xv = xrow[p];
                if (xv == T(0)) continue;
                const T* yrow = &y.data[static_cast<size_t>(p) * n];
                for (int j = 0; j < n; ++j) orow[j] += xv * yrow[j];
            }
        }
        return make(std::move(out), {a, b}, [this, a, b, m, k, n](const Tensor<T>& g) {
            const Tensor<T>& x = value(a);
            const Tensor<T>& y = value(b);
            if (tracked(a)) {
                Tensor<T>& ga = grad(a);
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        T s = 0;
                        const T* grow = &g.data[static_cast<size_t>(i) * n];
                        const T* yrow = &y.data[static_cast<size_t>(p) * n];
                        for (int j = 0; j < n; ++j) s += grow[j] * yrow[j];
                        ga.at(i, p) += s;
                    }
            }
            if (tracked(b)) {
                Tensor<T>& gb = grad(b);
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        T xv = x.at(i, p);
                        if (xv == T(0)) continue;
                        T* gbrow = &gb.data[static_cast<size_t>(p) * n];
                        const T* grow = &g.data[static_cast<size_t>(i) * n];
                        for (int j = 0; j < n; ++j) gbrow[j] += xv * grow[j];
                    }
            }
        });
    }

    Val add_bias_rows(Val a, Val b) {  // a: [m,n], b: [n]
        const Tensor<T>& x = value(a);
        const Tensor<T>& bias = value(b);
        int m = x.dim(0), n = x.dim(1);
        assert(bias.numel() == n);
        Tensor<T> out = x;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) out.at(r, c) += bias[c];
        return make(std::move(out), {a, b}, [this, a, b, m, n](const Tensor<T>& g) {
            axpy(a, g, T(1));
            if (tracked(b)) {
                Tensor<T>& gb = grad(b);
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < n; ++c) gb[c] += g.at(r, c);
            }
        });
    }

    // rows(x) * W + b;  x: [m,n], W: [n,p], b: [p] (b optional)
    Val linear_rows(Val x, Val w, Val b) {
        Val y = matmul(x, w);
        return b.ok() ? add_bias_rows(y, b) : y;
    }

    // vector variant: x: [n] -> [p]
    Val linear_vec(Val x, Val w, Val b) {
        Val xr = reshape(x, {1, value(x).numel()});
        Val y = linear_rows(xr, w, b);
        return reshape(y, {value(w).dim(1)});
    }

    Val row_sums(Val a) {
        const Tensor<T>& x = value(a);
        int m = x.dim(0), n = x.dim(1);
        Tensor<T> out({m});
        for (int r = 0; r < m; ++r) {
            T s = 0;
            for (int c = 0; c < n; ++c) s += x.at(r, c);
            out[r] = s;
        }
        return make(std::move(out), {a}, [this, a, m, n](const Tensor<T>& g) {
            if (!tracked(a)) return;
            Tensor<T>& ga = grad(a);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) ga.at(r, c) += g[r];
        });
    }

    Val sum_all(Val a) {
        const Tensor<T>& x = value(a);
        T s = 0;
        for (int i = 0; i < x.numel(); ++i) s += x[i];
        Tensor<T> out({1});
        out[0] = s;
        return make(std::move(out), {a}, [this, a](const Tensor<T>& g) {
            if (!tracked(a)) return;
            Tensor<T>& ga = grad(a);
            for (int i = 0; i < ga.numel(); ++i) ga[i] += g[0];
        });
    }

    Val dot(Val a, Val b) { return sum_all(mul(a, b)); }

    Val pick(Val a, int idx) {
        const Tensor<T>& x = value(a);
        Tensor<T> out({1});
        out[0] = x[idx];
        return make(std::move(out), {a}, [this, a, idx](const Tensor<T>& g) {
            if (tracked(a)) grad(a)[idx] += g[0];
        });
    }

    Val mean_dim1(Val a) {  // [C, L] -> [C]
        const Tensor<T>& x = value(a);
        int ch = x.dim(0), l = x.numel() / ch;
        Tensor<T> out({ch});
        for (int c = 0; c < ch; ++c) {
            T s = 0;
            const T* row = &x.data[static_cast<size_t>(c) * l];
            for (int t = 0; t < l; ++t) s += row[t];
            out[c] = s / static_cast<T>(l);
        }
        return make(std::move(out), {a}, [this, a, ch, l](const Tensor<T>& g) {
            if (!tracked(a)) return;
            Tensor<T>& ga = grad(a);
            for (int c = 0; c < ch; ++c) {
                T gv = g[c] / static_cast<T>(l);
                T* row = &ga.data[static_cast<size_t>(c) * l];
                for (int t = 0; t < l; ++t) row[t] += gv;
            }
        });
    }

    // ---- normalization / softmax -------------------------------------------

    Val softmax_vec(Val a) {
        const Tensor<T>& x = value(a);
        Tensor<T> out = x;
        softmax_inplace(out.data.data(), out.numel());
        Val v = make(std::move(out), {a}, nullptr);
        nodes_[v.i].back = [this, a, v](const Tensor<T>& g) {
            if (!tracked(a)) return;
            const Tensor<T>& y = value(v);
            Tensor<T>& ga = grad(a);
            T s = 0;
            for (int i = 0; i < y.numel(); ++i) s += g[i] * y[i];
            for (int i = 0; i < y.numel(); ++i) ga[i] += y[i] * (g[i] - s);
        };
        return v;
    }

    Val softmax_rows(Val a) {
        const Tensor<T>& x = value(a);
        int m = x.dim(0), n = x.dim(1);
        Tensor<T> out = x;
        for (int r = 0; r < m; ++r) softmax_inplace(&out.data[static_cast<size_t>(r) * n], n);
        Val v = make(std::move(out), {a}, nullptr);
        nodes_[v.i].back = [this, a, v, m, n](const Tensor<T>& g) {
            if (!tracked(a)) return;
            const Tensor<T>& y = value(v);
            Tensor<T>& ga = grad(a);
            for (int r = 0; r < m; ++r) {
                T s = 0;
                for (int c = 0; c < n; ++c) s += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < n; ++c) ga.at(r, c) += y.at(r, c) * (g.at(r, c) - s);
            }
        };
        return v;
    }

    Val log_softmax_vec(Val a) {
        const Tensor<T>& x = value(a);
        int n = x.numel();
        Tensor<T> out = x;
        T mx = out[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, out[i]);
        T lse = 0;
        for (int i = 0; i < n; ++i) lse += std::exp(out[i] - mx);
        lse = mx + std::log(lse);
        for (int i = 0; i < n; ++i) out[i] -= lse;
        Val v = make(std::move(out), {a}, nullptr);
        nodes_[v.i].back = [this, a, v, n](const Tensor<T>& g) {
            if (!tracked(a)) return;
            const Tensor<T>& y = value(v);
            Tensor<T>& ga = grad(a);
            T s = 0;
            for (int i = 0; i < n; ++i) s += g[i];
            for (int i = 0; i < n; ++i) ga[i] += g[i] - std::exp(y[i]) * s;
        };
        return v;
    }

    // LayerNorm over each row of [m,n]; gain/bias: [n].
    Val layernorm_rows(Val a, Val gain, Val bias, T eps = T(1e-5)) {
        const Tensor<T>& x = value(a);
        int m = x.dim(0), n = x.dim(1);
        Tensor<T> out({m, n});
        Tensor<T> norm({m, n});  // normalized pre-affine values, kept for backward
        Tensor<T> inv_sigma({m});
        const Tensor<T>& gv = value(gain);
        const Tensor<T>& bv = value(bias);
        for (int r = 0; r < m; ++r) {
            const T* row = &x.data[static_cast<size_t>(r) * n];
            T mu = 0;
            for (int c = 0; c < n; ++c) mu += row[c];
            mu /= static_cast<T>(n);
            T var = 0;
            for (int c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
            var /= static_cast<T>(n);
            T is = T(1) / std::sqrt(var + eps);
            inv_sigma[r] = is;
            for (int c = 0; c < n; ++c) {
                T y = (row[c] - mu) * is;
                norm.at(r, c) = y;
                out.at(r, c) = y * gv[c] + bv[c];
            }
        }
        auto norm_p = std::make_shared<Tensor<T>>(std::move(norm));
        auto is_p = std::make_shared<Tensor<T>>(std::move(inv_sigma));
        return make(std::move(out), {a, gain, bias},
                    [this, a, gain, bias, m, n, norm_p, is_p](const Tensor<T>& g) {
                        const Tensor<T>& gv = value(gain);
                        if (tracked(gain)) {
                            Tensor<T>& gg = grad(gain);
                            for (int r = 0; r < m; ++r)
                                for (int c = 0; c < n; ++c) gg[c] += g.at(r, c) * norm_p->at(r, c);
                        }
                        if (tracked(bias)) {
                            Tensor<T>& gb = grad(bias);
                            for (int r = 0; r < m; ++r)
                                for (int c = 0; c < n; ++c) gb[c] += g.at(r, c);
                        }
                        if (tracked(a)) {
                            Tensor<T>& ga = grad(a);
                            for (int r = 0; r < m; ++r) {
                                T mean_h = 0, mean_hy = 0;
                                for (int c = 0; c < n; ++c) {
                                    T h = g.at(r, c) * gv[c];
                                    mean_h += h;
                                    mean_hy += h * norm_p->at(r, c);
                                }
                                mean_h /= static_cast<T>(n);
                                mean_hy /= static_cast<T>(n);
                                T is = (*is_p)[r];
                                for (int c = 0; c < n; ++c) {
                                    T h = g.at(r, c) * gv[c];
                                    ga.at(r, c) += (h - mean_h - norm_p->at(r, c) * mean_hy) * is;
                                }
                            }
                        }
                    });
    }

    Val layernorm_vec(Val a, Val gain, Val bias, T eps = T(1e-5)) {
        int n = value(a).numel();
        return reshape(layernorm_rows(reshape(a, {1, n}), gain, bias, eps), {n});
    }

    // LayerNorm across channels at each position: x [C, L] normalized per column.
    Val layernorm_channels(Val a, Val gain, Val bias, T eps = T(1e-5)) {
        Val xt = transpose2d(a);  // [L, C]
        Val yt = layernorm_rows(xt, gain, bias, eps);
        return transpose2d(yt);
    }

    // ---- convolutions --------------------------------------------------------

    // 1-D same-convolution. x: [Cin, L], k: [Cout, Cin, K], b: [Cout] -> [Cout, L].
    // pad_left = (K-1)/2 so even kernels pad one extra on the right.
    Val conv1d_same(Val x, Val k, Val b) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& kv = value(k);
        const Tensor<T>& bv = value(b);
        int cin = xv.dim(0), len = xv.dim(1);
        int cout = kv.dim(0), ksz = kv.dim(2);
        assert(kv.dim(1) == cin && bv.numel() == cout);
        int pl = (ksz - 1) / 2;
        Tensor<T> out({cout, len});
        for (int oc = 0; oc < cout; ++oc) {
            T* orow = &out.data[static_cast<size_t>(oc) * len];
            for (int t = 0; t < len; ++t) orow[t] = bv[oc];
            for (int ic = 0; ic < cin; ++ic) {
                const T* xrow = &xv.data[static_cast<size_t>(ic) * len];
                const T* krow = &kv.data[(static_cast<size_t>(oc) * cin + ic) * ksz];
                for (int dk = 0; dk < ksz; ++dk) {
                    T w = krow[dk];
                    int off = dk - pl;
                    int t0 = std::max(0, -off), t1 = std::min(len, len - off);
                    for (int t = t0; t < t1; ++t) orow[t] += w * xrow[t + off];
                }
            }
        }
        return make(std::move(out), {x, k, b},
                    [this, x, k, b, cin, len, cout, ksz, pl](const Tensor<T>& g) {
                        const Tensor<T>& xv = value(x);
                        const Tensor<T>& kv = value(k);
                        if (tracked(b)) {
                            Tensor<T>& gb = grad(b);
                            for (int oc = 0; oc < cout; ++oc) {
                                T s = 0;
                                const T* grow = &g.data[static_cast<size_t>(oc) * len];
                                for (int t = 0; t < len; ++t) s += grow[t];
                                gb[oc] += s;
                            }
                        }
                        if (tracked(k)) {
                            Tensor<T>& gk = grad(k);
                            for (int oc = 0; oc < cout; ++oc) {
                                const T* grow = &g.data[static_cast<size_t>(oc) * len];
                                for (int ic = 0; ic < cin; ++ic) {
                                    const T* xrow = &xv.data[static_cast<size_t>(ic) * len];
                                    T* krow = &gk.data[(static_cast<size_t>(oc) * cin + ic) * ksz];
                                    for (int dk = 0; dk < ksz; ++dk) {
                                        int off = dk - pl;
                                        int t0 = std::max(0, -off), t1 = std::min(len, len - off);
                                        T s = 0;
                                        for (int t = t0; t < t1; ++t) s += grow[t] * xrow[t + off];
                                        krow[dk] += s;
                                    }
                                }
                            }
                        }
                        if (tracked(x)) {
                            Tensor<T>& gx = grad(x);
                            for (int oc = 0; oc < cout; ++oc) {
                                const T* grow = &g.data[static_cast<size_t>(oc) * len];
                                for (int ic = 0; ic < cin; ++ic) {
                                    T* xrow = &gx.data[static_cast<size_t>(ic) * len];
                                    const T* krow = &kv.data[(static_cast<size_t>(oc) * cin + ic) * ksz];
                                    for (int dk = 0; dk < ksz; ++dk) {
                                        T w = krow[dk];
                                        int off = dk - pl;
                                        int t0 = std::max(0, -off), t1 = std::min(len, len - off);
                                        for (int t = t0; t < t1; ++t) xrow[t + off] += w * grow[t];
                                    }
                                }
                            }
                        }
                    });
    }

    // 3x3 stride-2 pad-1 convolution. x: [Cin, H, W] -> [Cout, H/2, W/2].
    Val conv2d_s2(Val x, Val k, Val b) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& kv = value(k);
        const Tensor<T>& bv = value(b);
        int cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
        int cout = kv.dim(0);
        assert(kv.dim(1) == cin && kv.dim(2) == 3 && kv.dim(3) == 3);
        int oh = (h + 1) / 2, ow = (w + 1) / 2;
        Tensor<T> out({cout, oh, ow});
        for (int oc = 0; oc < cout; ++oc) {
            T* oplane = &out.data[static_cast<size_t>(oc) * oh * ow];
            for (int i = 0; i < oh * ow; ++i) oplane[i] = bv[oc];
            for (int ic = 0; ic < cin; ++ic) {
                const T* xplane = &xv.data[static_cast<size_t>(ic) * h * w];
                const T* kk = &kv.data[(static_cast<size_t>(oc) * cin + ic) * 9];
                for (int r = 0; r < oh; ++r) {
                    for (int c = 0; c < ow; ++c) {
                        T s = 0;
                        int ib = 2 * r - 1, jb = 2 * c - 1;
                        for (int dr = 0; dr < 3; ++dr) {
                            int ii = ib + dr;
                            if (ii < 0 || ii >= h) continue;
                            for (int dc = 0; dc < 3; ++dc) {
                                int jj = jb + dc;
                                if (jj < 0 || jj >= w) continue;
                                s += kk[dr * 3 + dc] * xplane[ii * w + jj];
                            }
                        }
                        oplane[r * ow + c] += s;
                    }
                }
            }
        }
        return make(std::move(out), {x, k, b},
                    [this, x, k, b, cin, h, w, cout, oh, ow](const Tensor<T>& g) {
                        const Tensor<T>& xv = value(x);
                        const Tensor<T>& kv = value(k);
                        if (tracked(b)) {
                            Tensor<T>& gb = grad(b);
                            for (int oc = 0; oc < cout; ++oc) {
                                T s = 0;
                                const T* gp = &g.data[static_cast<size_t>(oc) * oh * ow];
                                for (int i = 0; i < oh * ow; ++i) s += gp[i];
                                gb[oc] += s;
                            }
                        }
                        for (int oc = 0; oc < cout; ++oc) {
                            const T* gp = &g.data[static_cast<size_t>(oc) * oh * ow];
                            for (int ic = 0; ic < cin; ++ic) {
                                const T* xplane = &xv.data[static_cast<size_t>(ic) * h * w];
                                const T* kk = &kv.data[(static_cast<size_t>(oc) * cin + ic) * 9];
                                T* gkk = tracked(k)
                                             ? &grad(k).data[(static_cast<size_t>(oc) * cin + ic) * 9]
                                             : nullptr;
                                T* gxp = tracked(x)
                                             ? &grad(x).data[static_cast<size_t>(ic) * h * w]
                                             : nullptr;
                                for (int r = 0; r < oh; ++r) {
                                    for (int c = 0; c < ow; ++c) {
                                        T gv = gp[r * ow + c];
                                        if (gv == T(0)) continue;
                                        int ib = 2 * r - 1, jb = 2 * c - 1;
                                        for (int dr = 0; dr < 3; ++dr) {
                                            int ii = ib + dr;
                                            if (ii < 0 || ii >= h) continue;
                                            for (int dc = 0; dc < 3; ++dc) {
                                                int jj = jb + dc;
                                                if (jj < 0 || jj >= w) continue;
                                                if (gkk) gkk[dr * 3 + dc] += gv * xplane[ii * w + jj];
                                                if (gxp) gxp[ii * w + jj] += gv * kk[dr * 3 + dc];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
    }

    // ---- structured ops ------------------------------------------------------

    // Multiply column j of Z by s[j]; Z: [m,n], s: [n].
    Val scale_columns(Val z, Val s) {
        const Tensor<T>& zv = value(z);
        const Tensor<T>& sv = value(s);
        int m = zv.dim(0), n = zv.dim(1);
        assert(sv.numel() == n);
        Tensor<T> out = zv;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) out.at(r, c) *= sv[c];
        return make(std::move(out), {z, s}, [this, z, s, m, n](const Tensor<T>& g) {
            const Tensor<T>& zv = value(z);
            const Tensor<T>& sv = value(s);
            if (tracked(z)) {
                Tensor<T>& gz = grad(z);
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < n; ++c) gz.at(r, c) += g.at(r, c) * sv[c];
            }
            if (tracked(s)) {
                Tensor<T>& gs = grad(s);
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < n; ++c) gs[c] += g.at(r, c) * zv.at(r, c);
            }
        });
    }

    // Column scaling by a fixed mask (inference-time thresholded mask).
    Val scale_columns_const(Val z, const std::vector<T>& mask) {
        const Tensor<T>& zv = value(z);
        int m = zv.dim(0), n = zv.dim(1);
        assert(static_cast<int>(mask.size()) == n);
        Tensor<T> out = zv;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) out.at(r, c) *= mask[c];
        return make(std::move(out), {z}, [this, z, mask, m, n](const Tensor<T>& g) {
            if (!tracked(z)) return;
            Tensor<T>& gz = grad(z);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) gz.at(r, c) += g.at(r, c) * mask[c];
        });
    }

    // out[i,:] = sum_{k in groups[i]} att[k] * x[k,:]
    // Covers both hyperedge updates (groups = memberships) and node updates
    // (groups = incidence lists).
    Val group_weighted_sum(Val x, Val att, std::shared_ptr<const std::vector<std::vector<int>>> groups) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& av = value(att);
        int n = xv.dim(1);
        int m = static_cast<int>(groups->size());
        Tensor<T> out({m, n});
        for (int i = 0; i < m; ++i) {
            T* orow = &out.data[static_cast<size_t>(i) * n];
            for (int kk : (*groups)[i]) {
                T aw = av[kk];
                const T* xrow = &xv.data[static_cast<size_t>(kk) * n];
                for (int c = 0; c < n; ++c) orow[c] += aw * xrow[c];
            }
        }
        return make(std::move(out), {x, att}, [this, x, att, groups, m, n](const Tensor<T>& g) {
            const Tensor<T>& xv = value(x);
            const Tensor<T>& av = value(att);
            bool tx = tracked(x), ta = tracked(att);
            Tensor<T>* gx = tx ? &grad(x) : nullptr;
            Tensor<T>* ga = ta ? &grad(att) : nullptr;
            for (int i = 0; i < m; ++i) {
                const T* grow = &g.data[static_cast<size_t>(i) * n];
                for (int kk : (*groups)[i]) {
                    if (tx) {
                        T aw = av[kk];
                        T* gxrow = &gx->data[static_cast<size_t>(kk) * n];
                        for (int c = 0; c < n; ++c) gxrow[c] += aw * grow[c];
                    }
                    if (ta) {
                        T s = 0;
                        const T* xrow = &xv.data[static_cast<size_t>(kk) * n];
                        for (int c = 0; c < n; ++c) s += grow[c] * xrow[c];
                        ga->data[kk] += s;
                    }
                }
            }
        });
    }

    // ---- losses ----------------------------------------------------------------

    Val cross_entropy(Val logits, int label) {
        Val lp = log_softmax_vec(logits);
        return scale(pick(lp, label), T(-1));
    }

    // ---- backward ----------------------------------------------------------------

    void backward(Val loss, T seed = T(1)) {
        Tensor<T> s({1});
        s[0] = seed;
        backward_multi({{loss, std::move(s)}});
    }

    void backward_multi(std::vector<std::pair<Val, Tensor<T>>> seeds) {
        int top = -1;
        for (auto& [v, s] : seeds) {
            Node& n = nodes_[v.i];
            ensure_grad(n);
            for (int i = 0; i < s.numel(); ++i) n.grad[i] += s[i];
            top = std::max(top, v.i);
        }
        for (int i = top; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.track || !n.back || n.grad.data.empty()) continue;
            n.back(n.grad);
        }
    }

    // Add tape-local parameter gradients into per-parameter buffers.
    // Visitor signature: (param_id, grad tensor of the leaf).
    void collect_param_grads(const std::function<void(int, const Tensor<T>&)>& sink) {
        for (auto& [node_idx, pid] : param_uses_) {
            Node& n = nodes_[node_idx];
            if (!n.grad.data.empty()) sink(pid, n.grad);
        }
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        const Tensor<T>* ext = nullptr;
        Tensor<T> grad;
        bool track = false;
        std::function<void(const Tensor<T>&)> back;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<int, int>> param_uses_;  // (node index, param id)
    bool no_grad_ = false;

    Val push(Node&& n) {
        nodes_.push_back(std::move(n));
        return Val{static_cast<int>(nodes_.size()) - 1};
    }

    Val make(Tensor<T>&& out, const std::vector<Val>& inputs,
             std::function<void(const Tensor<T>&)> back) {
        Node n;
        n.value = std::move(out);
        if (!no_grad_) {
            for (Val in : inputs)
                if (nodes_[in.i].track) n.track = true;
        }
        if (n.track) n.back = std::move(back);
        return push(std::move(n));
    }

    void ensure_grad(Node& n) {
        if (n.grad.data.empty()) {
            const Tensor<T>& v = n.ext ? *n.ext : n.value;
            n.grad = Tensor<T>(v.shape);
        }
    }

    void axpy(Val a, const Tensor<T>& g, T c) {
        if (!tracked(a)) return;
        Tensor<T>& ga = grad(a);
        for (int i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
    }

    static void softmax_inplace(T* p, int n) {
        T mx = p[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, p[i]);
        T s = 0;
        for (int i = 0; i < n; ++i) {
            p[i] = std::exp(p[i] - mx);
            s += p[i];
        }
        for (int i = 0; i < n; ++i) p[i] /= s;
    }
};

}  // namespace gfef
