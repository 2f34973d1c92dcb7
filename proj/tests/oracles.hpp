#pragma once

// Independent reference implementations used by unit and acceptance tests.
// These deliberately take different algorithmic routes from the library:
// polynomial fits go through normal equations in long double (the library
// uses Householder QR in double), repeated-subsequence search is exhaustive
// (the library binary-searches), and the rasterization oracle samples the
// continuous polyline densely instead of stepping Bresenham.

#include <array>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "gfef/dataset.hpp"
#include "gfef/features.hpp"

namespace gfef::oracle {

inline std::vector<long double> polyfit_normal_equations(const std::vector<double>& series,
                                                         int degree) {
    int t_len = static_cast<int>(series.size());
    int m = degree + 1;
    std::vector<std::vector<long double>> ata(m, std::vector<long double>(m, 0.0L));
    std::vector<long double> aty(m, 0.0L);
    for (int i = 1; i <= t_len; ++i) {
        long double x = static_cast<long double>(i) / t_len;
        std::vector<long double> row(m);
        long double p = 1.0L;
        for (int k = 0; k < m; ++k) {
            row[k] = p;
            p *= x;
        }
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) ata[r][c] += row[r] * row[c];
            aty[r] += row[r] * series[i - 1];
        }
    }
    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::fabs(static_cast<double>(ata[r][col])) >
                std::fabs(static_cast<double>(ata[piv][col])))
                piv = r;
        std::swap(ata[piv], ata[col]);
        std::swap(aty[piv], aty[col]);
        for (int r = col + 1; r < m; ++r) {
            long double f = ata[r][col] / ata[col][col];
            for (int c = col; c < m; ++c) ata[r][c] -= f * ata[col][c];
            aty[r] -= f * aty[col];
        }
    }
    std::vector<long double> coef(m);
    for (int r = m - 1; r >= 0; --r) {
        long double s = aty[r];
        for (int c = r + 1; c < m; ++c) s -= ata[r][c] * coef[c];
        coef[r] = s / ata[r][r];
    }
    return coef;
}

inline std::vector<long double> polyvalues(const std::vector<long double>& coef, int t_len) {
    std::vector<long double> out(t_len);
    for (int i = 1; i <= t_len; ++i) {
        long double x = static_cast<long double>(i) / t_len;
        long double acc = 0.0L, p = 1.0L;
        for (long double c : coef) {
            acc += c * p;
            p *= x;
        }
        out[i - 1] = acc;
    }
    return out;
}

// Exhaustive search over all window pairs and lengths, no binary search.
inline int longest_repeat_exhaustive(const std::vector<double>& series, int i, double eps) {
    int best = 0;
    for (int len = 1; len <= i - 1; ++len) {
        bool found = false;
        for (int p = 0; p + len <= i && !found; ++p) {
            for (int q = p + 1; q + len <= i && !found; ++q) {
                bool eq = true;
                for (int k = 0; k < len; ++k) {
                    if (std::fabs(series[p + k] - series[q + k]) > eps) {
                        eq = false;
                        break;
                    }
                }
                if (eq) found = true;
            }
        }
        if (found) best = len;
    }
    return best;
}

inline std::array<double, 12> expert_features_reference(const std::vector<double>& series,
                                                        double eps = 1e-9) {
    int t_len = static_cast<int>(series.size());
    std::array<double, 12> f{};
    double mn = series[0], mx = series[0], mxabs = 0.0;
    for (double v : series) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        mxabs = std::max(mxabs, std::fabs(v));
    }
    f[0] = mx - mn;
    f[1] = mxabs;
    bool constant = true;
    for (double v : series)
        if (std::fabs(v - series[0]) > eps) constant = false;
    f[2] = constant ? 1.0 : 0.0;
    f[3] = longest_repeat_exhaustive(series, t_len, eps) > t_len / 2.0 ? 1.0 : 0.0;
    double step = 0.0;
    for (int i = 1; i < t_len; ++i) step = std::max(step, std::fabs(series[i] - series[i - 1]));
    f[4] = step;

    auto v5 = polyvalues(polyfit_normal_equations(series, 5), t_len);
    auto c2 = polyfit_normal_equations(series, 2);
    auto v2 = polyvalues(c2, t_len);
    auto c3 = polyfit_normal_equations(series, 3);

    int mid = t_len / 2;
    long double s6 = 0, s7 = 0, s8 = 0;
    for (int i = 1; i <= t_len; ++i) {
        long double r = series[i - 1] - v5[i - 1];
        r *= r;
        s8 += r;
        if (i < mid) s6 += r;
        if (i == mid) {
            s6 += 0.5L * r;
            s7 += 0.5L * r;
        }
        if (i > mid) s7 += r;
    }
    f[5] = static_cast<double>(2.0L / t_len * s6);
    f[6] = static_cast<double>(2.0L / t_len * s7);
    f[7] = static_cast<double>(1.0L / t_len * s8);

    int quarter = (t_len + 3) / 4;
    long double s9 = 0, s10 = 0;
    for (int i = quarter; i <= t_len; ++i) {
        long double r5 = series[i - 1] - v5[i - 1];
        long double r2 = series[i - 1] - v2[i - 1];
        s9 += r5 * r5;
        s10 += r2 * r2;
    }
    f[8] = static_cast<double>(4.0L / (3.0L * t_len) * s9);
    f[9] = static_cast<double>(4.0L / (3.0L * t_len) * s10);
    f[10] = static_cast<double>(c2[2]);

    double a2 = static_cast<double>(c3[2]), a3 = static_cast<double>(c3[3]);
    double sign = a3 < 0.0 ? -1.0 : 1.0;
    double a3c = sign * std::max(std::fabs(a3), 1e-8 * std::max(1.0, std::fabs(a2)));
    f[11] = -a2 / (3.0 * a3c) - a2 * a2 / (3.0 * a3c * a3c);
    return f;
}

// Dense floating-point sampling of the continuous polyline; the lit-pixel set
// to compare against Bresenham output on straight ramps.
inline std::set<std::pair<int, int>> sampled_polyline_pixels(const std::vector<double>& series,
                                                             int samples_per_col = 10) {
    int t_len = static_cast<int>(series.size());
    double mn = series[0], mx = series[0];
    for (double v : series) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    double range = mx - mn;
    const int last = CurveImage::kSize - 1;
    int n = samples_per_col * CurveImage::kSize;
    std::set<std::pair<int, int>> pixels;
    for (int s = 0; s < n; ++s) {
        double u = static_cast<double>(s) / (n - 1);
        double pos = u * (t_len - 1);  // 0-based fractional index
        int i0 = static_cast<int>(pos);
        double frac = pos - i0;
        double v = i0 + 1 < t_len ? series[i0] * (1.0 - frac) + series[i0 + 1] * frac
                                  : series[i0];
        int colv = static_cast<int>(std::lround(last * u));
        int row = range < 1e-12
                      ? CurveImage::kSize / 2
                      : last - static_cast<int>(std::lround(last * (v - mn) / range));
        pixels.insert({row, colv});
    }
    return pixels;
}

// Brute-force 1-nearest-neighbor on raw series (Euclidean).
inline double one_nn_accuracy(const Dataset& train, const Dataset& test) {
    int correct = 0;
    for (const auto& q : test.instances) {
        double best = 1e300;
        int lab = -1;
        for (const auto& r : train.instances) {
            double d = 0;
            for (size_t i = 0; i < q.values.size(); ++i) {
                double diff = q.values[i] - r.values[i];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                lab = r.label;
            }
        }
        if (lab == q.label) ++correct;
    }
    return static_cast<double>(correct) / test.instances.size();
}

}  // namespace gfef::oracle
