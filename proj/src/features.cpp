#include "gfef/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gfef {

int CurveImage::lit_count(int ch) const {
    int n = 0;
    for (int i = 0; i < kSize * kSize; ++i)
        if (pixels[static_cast<size_t>(ch) * kSize * kSize + i] > 0.0) ++n;
    return n;
}

std::vector<double> fit_polynomial(const std::vector<double>& series, int degree) {
    int t_len = static_cast<int>(series.size());
    int m = degree + 1;
    if (degree < 0) throw std::invalid_argument("degree must be >= 0");
    if (t_len < m)
        throw std::invalid_argument("series length " + std::to_string(t_len) +
                                    " too short for degree " + std::to_string(degree));

    // A[i][k] = (i/T)^k, i = 1..T
    std::vector<double> a(static_cast<size_t>(t_len) * m);
    std::vector<double> y(series);
    for (int i = 0; i < t_len; ++i) {
        double x = static_cast<double>(i + 1) / t_len;
        double p = 1.0;
        for (int k = 0; k < m; ++k) {
            a[static_cast<size_t>(i) * m + k] = p;
            p *= x;
        }
    }

    // Householder QR, applying reflectors to y as we go.
    for (int j = 0; j < m; ++j) {
        double norm = 0.0;
        for (int i = j; i < t_len; ++i) norm += a[static_cast<size_t>(i) * m + j] * a[static_cast<size_t>(i) * m + j];
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        double ajj = a[static_cast<size_t>(j) * m + j];
        double alpha = ajj > 0 ? -norm : norm;
        std::vector<double> v(static_cast<size_t>(t_len - j));
        v[0] = ajj - alpha;
        for (int i = j + 1; i < t_len; ++i) v[static_cast<size_t>(i - j)] = a[static_cast<size_t>(i) * m + j];
        double vnorm2 = 0.0;
        for (double vi : v) vnorm2 += vi * vi;
        if (vnorm2 == 0.0) continue;
        for (int c = j; c < m; ++c) {
            double dotv = 0.0;
            for (int i = j; i < t_len; ++i) dotv += v[static_cast<size_t>(i - j)] * a[static_cast<size_t>(i) * m + c];
            double f = 2.0 * dotv / vnorm2;
            for (int i = j; i < t_len; ++i) a[static_cast<size_t>(i) * m + c] -= f * v[static_cast<size_t>(i - j)];
        }
        double doty = 0.0;
        for (int i = j; i < t_len; ++i) doty += v[static_cast<size_t>(i - j)] * y[static_cast<size_t>(i)];
        double f = 2.0 * doty / vnorm2;
        for (int i = j; i < t_len; ++i) y[static_cast<size_t>(i)] -= f * v[static_cast<size_t>(i - j)];
    }

    // Back-substitution on the upper-triangular R.
    std::vector<double> coef(static_cast<size_t>(m));
    for (int j = m - 1; j >= 0; --j) {
        double s = y[static_cast<size_t>(j)];
        for (int c = j + 1; c < m; ++c) s -= a[static_cast<size_t>(j) * m + c] * coef[static_cast<size_t>(c)];
        double d = a[static_cast<size_t>(j) * m + j];
        coef[static_cast<size_t>(j)] = d != 0.0 ? s / d : 0.0;
    }
    return coef;
}

std::vector<double> polynomial_values(const std::vector<double>& coeffs, int t_len) {
    std::vector<double> out(static_cast<size_t>(t_len));
    for (int i = 0; i < t_len; ++i) {
        double x = static_cast<double>(i + 1) / t_len;
        double acc = 0.0, p = 1.0;
        for (double c : coeffs) {
            acc += c * p;
            p *= x;
        }
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

int longest_repeated_len(const std::vector<double>& series, int i, double eps) {
    if (i < 1 || i > static_cast<int>(series.size()))
        throw std::invalid_argument("prefix length out of range");
    auto windows_equal = [&](int p, int q, int len) {
        for (int k = 0; k < len; ++k)
            if (std::fabs(series[static_cast<size_t>(p + k)] - series[static_cast<size_t>(q + k)]) > eps)
                return false;
        return true;
    };
    auto feasible = [&](int len) {
        for (int p = 0; p + len <= i; ++p)
            for (int q = p + 1; q + len <= i; ++q)
                if (windows_equal(p, q, len)) return true;
        return false;
    };
    // feasible() is monotone decreasing in len, so binary search applies.
    int lo = 0, hi = i - 1;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (feasible(mid))
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

ExpertFeatureVector expert_features(const std::vector<double>& series, double eps) {
    int t_len = static_cast<int>(series.size());
    if (t_len < 4) throw std::invalid_argument("expert features require T >= 4");
    ExpertFeatureVector out;

    double mn = series[0], mx = series[0], mxabs = std::fabs(series[0]);
    for (double v : series) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        mxabs = std::max(mxabs, std::fabs(v));
    }
    out.f[0] = mx - mn;
    out.f[1] = mxabs;

    bool constant = true;
    for (double v : series)
        if (std::fabs(v - series[0]) > eps) {
            constant = false;
            break;
        }
    out.f[2] = constant ? 1.0 : 0.0;
    out.f[3] = longest_repeated_len(series, t_len, eps) > t_len / 2.0 ? 1.0 : 0.0;

    double max_step = 0.0;
    for (int i = 1; i < t_len; ++i)
        max_step = std::max(max_step, std::fabs(series[static_cast<size_t>(i)] - series[static_cast<size_t>(i - 1)]));
    out.f[4] = max_step;

    auto res2 = [&](const std::vector<double>& fitted, int i /*1-based*/) {
        double r = series[static_cast<size_t>(i - 1)] - fitted[static_cast<size_t>(i - 1)];
        return r * r;
    };

    auto fit5 = fit_polynomial(series, 5);
    auto fit2 = fit_polynomial(series, 2);
    auto fit3 = fit_polynomial(series, 3);
    auto v5 = polynomial_values(fit5, t_len);
    auto v2 = polynomial_values(fit2, t_len);

    // Halves share index mid = floor(T/2); the shared term carries weight 1/2
    // in each half so that f6 + f7 == 2*f8 exactly.
    int mid = t_len / 2;
    double s6 = 0.0, s7 = 0.0, s8 = 0.0;
    for (int i = 1; i <= t_len; ++i) {
        double r = res2(v5, i);
        s8 += r;
        if (i < mid) s6 += r;
        if (i == mid) {
            s6 += 0.5 * r;
            s7 += 0.5 * r;
        }
        if (i > mid) s7 += r;
    }
    out.f[5] = 2.0 / t_len * s6;
    out.f[6] = 2.0 / t_len * s7;
    out.f[7] = 1.0 / t_len * s8;

    int quarter = (t_len + 3) / 4;  // ceil(T/4)
    double s9 = 0.0, s10 = 0.0;
    for (int i = quarter; i <= t_len; ++i) {
        s9 += res2(v5, i);
        s10 += res2(v2, i);
    }
    out.f[8] = 4.0 / (3.0 * t_len) * s9;
    out.f[9] = 4.0 / (3.0 * t_len) * s10;

    out.f[10] = fit2[2];

    double a2 = fit3[2], a3 = fit3[3];
    double sign = a3 < 0.0 ? -1.0 : 1.0;  // sign(0) -> +1
    double a3c = sign * std::max(std::fabs(a3), 1e-8 * std::max(1.0, std::fabs(a2)));
    out.f[11] = -a2 / (3.0 * a3c) - a2 * a2 / (3.0 * a3c * a3c);
    return out;
}

namespace {

int value_row(double v, double mn, double range) {
    if (range < 1e-12) return CurveImage::kSize / 2;  // constant -> middle row
    double unit = (v - mn) / range;
    return CurveImage::kSize - 1 -
           static_cast<int>(std::lround((CurveImage::kSize - 1) * unit));
}

void draw_line(CurveImage& img, int ch, int r0, int c0, int r1, int c1) {
    int dc = std::abs(c1 - c0), dr = -std::abs(r1 - r0);
    int sc = c0 < c1 ? 1 : -1, sr = r0 < r1 ? 1 : -1;
    int err = dc + dr;
    for (;;) {
        img.at(ch, r0, c0) = 1.0;
        if (r0 == r1 && c0 == c1) break;
        int e2 = 2 * err;
        if (e2 >= dr) {
            err += dr;
            c0 += sc;
        }
        if (e2 <= dc) {
            err += dc;
            r0 += sr;
        }
    }
}

}  // namespace

CurveImage render_curve_image(const std::vector<double>& series) {
    int t_len = static_cast<int>(series.size());
    if (t_len < 2) throw std::invalid_argument("curve image requires T >= 2");
    CurveImage img;

    double mn = series[0], mx = series[0];
    for (double v : series) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    double range = mx - mn;
    const int last = CurveImage::kSize - 1;

    // channel 0: unfolded
    auto col_unfolded = [&](int i /*1-based*/) {
        return static_cast<int>(std::lround(static_cast<double>(last) * (i - 1) / (t_len - 1)));
    };
    int pr = value_row(series[0], mn, range), pc = col_unfolded(1);
    img.at(0, pr, pc) = 1.0;
    for (int i = 2; i <= t_len; ++i) {
        int r = value_row(series[static_cast<size_t>(i - 1)], mn, range), c = col_unfolded(i);
        draw_line(img, 0, pr, pc, r, c);
        pr = r;
        pc = c;
    }

    // channel 1: folded about the central vertical line; index i maps to
    // min(i, T+1-i) scaled over [1, ceil(T/2)].
    int half = (t_len + 1) / 2;
    auto col_folded = [&](int i) {
        int j = std::min(i, t_len + 1 - i);
        if (half <= 1) return CurveImage::kSize / 2;
        return static_cast<int>(std::lround(static_cast<double>(last) * (j - 1) / (half - 1)));
    };
    pr = value_row(series[0], mn, range);
    pc = col_folded(1);
    img.at(1, pr, pc) = 1.0;
    for (int i = 2; i <= t_len; ++i) {
        int r = value_row(series[static_cast<size_t>(i - 1)], mn, range), c = col_folded(i);
        draw_line(img, 1, pr, pc, r, c);
        pr = r;
        pc = c;
    }
    return img;
}

void write_pgm(const CurveImage& img, int channel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << "P2\n" << CurveImage::kSize << " " << CurveImage::kSize << "\n255\n";
    for (int r = 0; r < CurveImage::kSize; ++r) {
        for (int c = 0; c < CurveImage::kSize; ++c)
            out << static_cast<int>(img.at(channel, r, c) * 255.0) << (c + 1 < CurveImage::kSize ? " " : "");
        out << '\n';
    }
}

void write_ppm(const CurveImage& img, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << "P3\n" << CurveImage::kSize << " " << CurveImage::kSize << "\n255\n";
    for (int r = 0; r < CurveImage::kSize; ++r) {
        for (int c = 0; c < CurveImage::kSize; ++c) {
            for (int ch = 0; ch < CurveImage::kChannels; ++ch)
                out << static_cast<int>(img.at(ch, r, c) * 255.0) << " ";
        }
        out << '\n';
    }
}

}  // namespace gfef
