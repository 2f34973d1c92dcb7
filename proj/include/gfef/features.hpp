#pragma once

#include <array>
#include <string>
#include <vector>

namespace gfef {

// The 12 whole-series statistics (ranges, repeats, polynomial-fit variances,
// curvature coefficients). f[0] is feature 1.
struct ExpertFeatureVector {
    std::array<double, 12> f{};

    double operator[](int i) const { return f[static_cast<size_t>(i)]; }
    static constexpr int kCount = 12;
};

// 64x64 three-channel raster of the series curve.
// Channel 0: unfolded polyline; channel 1: folded about the central vertical
// line; channel 2: zeros. Pixels are 0.0 or 1.0.
struct CurveImage {
    static constexpr int kSize = 64;
    static constexpr int kChannels = 3;
    std::vector<double> pixels;  // [channel][row][col]

    CurveImage() : pixels(static_cast<size_t>(kChannels) * kSize * kSize, 0.0) {}
    double& at(int ch, int r, int c) {
        return pixels[(static_cast<size_t>(ch) * kSize + r) * kSize + c];
    }
    double at(int ch, int r, int c) const {
        return pixels[(static_cast<size_t>(ch) * kSize + r) * kSize + c];
    }
    int lit_count(int ch) const;
};

// Least squares fit of sum_k a_k * (i/T)^k over i = 1..T; returns a0..a_degree.
// Solved with Householder QR. Throws if T < degree+1.
std::vector<double> fit_polynomial(const std::vector<double>& series, int degree);

// Fitted values of the polynomial at the series abscissa.
std::vector<double> polynomial_values(const std::vector<double>& coeffs, int t_len);

// Largest l such that two contiguous windows of length l with distinct starts
// inside series[0..i) are elementwise equal within eps; 0 if none.
// i is 1-based (prefix length); overlapping occurrences allowed.
int longest_repeated_len(const std::vector<double>& series, int i, double eps);

ExpertFeatureVector expert_features(const std::vector<double>& series, double eps = 1e-9);

CurveImage render_curve_image(const std::vector<double>& series);

// Debug exports: portable graymap (one channel) / pixmap (all channels).
void write_pgm(const CurveImage& img, int channel, const std::string& path);
void write_ppm(const CurveImage& img, const std::string& path);

}  // namespace gfef
