#include "gfef/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gfef {

namespace {
constexpr double kLogFloor = 1e-12;

double kl_to_mid(const std::vector<double>& p, const std::vector<double>& m) {
    double s = 0.0;
    for (size_t i = 0; i < p.size(); ++i)
        s += p[i] * (std::log(std::max(p[i], kLogFloor)) - std::log(std::max(m[i], kLogFloor)));
    return s;
}
}  // namespace

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("distribution size mismatch");
    std::vector<double> mid(p.size());
    for (size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
    return 0.5 * kl_to_mid(p, mid) + 0.5 * kl_to_mid(q, mid);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double denom = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        denom += out[i];
    }
    for (auto& v : out) v /= denom;
    return out;
}

double cross_entropy_scalar(const std::vector<double>& logits, int label) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    return lse - logits[static_cast<size_t>(label)];
}

LossReport total_loss(const std::vector<double>& logits_final, const std::vector<double>& logits_ts,
                      const std::vector<double>& logits_img, const std::vector<double>& logits_exp,
                      int label) {
    LossReport r;
    r.ce_final = cross_entropy_scalar(logits_final, label);
    auto pf = softmax(logits_final);
    auto branch = [&](const std::vector<double>& logits, double& ce_slot) {
        if (logits.empty()) return;
        ce_slot = cross_entropy_scalar(logits, label);
        r.js_total += js_divergence(pf, softmax(logits));
    };
    branch(logits_ts, r.ce_ts);
    branch(logits_img, r.ce_img);
    branch(logits_exp, r.ce_exp);
    r.total = r.ce_final + r.ce_ts + r.ce_img + r.ce_exp + r.js_total;
    return r;
}

}  // namespace gfef
