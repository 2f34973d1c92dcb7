#pragma once

#include <vector>

namespace gfef {

// 0.5*KL(p||m) + 0.5*KL(q||m), m = (p+q)/2, natural log, entries floored at
// 1e-12 inside the logs.
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

std::vector<double> softmax(const std::vector<double>& logits);

double cross_entropy_scalar(const std::vector<double>& logits, int label);

struct LossReport {
    double ce_final = 0.0;
    double ce_ts = 0.0;
    double ce_img = 0.0;
    double ce_exp = 0.0;
    double js_total = 0.0;
    double total = 0.0;
};

// Four cross entropies plus the summed Jensen-Shannon terms between the final
// distribution and each intermediate one; unit weights. Empty intermediate
// logit vectors mean the branch is disabled and contribute zero.
LossReport total_loss(const std::vector<double>& logits_final, const std::vector<double>& logits_ts,
                      const std::vector<double>& logits_img, const std::vector<double>& logits_exp,
                      int label);

}  // namespace gfef
