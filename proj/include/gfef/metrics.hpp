#pragma once

#include <string>
#include <vector>

namespace gfef {

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double macro_precision = 0.0;
    int num_classes = 0;
    std::vector<int> confusion;  // row = true class, col = predicted

    int confusion_at(int truth, int pred) const { return confusion[truth * num_classes + pred]; }
};

// Macro averaging; classes with no predictions (or no support) contribute 0
// to the per-class mean.
Metrics compute_metrics(const std::vector<int>& labels, const std::vector<int>& predictions,
                        int num_classes);

// Deterministic fixed-precision rendering (stable bytes for identical inputs).
std::string format_metrics(const Metrics& m);

}  // namespace gfef
