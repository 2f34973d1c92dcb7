#include "gfef/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace gfef {

Metrics compute_metrics(const std::vector<int>& labels, const std::vector<int>& predictions,
                        int num_classes) {
    if (labels.size() != predictions.size())
        throw std::invalid_argument("labels/predictions size mismatch");
    Metrics m;
    m.num_classes = num_classes;
    m.confusion.assign(static_cast<size_t>(num_classes) * num_classes, 0);
    int correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        int t = labels[i], p = predictions[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
            throw std::invalid_argument("class index out of range");
        ++m.confusion[static_cast<size_t>(t) * num_classes + p];
        if (t == p) ++correct;
    }
    m.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / labels.size();

    double f1_sum = 0.0, prec_sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        long tp = m.confusion[static_cast<size_t>(c) * num_classes + c];
        long pred_c = 0, true_c = 0;
        for (int k = 0; k < num_classes; ++k) {
            pred_c += m.confusion[static_cast<size_t>(k) * num_classes + c];
            true_c += m.confusion[static_cast<size_t>(c) * num_classes + k];
        }
        double precision = pred_c > 0 ? static_cast<double>(tp) / pred_c : 0.0;
        double recall = true_c > 0 ? static_cast<double>(tp) / true_c : 0.0;
        double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        prec_sum += precision;
        f1_sum += f1;
    }
    m.macro_precision = num_classes > 0 ? prec_sum / num_classes : 0.0;
    m.macro_f1 = num_classes > 0 ? f1_sum / num_classes : 0.0;
    return m;
}

std::string format_metrics(const Metrics& m) {
    char buf[96];
    std::string out;
    std::snprintf(buf, sizeof(buf), "accuracy=%.9f\n", m.accuracy);
    out += buf;
    std::snprintf(buf, sizeof(buf), "macro_f1=%.9f\n", m.macro_f1);
    out += buf;
    std::snprintf(buf, sizeof(buf), "macro_precision=%.9f\n", m.macro_precision);
    out += buf;
    out += "confusion=";
    for (int t = 0; t < m.num_classes; ++t) {
        for (int p = 0; p < m.num_classes; ++p) {
            out += std::to_string(m.confusion_at(t, p));
            if (!(t == m.num_classes - 1 && p == m.num_classes - 1)) out += ",";
        }
        if (t != m.num_classes - 1) out += ";";
    }
    out += "\n";
    return out;
}

}  // namespace gfef
