#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gfef/rng.hpp"
#include "gfef/tensor.hpp"

namespace gfef::testutil {

// Central finite differences on a scalar function of a flat parameter vector.
// Returns the worst relative error across entries; rel = |a-f| / max(|a|,|f|,floor).
struct FdReport {
    double max_rel = 0.0;
    int worst_index = -1;
    double analytic = 0.0, numeric = 0.0;
};

// Probes at progressively smaller steps when the primary step disagrees:
// secant error across ReLU kinks shrinks with h while a genuine backward bug
// stays put, so the minimum over steps is the honest comparison.
inline double fd_entry(double& slot, const std::function<double()>& eval, double analytic,
                       double floor_v = 1e-6) {
    double best = 1e300;
    for (double h : {1e-5, 1e-6, 1e-7}) {
        double keep = slot;
        slot = keep + h;
        double fp = eval();
        slot = keep - h;
        double fm = eval();
        slot = keep;
        double fd = (fp - fm) / (2.0 * h);
        double rel = std::fabs(analytic - fd) / std::max({std::fabs(analytic), std::fabs(fd), floor_v});
        best = std::min(best, rel);
        if (best < 1e-6) break;
    }
    return best;
}

inline FdReport fd_compare(std::vector<double>& theta,
                           const std::function<double()>& eval,
                           const std::vector<double>& analytic_grad,
                           double floor_v = 1e-6) {
    FdReport rep;
    for (size_t i = 0; i < theta.size(); ++i) {
        double rel = fd_entry(theta[i], eval, analytic_grad[i], floor_v);
        if (rel > rep.max_rel) {
            rep.max_rel = rel;
            rep.worst_index = static_cast<int>(i);
            rep.analytic = analytic_grad[i];
        }
    }
    return rep;
}

inline gfef::Tensor<double> random_tensor(std::vector<int> shape, gfef::RngStream& rng,
                                          double scale = 1.0) {
    gfef::Tensor<double> t(std::move(shape));
    for (int i = 0; i < t.numel(); ++i) t[i] = scale * rng.gaussian();
    return t;
}

}  // namespace gfef::testutil
