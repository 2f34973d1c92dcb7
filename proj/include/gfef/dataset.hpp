#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gfef {

struct TimeSeriesInstance {
    std::vector<double> values;
    int label = 0;
};

struct Dataset {
    std::vector<TimeSeriesInstance> instances;
    int num_classes = 0;
    std::string name;

    int series_length() const { return instances.empty() ? 0 : static_cast<int>(instances[0].values.size()); }
    int size() const { return static_cast<int>(instances.size()); }
};

// One instance per line: label, then T values; tab or comma separated.
// Labels are remapped to dense 0..C-1 preserving sorted original order.
Dataset load_ucr_dataset(const std::string& path);

void save_ucr_dataset(const Dataset& ds, const std::string& path, char delim = '\t');

// Mean 0, population std 1. Constant input (sigma < 1e-8) maps to all zeros.
std::vector<double> znormalize(const std::vector<double>& series);

// Synthetic strain-gauge loading/unloading curves, T=101, three classes:
// 0 NORMAL (ramp + small noise), 1 BUCKLING (ramp + pronounced bow),
// 2 STUCK (ramp frozen at a random point; the plateau repeats one exact value
// for more than half the series). Deterministic for a given seed.
Dataset generate_strain_dataset(int n_per_class, uint64_t seed);

constexpr int kStrainSeriesLength = 101;
constexpr int kStrainNumClasses = 3;

}  // namespace gfef
