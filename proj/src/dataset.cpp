#include "gfef/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "gfef/rng.hpp"

namespace gfef {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == '\t' || ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    // trim surrounding spaces
    for (auto& f : out) {
        size_t b = f.find_first_not_of(" ");
        size_t e = f.find_last_not_of(" ");
        f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

double parse_number(const std::string& tok, int line_no, int field_no) {
    if (tok.empty())
        throw std::runtime_error("parse error at line " + std::to_string(line_no) + ", field " +
                                 std::to_string(field_no) + ": empty token");
    size_t pos = 0;
    double v;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("parse error at line " + std::to_string(line_no) + ", field " +
                                 std::to_string(field_no) + ": non-numeric token '" + tok + "'");
    }
    if (pos != tok.size())
        throw std::runtime_error("parse error at line " + std::to_string(line_no) + ", field " +
                                 std::to_string(field_no) + ": non-numeric token '" + tok + "'");
    if (!std::isfinite(v))
        throw std::runtime_error("parse error at line " + std::to_string(line_no) + ", field " +
                                 std::to_string(field_no) + ": non-finite value");
    return v;
}

}  // namespace

Dataset load_ucr_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);

    std::vector<double> raw_labels;
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    size_t expect_fields = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split_fields(line);
        if (fields.size() < 2)
            throw std::runtime_error("parse error at line " + std::to_string(line_no) +
                                     ": expected a label and at least one value");
        if (expect_fields == 0) {
            expect_fields = fields.size();
        } else if (fields.size() != expect_fields) {
            throw std::runtime_error("ragged row at line " + std::to_string(line_no) + ": got " +
                                     std::to_string(fields.size() - 1) + " values, expected " +
                                     std::to_string(expect_fields - 1));
        }
        raw_labels.push_back(parse_number(fields[0], line_no, 1));
        std::vector<double> vals(fields.size() - 1);
        for (size_t i = 1; i < fields.size(); ++i)
            vals[i - 1] = parse_number(fields[i], line_no, static_cast<int>(i) + 1);
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw std::runtime_error("empty dataset file: " + path);

    // dense remap, sorted original order
    std::map<double, int> remap;
    for (double l : raw_labels) remap.emplace(l, 0);
    int next = 0;
    for (auto& [k, v] : remap) v = next++;

    Dataset ds;
    ds.num_classes = next;
    ds.name = path;
    ds.instances.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i)
        ds.instances.push_back({std::move(rows[i]), remap.at(raw_labels[i])});
    return ds;
}

void save_ucr_dataset(const Dataset& ds, const std::string& path, char delim) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    char buf[40];
    for (const auto& inst : ds.instances) {
        out << inst.label;
        for (double v : inst.values) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << delim << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failure: " + path);
}

std::vector<double> znormalize(const std::vector<double>& series) {
    size_t n = series.size();
    double mean = 0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);
    double var = 0;
    for (double v : series) var += (v - mean) * (v - mean);
    double sigma = std::sqrt(var / static_cast<double>(n));
    std::vector<double> out(n);
    if (sigma < 1e-8) return out;  // constant input -> all zeros
    for (size_t i = 0; i < n; ++i) out[i] = (series[i] - mean) / sigma;
    return out;
}

Dataset generate_strain_dataset(int n_per_class, uint64_t seed) {
    if (n_per_class < 0) throw std::invalid_argument("n_per_class must be >= 0");
    const int t = kStrainSeriesLength;
    Dataset ds;
    ds.num_classes = kStrainNumClasses;
    ds.name = "synthetic_strain(seed=" + std::to_string(seed) + ")";
    RngStream rng(mix_seed(seed, 0x5745a1u));

    auto ramp = [&](double amplitude, int peak, int i) {
        if (i <= peak) return amplitude * static_cast<double>(i) / peak;
        return amplitude * static_cast<double>(t - 1 - i) / (t - 1 - peak);
    };

    for (int cls = 0; cls < kStrainNumClasses; ++cls) {
        for (int n = 0; n < n_per_class; ++n) {
            double amplitude = rng.uniform(0.8, 1.2);
            int peak = rng.uniform_int(40, 60);
            std::vector<double> x(t);
            switch (cls) {
                case 0: {  // NORMAL
                    for (int i = 0; i < t; ++i) x[i] = ramp(amplitude, peak, i) + 0.01 * rng.gaussian();
                    break;
                }
                case 1: {  // BUCKLING: ramp plus a pronounced quadratic/cubic bow
                    double bow = rng.uniform(0.35, 0.65);
                    double skew = rng.uniform(-0.3, 0.3);
                    for (int i = 0; i < t; ++i) {
                        double u = static_cast<double>(i) / (t - 1);
                        x[i] = ramp(amplitude, peak, i) +
                               amplitude * (bow * 4.0 * u * (1.0 - u) +
                                            skew * u * (1.0 - u) * (u - 0.5)) +
                               0.01 * rng.gaussian();
                    }
                    break;
                }
                default: {  // STUCK: gauge freezes; plateau repeats one exact reading
                    int freeze = rng.uniform_int(12, 45);  // plateau length > T/2 + 1
                    for (int i = 0; i < t; ++i) {
                        if (i < freeze)
                            x[i] = ramp(amplitude, peak, i) + 0.01 * rng.gaussian();
                        else
                            x[i] = x[freeze - 1];
                    }
                    break;
                }
            }
            ds.instances.push_back({std::move(x), cls});
        }
    }
    return ds;
}

}  // namespace gfef
