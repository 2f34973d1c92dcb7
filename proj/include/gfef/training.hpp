#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gfef/dataset.hpp"
#include "gfef/metrics.hpp"
#include "gfef/model.hpp"

namespace gfef {

struct TrainSettings {
    double lr = 1e-3;
    int epochs = 500;
    int batch = 64;
    uint64_t seed = 0;
};

struct EpochRecord {
    int epoch = 0;
    LossReport train_loss;
    Metrics eval;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    Memberships final_edges1, final_edges2;  // inference-mode structure
    double epoch0_loss = 0.0;                // first batch loss before any update
};

template <typename T>
std::vector<const PreparedInstance<T>*> batch_view(const std::vector<PreparedInstance<T>>& all,
                                                   const std::vector<int>& order, size_t begin,
                                                   size_t end) {
    std::vector<const PreparedInstance<T>*> out;
    out.reserve(end - begin);
    for (size_t i = begin; i < end; ++i)
        out.push_back(&all[static_cast<size_t>(order[i])]);
    return out;
}

template <typename T>
Metrics evaluate_prepared(const GfefModel<T>& model, const std::vector<PreparedInstance<T>>& data,
                          int eval_batch = 128) {
    std::vector<int> labels, preds;
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t b = 0; b < data.size(); b += static_cast<size_t>(eval_batch)) {
        size_t e = std::min(data.size(), b + static_cast<size_t>(eval_batch));
        auto view = batch_view(data, order, b, e);
        Graph<T> g;
        g.set_no_grad(true);
        auto fo = model.forward_batch(g, view, Mode::kInfer, 0, nullptr);
        for (size_t i = 0; i < view.size(); ++i) {
            labels.push_back(view[i]->label);
            preds.push_back(fo.samples[i].prediction);
        }
    }
    return compute_metrics(labels, preds, model.cfg.num_classes);
}

inline Metrics evaluate_model(const GfefModel<float>& model, const Dataset& ds) {
    if (ds.series_length() != model.cfg.series_length)
        throw std::invalid_argument("dataset length " + std::to_string(ds.series_length()) +
                                    " does not match checkpoint length " +
                                    std::to_string(model.cfg.series_length));
    if (ds.num_classes > model.cfg.num_classes)
        throw std::invalid_argument("dataset has more classes than the checkpoint");
    auto prepared = model.prepare_dataset(ds);
    return evaluate_prepared(model, prepared);
}

// One optimization run. The dataset must contain every class at least once.
template <typename T>
TrainResult fit_model(GfefModel<T>& model, const Dataset& train, const Dataset* val,
                      const TrainSettings& ts,
                      const std::function<void(const EpochRecord&)>& on_epoch = nullptr) {
    if (train.instances.empty()) throw std::invalid_argument("training set is empty");
    if (train.series_length() != model.cfg.series_length)
        throw std::invalid_argument("training series length mismatch");
    std::vector<int> seen(static_cast<size_t>(model.cfg.num_classes), 0);
    for (const auto& inst : train.instances) {
        if (inst.label < 0 || inst.label >= model.cfg.num_classes)
            throw std::invalid_argument("label out of range in training set");
        seen[static_cast<size_t>(inst.label)] = 1;
    }
    for (int c = 0; c < model.cfg.num_classes; ++c)
        if (!seen[static_cast<size_t>(c)])
            throw std::invalid_argument("class " + std::to_string(c) +
                                        " missing from the training split");

    model.fit_expert_stats(train);
    auto prepared = model.prepare_dataset(train);
    std::vector<PreparedInstance<T>> val_prepared;
    if (val) val_prepared = model.prepare_dataset(*val);

    TrainResult result;
    std::vector<int> order(prepared.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < ts.epochs; ++epoch) {
        RngStream shuffle_rng(mix_seed(ts.seed, 0x5a5a, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i) {
            int j = shuffle_rng.uniform_int(0, static_cast<int>(i) - 1);
            std::swap(order[i - 1], order[static_cast<size_t>(j)]);
        }

        LossReport epoch_loss;
        size_t n_batches = 0;
        for (size_t b = 0; b < prepared.size(); b += static_cast<size_t>(ts.batch)) {
            size_t e = std::min(prepared.size(), b + static_cast<size_t>(ts.batch));
            auto view = batch_view(prepared, order, b, e);
            Graph<T> g;
            ForwardAux<T> aux;
            uint64_t noise_seed = mix_seed(ts.seed, static_cast<uint64_t>(epoch),
                                           static_cast<uint64_t>(b));
            auto fo = model.forward_batch(g, view, Mode::kTrain, noise_seed, &aux);
            if (epoch == 0 && b == 0) result.epoch0_loss = fo.mean_parts.total;
            model.params.zero_grads();
            g.backward(fo.loss);
            g.collect_param_grads([&](int pid, const Tensor<T>& grad) {
                auto& dst = model.params.at(pid).grad;
                for (int i = 0; i < grad.numel(); ++i) dst[i] += grad[i];
            });
            model.params.adam_step(static_cast<T>(ts.lr));

            epoch_loss.ce_final += fo.mean_parts.ce_final;
            epoch_loss.ce_ts += fo.mean_parts.ce_ts;
            epoch_loss.ce_img += fo.mean_parts.ce_img;
            epoch_loss.ce_exp += fo.mean_parts.ce_exp;
            epoch_loss.js_total += fo.mean_parts.js_total;
            epoch_loss.total += fo.mean_parts.total;
            ++n_batches;
        }
        double inv = 1.0 / static_cast<double>(n_batches);
        epoch_loss.ce_final *= inv;
        epoch_loss.ce_ts *= inv;
        epoch_loss.ce_img *= inv;
        epoch_loss.ce_exp *= inv;
        epoch_loss.js_total *= inv;
        epoch_loss.total *= inv;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss;
        rec.eval = evaluate_prepared(model, val ? val_prepared : prepared);
        if (on_epoch) on_epoch(rec);
        result.log.push_back(std::move(rec));
    }

    // Final inference-mode structure for the hyperedge diagnostic.
    if (!model.cfg.self_attention && !prepared.empty()) {
        Graph<T> g;
        g.set_no_grad(true);
        std::vector<const PreparedInstance<T>*> one{&prepared[0]};
        auto fo = model.forward_batch(g, one, Mode::kInfer, 0, nullptr);
        result.final_edges1 = fo.edges1;
        result.final_edges2 = fo.edges2;
    }
    return result;
}

// ---- gradient verification ---------------------------------------------------

struct GradCheckEntry {
    std::string param;
    int index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    int checked = 0;
    double max_rel = 0.0;
    std::vector<GradCheckEntry> failures;
    bool pass() const { return failures.empty(); }
};

// Central finite differences against the tape's gradients on the full model,
// with every stochastic draw, reliability score, and discrete structure pinned
// to the base evaluation. 64-bit only. selector: substring filter on
// parameter names ("" = all); entries are sampled round-robin so every module
// is covered.
inline GradCheckReport gradient_check(const ModelConfig& cfg_in, uint64_t seed, int trials,
                                      double tolerance, const std::string& selector = "") {
    ModelConfig cfg = cfg_in;
    GfefModel<double> model(cfg, seed);
    Dataset data = generate_strain_dataset(2, mix_seed(seed, 0xdada));
    if (cfg.series_length != data.series_length())
        throw std::invalid_argument("gradient_check uses the synthetic length");
    if (cfg.num_classes != data.num_classes)
        throw std::invalid_argument("gradient_check expects 3 classes");
    model.fit_expert_stats(data);
    auto prepared = model.prepare_dataset(data);
    std::vector<const PreparedInstance<double>*> batch;
    for (size_t i = 0; i < prepared.size() && i < 3; ++i) batch.push_back(&prepared[i]);

    uint64_t noise_seed = mix_seed(seed, 0xfd);
    ForwardAux<double> aux;
    Graph<double> g;
    auto fo = model.forward_batch(g, batch, Mode::kTrain, noise_seed, &aux);
    model.params.zero_grads();
    g.backward(fo.loss);
    g.collect_param_grads([&](int pid, const Tensor<double>& grad) {
        auto& dst = model.params.at(pid).grad;
        for (int i = 0; i < grad.numel(); ++i) dst[i] += grad[i];
    });
    aux.recording = false;  // replay the pinned path from here on

    auto eval = [&]() {
        Graph<double> g2;
        auto out = model.forward_batch(g2, batch, Mode::kTrain, noise_seed, &aux);
        return g2.value(out.loss)[0];
    };

    std::vector<std::pair<int, int>> picks;
    {
        std::vector<int> eligible;
        for (int id = 0; id < model.params.count(); ++id)
            if (selector.empty() || model.params.at(id).name.find(selector) != std::string::npos)
                eligible.push_back(id);
        if (eligible.empty()) throw std::invalid_argument("selector matches no parameters");
        int per = std::max(1, trials / static_cast<int>(eligible.size()));
        RngStream rng(mix_seed(seed, 0x91c));
        for (int id : eligible) {
            int n = model.params.at(id).value.numel();
            for (int t = 0; t < per; ++t) picks.emplace_back(id, rng.uniform_int(0, n - 1));
        }
    }

    GradCheckReport report;
    for (auto [pid, idx] : picks) {
        auto& entry = model.params.at(pid);
        double analytic = entry.grad[idx];
        double rel = 1e300, numeric = 0.0;
        // Primary step 1e-5; a probe that lands across a ReLU kink is retried
        // at smaller steps (secant pollution shrinks with h, real backward
        // bugs do not).
        for (double h : {1e-5, 1e-6, 1e-7}) {
            double keep = entry.value[idx];
            entry.value[idx] = keep + h;
            double fp = eval();
            entry.value[idx] = keep - h;
            double fm = eval();
            entry.value[idx] = keep;
            double fd = (fp - fm) / (2.0 * h);
            double r = std::fabs(analytic - fd) /
                       std::max({std::fabs(analytic), std::fabs(fd), 1e-6});
            if (r < rel) {
                rel = r;
                numeric = fd;
            }
            if (rel <= tolerance) break;
        }
        report.max_rel = std::max(report.max_rel, rel);
        ++report.checked;
        if (rel > tolerance)
            report.failures.push_back({entry.name, idx, analytic, numeric, rel});
    }
    return report;
}

}  // namespace gfef
