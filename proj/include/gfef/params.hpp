#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfef/rng.hpp"
#include "gfef/tensor.hpp"

namespace gfef {

enum class Init { kZero, kOne, kXavier, kEmbedding };

// Named trainable tensors with gradient buffers and Adam moments.
// Initialization is keyed on (master seed, parameter name) so values do not
// depend on registration order or on which optional modules exist.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value, grad, m, v;
    };

    explicit ParamStore(uint64_t init_seed = 0) : init_seed_(init_seed) {}

    int add(const std::string& name, std::vector<int> shape, Init init) {
        if (by_name_.count(name)) throw std::logic_error("duplicate parameter: " + name);
        Entry e;
        e.name = name;
        e.value = Tensor<T>(shape);
        e.grad = Tensor<T>(shape);
        e.m = Tensor<T>(shape);
        e.v = Tensor<T>(std::move(shape));
        initialize(e, init);
        entries_.push_back(std::move(e));
        int id = static_cast<int>(entries_.size()) - 1;
        by_name_[name] = id;
        return id;
    }

    Entry& at(int id) { return entries_[static_cast<size_t>(id)]; }
    const Entry& at(int id) const { return entries_[static_cast<size_t>(id)]; }
    Entry& at(const std::string& name) { return entries_[static_cast<size_t>(id_of(name))]; }
    const Entry& at(const std::string& name) const {
        return entries_[static_cast<size_t>(id_of(name))];
    }

    int id_of(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return by_name_.count(name) > 0; }

    int count() const { return static_cast<int>(entries_.size()); }
    int scalar_count() const {
        int n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries_) e.grad.fill(T(0));
    }

    // Adam with bias correction; step_count increments per call.
    void adam_step(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8)) {
        ++step_count_;
        T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_count_));
        T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_count_));
        for (auto& e : entries_) {
            for (int i = 0; i < e.value.numel(); ++i) {
                T g = e.grad[i];
                e.m[i] = beta1 * e.m[i] + (T(1) - beta1) * g;
                e.v[i] = beta2 * e.v[i] + (T(1) - beta2) * g * g;
                T mhat = e.m[i] / bc1;
                T vhat = e.v[i] / bc2;
                e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t c) { step_count_ = c; }
    uint64_t init_seed() const { return init_seed_; }

private:
    std::vector<Entry> entries_;
    std::map<std::string, int> by_name_;
    uint64_t init_seed_ = 0;
    int64_t step_count_ = 0;

    void initialize(Entry& e, Init init) {
        RngStream rng(mix_seed(init_seed_, fnv1a(e.name.data(), e.name.size())));
        switch (init) {
            case Init::kZero:
                break;
            case Init::kOne:
                e.value.fill(T(1));
                break;
            case Init::kEmbedding:
                for (int i = 0; i < e.value.numel(); ++i)
                    e.value[i] = static_cast<T>(rng.uniform(-0.1, 0.1));
                break;
            case Init::kXavier: {
                const auto& s = e.value.shape;
                double fan_in = 1, fan_out = 1;
                if (s.size() == 2) {  // [in, out]
                    fan_in = s[0];
                    fan_out = s[1];
                } else if (s.size() == 3) {  // conv1d [out, in, k]
                    fan_in = static_cast<double>(s[1]) * s[2];
                    fan_out = static_cast<double>(s[0]) * s[2];
                } else if (s.size() == 4) {  // conv2d [out, in, kh, kw]
                    fan_in = static_cast<double>(s[1]) * s[2] * s[3];
                    fan_out = static_cast<double>(s[0]) * s[2] * s[3];
                }
                double limit = std::sqrt(6.0 / (fan_in + fan_out));
                for (int i = 0; i < e.value.numel(); ++i)
                    e.value[i] = static_cast<T>(rng.uniform(-limit, limit));
                break;
            }
        }
    }
};

}  // namespace gfef
