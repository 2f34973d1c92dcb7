#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace gfef {

// Dense row-major tensor. Shape is a small list of extents; data is flat.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        assert(static_cast<size_t>(count(shape)) == data.size());
    }

    static int count(const std::vector<int>& s) {
        int n = 1;
        for (int e : s) n *= e;
        return n;
    }

    int numel() const { return static_cast<int>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    T& operator[](int i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int i) const { return data[static_cast<size_t>(i)]; }

    // 2-D accessors (row-major).
    T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const T& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace gfef
