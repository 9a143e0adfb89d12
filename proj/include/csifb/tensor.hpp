// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "csifb/config.hpp"

namespace csifb {

// Dense row-major value container for the network. 4-D activations use
// (batch, channels, height, width); 2-D features use (batch, features);
// parameters use whatever rank fits. Shapes are fixed at construction.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims) : shape(std::move(dims)) {
        v.assign(static_cast<size_t>(numel_of(shape)), S(0));
    }

    static std::int64_t numel_of(const std::vector<int>& dims) {
        std::int64_t n = 1;
        for (int d : dims) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    S& at2(int n, int f) { return v[static_cast<size_t>(n) * shape[1] + f]; }
    S at2(int n, int f) const { return v[static_cast<size_t>(n) * shape[1] + f]; }

    S& at4(int n, int c, int h, int w) {
        return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    S at4(int n, int c, int h, int w) const {
        return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    void fill(S value) { std::fill(v.begin(), v.end(), value); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // Copies values into a tensor of another scalar type, same shape.
    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out(shape);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
        return out;
    }
};

}  // namespace csifb
