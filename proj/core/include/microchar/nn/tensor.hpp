#pragma once

#include <cstddef>
#include <vector>

#include <microchar/errors.hpp>

namespace microchar::nn {

/// Dense NCHW tensor with an optional gradient buffer of identical shape.
/// Float in production; instantiated with double for finite-difference tests.
template <class T>
struct TensorT {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;
    std::vector<T> grad;

    TensorT() = default;
    TensorT(int n_, int c_, int h_, int w_, bool with_grad = false)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) {
            throw ShapeMismatch("TensorT: all dims must be >= 1");
        }
        if (with_grad) grad.assign(data.size(), T(0));
    }

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

    std::size_t index(int i, int j, int y, int x) const {
        return ((static_cast<std::size_t>(i) * c + j) * h + y) * w + x;
    }
    T& at(int i, int j, int y, int x) { return data[index(i, j, y, x)]; }
    T at(int i, int j, int y, int x) const { return data[index(i, j, y, x)]; }

    bool same_shape(const TensorT& other) const {
        return n == other.n && c == other.c && h == other.h && w == other.w;
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), T(0));
    }
};

using Tensor = TensorT<float>;

/// View over one flat parameter array and its gradient, used by the optimizer
/// and the checkpoint writer.
template <class T>
struct ParamRef {
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr;
};

} // namespace microchar::nn
