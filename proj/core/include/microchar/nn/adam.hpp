#pragma once

#include <cmath>
#include <vector>

#include <microchar/nn/tensor.hpp>

namespace microchar::nn {

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step and keyed by parameter order, which must stay stable across
/// steps.
template <class T>
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;

    struct Moments {
        std::vector<double> m, v;
    };
    std::vector<Moments> moments;

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

    void step(const std::vector<ParamRef<T>>& params) {
        if (moments.empty()) {
            moments.resize(params.size());
            for (std::size_t p = 0; p < params.size(); ++p) {
                moments[p].m.assign(params[p].value->size(), 0.0);
                moments[p].v.assign(params[p].value->size(), 0.0);
            }
        }
        if (moments.size() != params.size()) throw LengthMismatch("Adam: parameter list changed");
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& value = *params[p].value;
            auto& grad = *params[p].grad;
            if (value.size() != grad.size() || value.size() != moments[p].m.size()) {
                throw LengthMismatch("Adam: value/grad/moment size mismatch");
            }
            auto& m = moments[p].m;
            auto& v = moments[p].v;
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = static_cast<double>(grad[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] = static_cast<T>(static_cast<double>(value[i]) -
                                          lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }
};

} // namespace microchar::nn
