// Central finite-difference gradient checking against the analytic backward
// passes, run in 64-bit mode.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <microchar/nn/ops.hpp>
#include <microchar/rng.hpp>

namespace gradcheck {

using DTensor = microchar::nn::TensorT<double>;

inline DTensor random_tensor(microchar::Rng& rng, int n, int c, int h, int w,
                             double scale = 1.0, double offset = 0.0) {
    DTensor t(n, c, h, w);
    for (auto& v : t.data) {
        v = rng.next_range(-scale, scale);
        if (offset != 0.0) v += v >= 0.0 ? offset : -offset; // keep away from kinks
    }
    return t;
}

inline double projection_loss(const DTensor& out, const DTensor& coef) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out.data[i] * coef.data[i];
    return acc;
}

/// Central differences on every element of `v`; returns the worst relative
/// error against `analytic`. Gradients that are both tiny (< 1e-6) count as
/// exact.
inline double max_rel_error(std::vector<double>& v, const std::vector<double>& analytic,
                            const std::function<double()>& loss, double h = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double orig = v[i];
        v[i] = orig + h;
        const double lp = loss();
        v[i] = orig - h;
        const double lm = loss();
        v[i] = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double a = analytic[i];
        const double denom = std::max(std::abs(a), std::abs(numeric));
        if (denom < 1e-6) continue;
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

} // namespace gradcheck
