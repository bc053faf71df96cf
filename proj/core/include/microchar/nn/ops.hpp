#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <microchar/nn/tensor.hpp>
#include <microchar/rng.hpp>

namespace microchar::nn {

inline bool valid_kernel_size(int k) {
    return k == 1 || k == 3 || k == 5 || k == 7 || k == 9;
}

namespace detail {

/// Dot product with a fixed 8-lane accumulation tree. The reduction order
/// depends only on the length, which keeps results bit-identical run to run.
template <class T>
T dotv(const T* a, const T* b, std::size_t len) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    std::size_t i = 0;
    for (; i + 8 <= len; i += 8) {
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    }
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < len; ++i) s += a[i] * b[i];
    return s;
}

/// out += correlation of one padded input plane with one KxK kernel,
/// stride 1. Split per kernel row so the ow loop stays a flat
/// multiply-accumulate the compiler can vectorize.
template <class T, int K>
void corr_accum_k(const T* xpad, int xstride, const T* wk, T* out, int oh_count, int ow_count) {
    for (int oh = 0; oh < oh_count; ++oh) {
        T* orow = out + static_cast<std::size_t>(oh) * ow_count;
        for (int ky = 0; ky < K; ++ky) {
            const T* xr = xpad + static_cast<std::size_t>(oh + ky) * xstride;
            const T* wr = wk + ky * K;
            for (int ow = 0; ow < ow_count; ++ow) {
                T acc = orow[ow];
                for (int kx = 0; kx < K; ++kx) acc += wr[kx] * xr[ow + kx];
                orow[ow] = acc;
            }
        }
    }
}

template <class T>
void corr_accum_generic(const T* xpad, int xstride, const T* wk, int k, int stride, T* out,
                        int oh_count, int ow_count) {
    for (int oh = 0; oh < oh_count; ++oh) {
        T* orow = out + static_cast<std::size_t>(oh) * ow_count;
        for (int ky = 0; ky < k; ++ky) {
            const T* xr = xpad + static_cast<std::size_t>(oh * stride + ky) * xstride;
            const T* wr = wk + ky * k;
            for (int ow = 0; ow < ow_count; ++ow) {
                T acc = orow[ow];
                const T* xc = xr + ow * stride;
                for (int kx = 0; kx < k; ++kx) acc += wr[kx] * xc[kx];
                orow[ow] = acc;
            }
        }
    }
}

template <class T>
void corr_accum(const T* xpad, int xstride, const T* wk, int k, int stride, T* out, int oh_count,
                int ow_count) {
    if (stride == 1) {
        switch (k) {
            case 1: return corr_accum_k<T, 1>(xpad, xstride, wk, out, oh_count, ow_count);
            case 3: return corr_accum_k<T, 3>(xpad, xstride, wk, out, oh_count, ow_count);
            case 5: return corr_accum_k<T, 5>(xpad, xstride, wk, out, oh_count, ow_count);
            case 7: return corr_accum_k<T, 7>(xpad, xstride, wk, out, oh_count, ow_count);
            case 9: return corr_accum_k<T, 9>(xpad, xstride, wk, out, oh_count, ow_count);
            default: break;
        }
    }
    corr_accum_generic(xpad, xstride, wk, k, stride, out, oh_count, ow_count);
}

/// Copies x into a zero-padded buffer of (n, c, h+2p, w+2p).
template <class T>
std::vector<T> zero_pad(const TensorT<T>& x, int p) {
    const int ph = x.h + 2 * p;
    const int pw = x.w + 2 * p;
    std::vector<T> out(static_cast<std::size_t>(x.n) * x.c * ph * pw, T(0));
    for (int i = 0; i < x.n; ++i) {
        for (int j = 0; j < x.c; ++j) {
            const T* src = x.data.data() + (static_cast<std::size_t>(i) * x.c + j) * x.plane();
            T* dst = out.data() + (static_cast<std::size_t>(i) * x.c + j) * ph * pw;
            for (int y = 0; y < x.h; ++y) {
                std::copy(src + static_cast<std::size_t>(y) * x.w,
                          src + static_cast<std::size_t>(y + 1) * x.w,
                          dst + static_cast<std::size_t>(y + p) * pw + p);
            }
        }
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 2-D convolution (cross-correlation convention) with zero padding.
/// Defaults to "same" padding p = k/2 so spatial shape is preserved at
/// stride 1 for every kernel size in the search set.
template <class T>
struct Conv2d {
    int in_c = 0, out_c = 0, k = 0, stride = 1, pad = 0;
    std::vector<T> w, b;   // w: (out_c, in_c, k, k); b: (out_c)
    std::vector<T> dw, db;

    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel, int stride_ = 1, int pad_ = -1)
        : in_c(in_channels), out_c(out_channels), k(kernel), stride(stride_),
          pad(pad_ < 0 ? kernel / 2 : pad_) {
        if (!valid_kernel_size(kernel)) throw InvalidSpec("Conv2d: kernel must be in {1,3,5,7,9}");
        if (in_c < 1 || out_c < 1 || stride < 1) throw InvalidSpec("Conv2d: bad shape params");
        const std::size_t wsize =
            static_cast<std::size_t>(out_c) * in_c * k * k;
        w.assign(wsize, T(0));
        b.assign(out_c, T(0));
        dw.assign(wsize, T(0));
        db.assign(out_c, T(0));
    }

    void init(Rng& rng) {
        const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * k * k));
        for (T& v : w) v = static_cast<T>(rng.next_range(-bound, bound));
        std::fill(b.begin(), b.end(), T(0));
    }

    std::size_t param_count() const { return w.size() + b.size(); }
    void zero_grad() {
        std::fill(dw.begin(), dw.end(), T(0));
        std::fill(db.begin(), db.end(), T(0));
    }
    std::vector<ParamRef<T>> param_refs() {
        return {{&w, &dw}, {&b, &db}};
    }

    void check_input(const TensorT<T>& x) const {
        if (x.c != in_c) throw ShapeMismatch("Conv2d: input channel mismatch");
        if ((x.h + 2 * pad - k) % stride != 0 || (x.w + 2 * pad - k) % stride != 0 ||
            x.h + 2 * pad < k || x.w + 2 * pad < k) {
            throw ShapeMismatch("Conv2d: input extent incompatible with kernel/stride");
        }
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        check_input(x);
        const int oh = (x.h + 2 * pad - k) / stride + 1;
        const int ow = (x.w + 2 * pad - k) / stride + 1;
        const int pw = x.w + 2 * pad;
        const std::vector<T> xpad = detail::zero_pad(x, pad);
        const std::size_t pplane = static_cast<std::size_t>(x.h + 2 * pad) * pw;

        TensorT<T> out(x.n, out_c, oh, ow);
        for (int i = 0; i < x.n; ++i) {
            for (int oc = 0; oc < out_c; ++oc) {
                T* oplane = out.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * out.plane();
                std::fill(oplane, oplane + out.plane(), b[oc]);
                for (int ic = 0; ic < in_c; ++ic) {
                    const T* xp = xpad.data() + (static_cast<std::size_t>(i) * in_c + ic) * pplane;
                    const T* wk = w.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k * k;
                    detail::corr_accum(xp, pw, wk, k, stride, oplane, oh, ow);
                }
            }
        }
        return out;
    }

    /// Accumulates dw/db and returns dL/dx. `x` must be the forward input.
    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        check_input(x);
        const int oh = dy.h, ow = dy.w;
        if (dy.c != out_c || dy.n != x.n || oh != (x.h + 2 * pad - k) / stride + 1 ||
            ow != (x.w + 2 * pad - k) / stride + 1) {
            throw ShapeMismatch("Conv2d::backward: dy shape mismatch");
        }
        const int pw = x.w + 2 * pad;
        const std::size_t pplane = static_cast<std::size_t>(x.h + 2 * pad) * pw;
        const std::vector<T> xpad = detail::zero_pad(x, pad);

        // Weight and bias gradients.
        for (int i = 0; i < x.n; ++i) {
            for (int oc = 0; oc < out_c; ++oc) {
                const T* dyp = dy.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * dy.plane();
                T dbacc = T(0);
                for (std::size_t e = 0; e < dy.plane(); ++e) dbacc += dyp[e];
                db[oc] += dbacc;
                for (int ic = 0; ic < in_c; ++ic) {
                    const T* xp = xpad.data() + (static_cast<std::size_t>(i) * in_c + ic) * pplane;
                    T* dwk = dw.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            T acc = T(0);
                            if (stride == 1) {
                                for (int y = 0; y < oh; ++y) {
                                    acc += detail::dotv(dyp + static_cast<std::size_t>(y) * ow,
                                                        xp + static_cast<std::size_t>(y + ky) * pw + kx,
                                                        static_cast<std::size_t>(ow));
                                }
                            } else {
                                for (int y = 0; y < oh; ++y) {
                                    const T* dyr = dyp + static_cast<std::size_t>(y) * ow;
                                    const T* xr = xp + static_cast<std::size_t>(y * stride + ky) * pw + kx;
                                    for (int xo = 0; xo < ow; ++xo) acc += dyr[xo] * xr[xo * stride];
                                }
                            }
                            dwk[ky * k + kx] += acc;
                        }
                    }
                }
            }
        }

        // Input gradient. At stride 1 this is a correlation of dy (padded by
        // k-1-pad) with the 180-degree-rotated kernel; otherwise fall back to
        // a direct scatter.
        TensorT<T> dx(x.n, x.c, x.h, x.w);
        if (stride == 1) {
            const int bp = k - 1 - pad;
            if (bp < 0) throw ShapeMismatch("Conv2d::backward: pad larger than kernel-1");
            TensorT<T> dyt = dy; // shape carrier for zero_pad
            const std::vector<T> dypad = detail::zero_pad(dyt, bp);
            const int dpw = ow + 2 * bp;
            const std::size_t dplane = static_cast<std::size_t>(oh + 2 * bp) * dpw;
            std::vector<T> wrot(static_cast<std::size_t>(k) * k);
            for (int i = 0; i < x.n; ++i) {
                for (int ic = 0; ic < in_c; ++ic) {
                    T* dxp = dx.data.data() + (static_cast<std::size_t>(i) * in_c + ic) * dx.plane();
                    for (int oc = 0; oc < out_c; ++oc) {
                        const T* wk = w.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k * k;
                        for (int e = 0; e < k * k; ++e) wrot[e] = wk[k * k - 1 - e];
                        const T* dyp = dypad.data() + (static_cast<std::size_t>(i) * out_c + oc) * dplane;
                        detail::corr_accum(dyp, dpw, wrot.data(), k, 1, dxp, x.h, x.w);
                    }
                }
            }
        } else {
            std::vector<T> dxpad(static_cast<std::size_t>(x.n) * in_c * (x.h + 2 * pad) * pw, T(0));
            for (int i = 0; i < x.n; ++i) {
                for (int oc = 0; oc < out_c; ++oc) {
                    const T* dyp = dy.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * dy.plane();
                    for (int ic = 0; ic < in_c; ++ic) {
                        T* dxp = dxpad.data() + (static_cast<std::size_t>(i) * in_c + ic) * pplane;
                        const T* wk = w.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k * k;
                        for (int y = 0; y < oh; ++y) {
                            const T* dyr = dyp + static_cast<std::size_t>(y) * ow;
                            for (int xo = 0; xo < ow; ++xo) {
                                const T g = dyr[xo];
                                T* base = dxp + static_cast<std::size_t>(y * stride) * pw + xo * stride;
                                for (int ky = 0; ky < k; ++ky) {
                                    for (int kx = 0; kx < k; ++kx) {
                                        base[static_cast<std::size_t>(ky) * pw + kx] += g * wk[ky * k + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            // Crop padding back off.
            for (int i = 0; i < x.n; ++i) {
                for (int ic = 0; ic < in_c; ++ic) {
                    const T* src = dxpad.data() + (static_cast<std::size_t>(i) * in_c + ic) * pplane;
                    T* dst = dx.data.data() + (static_cast<std::size_t>(i) * in_c + ic) * dx.plane();
                    for (int y = 0; y < x.h; ++y) {
                        const T* s = src + static_cast<std::size_t>(y + pad) * pw + pad;
                        std::copy(s, s + x.w, dst + static_cast<std::size_t>(y) * x.w);
                    }
                }
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Transpose convolution, fixed 2x2 kernel / stride 2 (the decoder upsampler)
// ---------------------------------------------------------------------------

template <class T>
struct ConvT2x2 {
    int in_c = 0, out_c = 0;
    std::vector<T> w, b;   // w: (in_c, out_c, 2, 2); b: (out_c)
    std::vector<T> dw, db;

    ConvT2x2() = default;
    ConvT2x2(int in_channels, int out_channels) : in_c(in_channels), out_c(out_channels) {
        if (in_c < 1 || out_c < 1) throw InvalidSpec("ConvT2x2: bad channels");
        w.assign(static_cast<std::size_t>(in_c) * out_c * 4, T(0));
        b.assign(out_c, T(0));
        dw.assign(w.size(), T(0));
        db.assign(out_c, T(0));
    }

    void init(Rng& rng) {
        const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * 4));
        for (T& v : w) v = static_cast<T>(rng.next_range(-bound, bound));
        std::fill(b.begin(), b.end(), T(0));
    }

    std::size_t param_count() const { return w.size() + b.size(); }
    void zero_grad() {
        std::fill(dw.begin(), dw.end(), T(0));
        std::fill(db.begin(), db.end(), T(0));
    }
    std::vector<ParamRef<T>> param_refs() {
        return {{&w, &dw}, {&b, &db}};
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.c != in_c) throw ShapeMismatch("ConvT2x2: input channel mismatch");
        TensorT<T> out(x.n, out_c, x.h * 2, x.w * 2);
        for (int i = 0; i < x.n; ++i) {
            for (int oc = 0; oc < out_c; ++oc) {
                T* op = out.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * out.plane();
                std::fill(op, op + out.plane(), b[oc]);
            }
            for (int ic = 0; ic < in_c; ++ic) {
                const T* xp = x.data.data() + (static_cast<std::size_t>(i) * in_c + ic) * x.plane();
                for (int oc = 0; oc < out_c; ++oc) {
                    const T* wk = w.data() + (static_cast<std::size_t>(ic) * out_c + oc) * 4;
                    T* op = out.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * out.plane();
                    for (int y = 0; y < x.h; ++y) {
                        const T* xr = xp + static_cast<std::size_t>(y) * x.w;
                        T* o0 = op + static_cast<std::size_t>(2 * y) * out.w;
                        T* o1 = o0 + out.w;
                        for (int xx = 0; xx < x.w; ++xx) {
                            const T v = xr[xx];
                            o0[2 * xx] += v * wk[0];
                            o0[2 * xx + 1] += v * wk[1];
                            o1[2 * xx] += v * wk[2];
                            o1[2 * xx + 1] += v * wk[3];
                        }
                    }
                }
            }
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        if (dy.c != out_c || dy.h != x.h * 2 || dy.w != x.w * 2 || dy.n != x.n) {
            throw ShapeMismatch("ConvT2x2::backward: dy shape mismatch");
        }
        TensorT<T> dx(x.n, in_c, x.h, x.w);
        for (int i = 0; i < x.n; ++i) {
            for (int oc = 0; oc < out_c; ++oc) {
                const T* dyp = dy.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * dy.plane();
                T acc = T(0);
                for (std::size_t e = 0; e < dy.plane(); ++e) acc += dyp[e];
                db[oc] += acc;
            }
            for (int ic = 0; ic < in_c; ++ic) {
                const T* xp = x.data.data() + (static_cast<std::size_t>(i) * in_c + ic) * x.plane();
                T* dxp = dx.data.data() + (static_cast<std::size_t>(i) * in_c + ic) * dx.plane();
                for (int oc = 0; oc < out_c; ++oc) {
                    const T* wk = w.data() + (static_cast<std::size_t>(ic) * out_c + oc) * 4;
                    T* dwk = dw.data() + (static_cast<std::size_t>(ic) * out_c + oc) * 4;
                    const T* dyp = dy.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * dy.plane();
                    for (int y = 0; y < x.h; ++y) {
                        const T* xr = xp + static_cast<std::size_t>(y) * x.w;
                        T* dxr = dxp + static_cast<std::size_t>(y) * x.w;
                        const T* d0 = dyp + static_cast<std::size_t>(2 * y) * dy.w;
                        const T* d1 = d0 + dy.w;
                        for (int xx = 0; xx < x.w; ++xx) {
                            const T g0 = d0[2 * xx], g1 = d0[2 * xx + 1];
                            const T g2 = d1[2 * xx], g3 = d1[2 * xx + 1];
                            dxr[xx] += g0 * wk[0] + g1 * wk[1] + g2 * wk[2] + g3 * wk[3];
                            const T v = xr[xx];
                            dwk[0] += v * g0;
                            dwk[1] += v * g1;
                            dwk[2] += v * g2;
                            dwk[3] += v * g3;
                        }
                    }
                }
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Max pooling 2x2 / stride 2
// ---------------------------------------------------------------------------

template <class T>
struct PoolResult {
    TensorT<T> out;
    std::vector<std::uint32_t> argmax; // linear index into the input tensor
};

template <class T>
PoolResult<T> maxpool2x2_forward(const TensorT<T>& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeMismatch("maxpool2x2: H and W must be even");
    PoolResult<T> res;
    res.out = TensorT<T>(x.n, x.c, x.h / 2, x.w / 2);
    res.argmax.resize(res.out.size());
    std::size_t o = 0;
    for (int i = 0; i < x.n; ++i) {
        for (int j = 0; j < x.c; ++j) {
            const std::size_t base = (static_cast<std::size_t>(i) * x.c + j) * x.plane();
            for (int y = 0; y < x.h; y += 2) {
                for (int xx = 0; xx < x.w; xx += 2) {
                    // First maximum in scan order wins (deterministic ties).
                    std::size_t bi = base + static_cast<std::size_t>(y) * x.w + xx;
                    T bv = x.data[bi];
                    const std::size_t c1 = bi + 1, c2 = bi + x.w, c3 = bi + x.w + 1;
                    if (x.data[c1] > bv) { bv = x.data[c1]; bi = c1; }
                    if (x.data[c2] > bv) { bv = x.data[c2]; bi = c2; }
                    if (x.data[c3] > bv) { bv = x.data[c3]; bi = c3; }
                    res.out.data[o] = bv;
                    res.argmax[o] = static_cast<std::uint32_t>(bi);
                    ++o;
                }
            }
        }
    }
    return res;
}

template <class T>
TensorT<T> maxpool2x2_backward(const PoolResult<T>& fwd, const TensorT<T>& x,
                               const TensorT<T>& dy) {
    if (!dy.same_shape(fwd.out)) throw ShapeMismatch("maxpool2x2_backward: dy shape mismatch");
    TensorT<T> dx(x.n, x.c, x.h, x.w);
    for (std::size_t o = 0; o < dy.size(); ++o) dx.data[fwd.argmax[o]] += dy.data[o];
    return dx;
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> out = x;
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    out.grad.clear();
    return out;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    if (!dy.same_shape(x)) throw ShapeMismatch("relu_backward: shape mismatch");
    TensorT<T> dx(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = x.data[i] > T(0) ? dy.data[i] : T(0);
    return dx;
}

template <class T>
TensorT<T> sigmoid_forward(const TensorT<T>& x) {
    TensorT<T> out(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
    }
    return out;
}

/// `y` is the sigmoid forward output.
template <class T>
TensorT<T> sigmoid_backward(const TensorT<T>& y, const TensorT<T>& dy) {
    if (!dy.same_shape(y)) throw ShapeMismatch("sigmoid_backward: shape mismatch");
    TensorT<T> dx(y.n, y.c, y.h, y.w);
    for (std::size_t i = 0; i < y.size(); ++i) {
        dx.data[i] = dy.data[i] * y.data[i] * (T(1) - y.data[i]);
    }
    return dx;
}

/// Softmax over the channel dimension at every (n, y, x) site.
template <class T>
TensorT<T> softmax_forward(const TensorT<T>& x) {
    TensorT<T> out(x.n, x.c, x.h, x.w);
    for (int i = 0; i < x.n; ++i) {
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) {
                T maxv = x.at(i, 0, y, xx);
                for (int j = 1; j < x.c; ++j) maxv = std::max(maxv, x.at(i, j, y, xx));
                T denom = T(0);
                for (int j = 0; j < x.c; ++j) {
                    const T e = std::exp(x.at(i, j, y, xx) - maxv);
                    out.at(i, j, y, xx) = e;
                    denom += e;
                }
                for (int j = 0; j < x.c; ++j) out.at(i, j, y, xx) /= denom;
            }
        }
    }
    return out;
}

/// `y` is the softmax forward output.
template <class T>
TensorT<T> softmax_backward(const TensorT<T>& y, const TensorT<T>& dy) {
    if (!dy.same_shape(y)) throw ShapeMismatch("softmax_backward: shape mismatch");
    TensorT<T> dx(y.n, y.c, y.h, y.w);
    for (int i = 0; i < y.n; ++i) {
        for (int yy = 0; yy < y.h; ++yy) {
            for (int xx = 0; xx < y.w; ++xx) {
                T dot = T(0);
                for (int j = 0; j < y.c; ++j) dot += dy.at(i, j, yy, xx) * y.at(i, j, yy, xx);
                for (int j = 0; j < y.c; ++j) {
                    dx.at(i, j, yy, xx) = y.at(i, j, yy, xx) * (dy.at(i, j, yy, xx) - dot);
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Concatenation along channels (skip connections)
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) {
        throw ShapeMismatch("concat_channels: spatial/batch mismatch");
    }
    TensorT<T> out(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
        std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(i * a.c * a.plane()),
                  a.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * a.c * a.plane()),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * out.c * out.plane()));
        std::copy(b.data.begin() + static_cast<std::ptrdiff_t>(i * b.c * b.plane()),
                  b.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * b.c * b.plane()),
                  out.data.begin() +
                      static_cast<std::ptrdiff_t>(i * out.c * out.plane() + a.c * a.plane()));
    }
    return out;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& dy, int ca, int cb) {
    if (dy.c != ca + cb) throw ShapeMismatch("split_channels: channel mismatch");
    TensorT<T> da(dy.n, ca, dy.h, dy.w);
    TensorT<T> dbt(dy.n, cb, dy.h, dy.w);
    for (int i = 0; i < dy.n; ++i) {
        const auto base = dy.data.begin() + static_cast<std::ptrdiff_t>(i * dy.c * dy.plane());
        std::copy(base, base + static_cast<std::ptrdiff_t>(ca * dy.plane()),
                  da.data.begin() + static_cast<std::ptrdiff_t>(i * ca * da.plane()));
        std::copy(base + static_cast<std::ptrdiff_t>(ca * dy.plane()),
                  base + static_cast<std::ptrdiff_t>((ca + cb) * dy.plane()),
                  dbt.data.begin() + static_cast<std::ptrdiff_t>(i * cb * dbt.plane()));
    }
    return {std::move(da), std::move(dbt)};
}

// ---------------------------------------------------------------------------
// Global average pooling
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& x) {
    TensorT<T> out(x.n, x.c, 1, 1);
    const T inv = T(1) / static_cast<T>(x.plane());
    for (int i = 0; i < x.n; ++i) {
        for (int j = 0; j < x.c; ++j) {
            const T* p = x.data.data() + (static_cast<std::size_t>(i) * x.c + j) * x.plane();
            T acc = T(0);
            for (std::size_t e = 0; e < x.plane(); ++e) acc += p[e];
            out.at(i, j, 0, 0) = acc * inv;
        }
    }
    return out;
}

template <class T>
TensorT<T> global_avg_pool_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    if (dy.n != x.n || dy.c != x.c || dy.h != 1 || dy.w != 1) {
        throw ShapeMismatch("global_avg_pool_backward: dy shape mismatch");
    }
    TensorT<T> dx(x.n, x.c, x.h, x.w);
    const T inv = T(1) / static_cast<T>(x.plane());
    for (int i = 0; i < x.n; ++i) {
        for (int j = 0; j < x.c; ++j) {
            const T g = dy.at(i, j, 0, 0) * inv;
            T* p = dx.data.data() + (static_cast<std::size_t>(i) * x.c + j) * x.plane();
            for (std::size_t e = 0; e < x.plane(); ++e) p[e] = g;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Fully connected layer on (n, c, 1, 1) tensors
// ---------------------------------------------------------------------------

template <class T>
struct Linear {
    int in_f = 0, out_f = 0;
    std::vector<T> w, b;   // w: (out_f, in_f)
    std::vector<T> dw, db;

    Linear() = default;
    Linear(int in_features, int out_features) : in_f(in_features), out_f(out_features) {
        if (in_f < 1 || out_f < 1) throw InvalidSpec("Linear: bad features");
        w.assign(static_cast<std::size_t>(out_f) * in_f, T(0));
        b.assign(out_f, T(0));
        dw.assign(w.size(), T(0));
        db.assign(out_f, T(0));
    }

    void init(Rng& rng) {
        const double bound = std::sqrt(6.0 / static_cast<double>(in_f));
        for (T& v : w) v = static_cast<T>(rng.next_range(-bound, bound));
        std::fill(b.begin(), b.end(), T(0));
    }

    std::size_t param_count() const { return w.size() + b.size(); }
    void zero_grad() {
        std::fill(dw.begin(), dw.end(), T(0));
        std::fill(db.begin(), db.end(), T(0));
    }
    std::vector<ParamRef<T>> param_refs() {
        return {{&w, &dw}, {&b, &db}};
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.c != in_f || x.h != 1 || x.w != 1) throw ShapeMismatch("Linear: expect (n,in_f,1,1)");
        TensorT<T> out(x.n, out_f, 1, 1);
        for (int i = 0; i < x.n; ++i) {
            const T* xi = x.data.data() + static_cast<std::size_t>(i) * in_f;
            for (int o = 0; o < out_f; ++o) {
                out.data[static_cast<std::size_t>(i) * out_f + o] =
                    b[o] + detail::dotv(w.data() + static_cast<std::size_t>(o) * in_f, xi,
                                        static_cast<std::size_t>(in_f));
            }
        }
        return out;
    }

    TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
        if (dy.c != out_f || dy.n != x.n || dy.h != 1 || dy.w != 1) {
            throw ShapeMismatch("Linear::backward: dy shape mismatch");
        }
        TensorT<T> dx(x.n, in_f, 1, 1);
        for (int i = 0; i < x.n; ++i) {
            const T* xi = x.data.data() + static_cast<std::size_t>(i) * in_f;
            const T* dyi = dy.data.data() + static_cast<std::size_t>(i) * out_f;
            T* dxi = dx.data.data() + static_cast<std::size_t>(i) * in_f;
            for (int o = 0; o < out_f; ++o) {
                const T g = dyi[o];
                db[o] += g;
                T* dwo = dw.data() + static_cast<std::size_t>(o) * in_f;
                const T* wo = w.data() + static_cast<std::size_t>(o) * in_f;
                for (int f = 0; f < in_f; ++f) {
                    dwo[f] += g * xi[f];
                    dxi[f] += g * wo[f];
                }
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Losses (mean-reduced; gradient with respect to the prediction is returned)
// ---------------------------------------------------------------------------

template <class T>
struct Loss {
    double value = 0.0;
    TensorT<T> grad;
};

template <class T>
Loss<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    if (!pred.same_shape(target)) throw ShapeMismatch("mse_loss: shape mismatch");
    Loss<T> res;
    res.grad = TensorT<T>(pred.n, pred.c, pred.h, pred.w);
    const double inv = 1.0 / static_cast<double>(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
        acc += d * d;
        res.grad.data[i] = static_cast<T>(2.0 * d * inv);
    }
    res.value = acc * inv;
    return res;
}

/// Binary cross-entropy on probabilities (e.g. sigmoid outputs) against
/// {0,1} targets. Probabilities are clamped to [1e-7, 1-1e-7].
template <class T>
Loss<T> bce_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    if (!pred.same_shape(target)) throw ShapeMismatch("bce_loss: shape mismatch");
    Loss<T> res;
    res.grad = TensorT<T>(pred.n, pred.c, pred.h, pred.w);
    const double inv = 1.0 / static_cast<double>(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pred.data[i]), 1e-7, 1.0 - 1e-7);
        const double t = static_cast<double>(target.data[i]);
        acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        res.grad.data[i] = static_cast<T>((-t / p + (1.0 - t) / (1.0 - p)) * inv);
    }
    res.value = acc * inv;
    return res;
}

/// Multiclass cross-entropy on probability rows (n, c, 1, 1) against integer
/// class labels.
template <class T>
Loss<T> ce_loss(const TensorT<T>& probs, const std::vector<int>& labels) {
    if (probs.h != 1 || probs.w != 1 || static_cast<int>(labels.size()) != probs.n) {
        throw ShapeMismatch("ce_loss: expect (n,c,1,1) probs and n labels");
    }
    Loss<T> res;
    res.grad = TensorT<T>(probs.n, probs.c, 1, 1);
    const double inv = 1.0 / static_cast<double>(probs.n);
    double acc = 0.0;
    for (int i = 0; i < probs.n; ++i) {
        const int lab = labels[i];
        if (lab < 0 || lab >= probs.c) throw InvalidArgument("ce_loss: label out of range");
        const double p = std::max(static_cast<double>(probs.at(i, lab, 0, 0)), 1e-12);
        acc -= std::log(p);
        res.grad.at(i, lab, 0, 0) = static_cast<T>(-inv / p);
    }
    res.value = acc * inv;
    return res;
}

} // namespace microchar::nn
