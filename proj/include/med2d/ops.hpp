#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "med2d/kernels.hpp"
#include "med2d/tape.hpp"
#include "med2d/tensor.hpp"

// Differentiable primitives recorded on a TapeT. Activations are H x W x C
// or N x H x W x C; kernels are Kh x Kw x Cin x Cout (standard) or
// Kh x Kw x C (depthwise). Output rank always matches input rank.

namespace med2d::ops {

enum class Padding { same, valid };
enum class EltKind { add, sub, mul };
enum class Act { relu, elu, sigmoid, softmax_channels };

struct Geom {
    int n, h, w, c;
    bool batched;
};

inline Geom activation_geom(const Shape& s, const char* who) {
    if (s.size() == 3) return {1, s[0], s[1], s[2], false};
    if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
    throw std::invalid_argument(std::string(who) + ": expected rank-3 or rank-4 activation, got " +
                                shape_str(s));
}

// --- elementwise with channel broadcast --------------------------------------

// b may be 1x1xC against an HxWxC map (or Nx1x1xC against NxHxWxC); the gate
// multiply in the Med Block relies on this broadcast.
template <typename T>
Var elementwise(TapeT<T>& t, EltKind kind, Var a, Var b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    bool broadcast = false;
    if (av.shape != bv.shape) {
        const bool r3 = av.rank() == 3 && bv.rank() == 3 && bv.dim(0) == 1 && bv.dim(1) == 1 &&
                        bv.dim(2) == av.dim(2);
        const bool r4 = av.rank() == 4 && bv.rank() == 4 && bv.dim(0) == av.dim(0) &&
                        bv.dim(1) == 1 && bv.dim(2) == 1 && bv.dim(3) == av.dim(3);
        if (!r3 && !r4)
            throw std::invalid_argument(
                "elementwise: shapes neither equal nor channel-broadcastable: " +
                shape_str(av.shape) + " vs " + shape_str(bv.shape));
        broadcast = true;
    }

    TensorT<T> out(av.shape);
    if (!broadcast) {
        const int64_t n = av.numel();
        for (int64_t i = 0; i < n; ++i) {
            switch (kind) {
                case EltKind::add: out[i] = av[i] + bv[i]; break;
                case EltKind::sub: out[i] = av[i] - bv[i]; break;
                case EltKind::mul: out[i] = av[i] * bv[i]; break;
            }
        }
    } else {
        const Geom g = activation_geom(av.shape, "elementwise");
        const int64_t pixels = static_cast<int64_t>(g.n) * g.h * g.w;
        const int64_t spatial = static_cast<int64_t>(g.h) * g.w;
        for (int64_t s = 0; s < pixels; ++s) {
            const int64_t bn = g.batched ? (s / spatial) * g.c : 0;
            for (int c = 0; c < g.c; ++c) {
                const T x = av[s * g.c + c], y = bv[bn + c];
                switch (kind) {
                    case EltKind::add: out[s * g.c + c] = x + y; break;
                    case EltKind::sub: out[s * g.c + c] = x - y; break;
                    case EltKind::mul: out[s * g.c + c] = x * y; break;
                }
            }
        }
    }

    return t.record(std::move(out), [kind, a, b, broadcast](TapeT<T>& tp, Var self) {
        const auto& gy = *tp.grad_if(self);
        const auto& av2 = tp.value(a);
        const auto& bv2 = tp.value(b);
        auto& ga = tp.grad(a);
        auto& gb = tp.grad(b);
        if (!broadcast) {
            const int64_t n = av2.numel();
            for (int64_t i = 0; i < n; ++i) {
                switch (kind) {
                    case EltKind::add:
                        ga[i] += gy[i];
                        gb[i] += gy[i];
                        break;
                    case EltKind::sub:
                        ga[i] += gy[i];
                        gb[i] -= gy[i];
                        break;
                    case EltKind::mul:
                        ga[i] += gy[i] * bv2[i];
                        gb[i] += gy[i] * av2[i];
                        break;
                }
            }
        } else {
            const Geom ge = activation_geom(av2.shape, "elementwise");
            const int64_t pixels = static_cast<int64_t>(ge.n) * ge.h * ge.w;
            const int64_t spatial = static_cast<int64_t>(ge.h) * ge.w;
            for (int64_t s = 0; s < pixels; ++s) {
                const int64_t bn = ge.batched ? (s / spatial) * ge.c : 0;
                for (int c = 0; c < ge.c; ++c) {
                    const int64_t i = s * ge.c + c;
                    switch (kind) {
                        case EltKind::add:
                            ga[i] += gy[i];
                            gb[bn + c] += gy[i];
                            break;
                        case EltKind::sub:
                            ga[i] += gy[i];
                            gb[bn + c] -= gy[i];
                            break;
                        case EltKind::mul:
                            ga[i] += gy[i] * bv2[bn + c];
                            gb[bn + c] += gy[i] * av2[i];
                            break;
                    }
                }
            }
        }
    });
}

template <typename T>
Var add(TapeT<T>& t, Var a, Var b) { return elementwise(t, EltKind::add, a, b); }
template <typename T>
Var sub(TapeT<T>& t, Var a, Var b) { return elementwise(t, EltKind::sub, a, b); }
template <typename T>
Var mul(TapeT<T>& t, Var a, Var b) { return elementwise(t, EltKind::mul, a, b); }

// --- convolutions -------------------------------------------------------------

namespace detail {

inline int same_pad(int k) { return (k - 1) / 2; }

inline int out_extent(int in, int k, int stride, Padding pad, const char* who) {
    if (pad == Padding::same) return (in + stride - 1) / stride;  // ceil
    if (in < k)
        throw std::invalid_argument(std::string(who) + ": kernel extent " + std::to_string(k) +
                                    " larger than input extent " + std::to_string(in) +
                                    " with valid padding");
    return (in - k) / stride + 1;
}

}  // namespace detail

// Standard cross-correlation. Kernel Kh x Kw x Cin x Cout, optional bias
// (pass an invalid Var for none), stride 1 or 2.
template <typename T>
Var conv2d(TapeT<T>& t, Var x, Var kernel, Var bias, int stride, Padding padding) {
    const auto& xv = t.value(x);
    const auto& kv = t.value(kernel);
    const Geom g = activation_geom(xv.shape, "conv2d");
    if (kv.rank() != 4)
        throw std::invalid_argument("conv2d: kernel must be Kh x Kw x Cin x Cout, got " +
                                    shape_str(kv.shape));
    const int Kh = kv.dim(0), Kw = kv.dim(1), Cin = kv.dim(2), Cout = kv.dim(3);
    if (Cin != g.c)
        throw std::invalid_argument("conv2d: input channels " + shape_str(xv.shape) +
                                    " do not match kernel " + shape_str(kv.shape));
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
    if (padding == Padding::same && (Kh % 2 == 0 || Kw % 2 == 0))
        throw std::invalid_argument("conv2d: same padding requires odd kernel extents, got " +
                                    shape_str(kv.shape));
    if (bias.valid() && t.value(bias).shape != Shape{Cout})
        throw std::invalid_argument("conv2d: bias shape " + shape_str(t.value(bias).shape) +
                                    " does not match Cout " + std::to_string(Cout));

    const int pad = padding == Padding::same ? detail::same_pad(Kh) : 0;
    const int Ho = detail::out_extent(g.h, Kh, stride, padding, "conv2d");
    const int Wo = detail::out_extent(g.w, Kw, stride, padding, "conv2d");

    Shape oshape = g.batched ? Shape{g.n, Ho, Wo, Cout} : Shape{Ho, Wo, Cout};
    TensorT<T> out(oshape);
    kernels::conv2d_forward(xv.ptr(), g.n, g.h, g.w, Cin, kv.ptr(), Kh, Kw, Cout,
                            bias.valid() ? t.value(bias).ptr() : nullptr, stride, pad, out.ptr(),
                            Ho, Wo);

    return t.record(std::move(out),
                    [x, kernel, bias, stride, pad, Kh, Kw, Cin, Cout, g, Ho, Wo](TapeT<T>& tp,
                                                                                 Var self) {
                        const auto& gy = *tp.grad_if(self);
                        const auto& xv2 = tp.value(x);
                        const auto& kv2 = tp.value(kernel);
                        kernels::conv2d_backward_input(gy.ptr(), g.n, Ho, Wo, Cout, kv2.ptr(), Kh,
                                                       Kw, Cin, stride, pad, tp.grad(x).ptr(), g.h,
                                                       g.w);
                        kernels::conv2d_backward_weights(xv2.ptr(), g.n, g.h, g.w, Cin, gy.ptr(),
                                                         Ho, Wo, Cout, Kh, Kw, stride, pad,
                                                         tp.grad(kernel).ptr());
                        if (bias.valid())
                            kernels::conv2d_backward_bias(gy.ptr(),
                                                          static_cast<int64_t>(g.n) * Ho * Wo,
                                                          Cout, tp.grad(bias).ptr());
                    });
}

// Per-pixel linear map across channels; spatial dims unchanged.
template <typename T>
Var pointwise_conv(TapeT<T>& t, Var x, Var kernel, Var bias) {
    const auto& kv = t.value(kernel);
    if (kv.rank() != 4 || kv.dim(0) != 1 || kv.dim(1) != 1)
        throw std::invalid_argument("pointwise_conv: kernel must be 1x1, got " +
                                    shape_str(kv.shape));
    return conv2d(t, x, kernel, bias, 1, Padding::same);
}

// Per-channel spatial convolution; output channel count equals input's.
template <typename T>
Var depthwise_conv2d(TapeT<T>& t, Var x, Var kernel, Var bias, int stride = 1,
                     Padding padding = Padding::same) {
    const auto& xv = t.value(x);
    const auto& kv = t.value(kernel);
    const Geom g = activation_geom(xv.shape, "depthwise_conv2d");
    if (kv.rank() != 3)
        throw std::invalid_argument("depthwise_conv2d: kernel must be Kh x Kw x C, got " +
                                    shape_str(kv.shape));
    const int Kh = kv.dim(0), Kw = kv.dim(1), C = kv.dim(2);
    if (C != g.c)
        throw std::invalid_argument("depthwise_conv2d: input channels " + shape_str(xv.shape) +
                                    " do not match kernel " + shape_str(kv.shape));
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("depthwise_conv2d: stride must be 1 or 2");
    if (padding == Padding::same && (Kh % 2 == 0 || Kw % 2 == 0))
        throw std::invalid_argument("depthwise_conv2d: same padding requires odd kernel extents");
    if (bias.valid() && t.value(bias).shape != Shape{C})
        throw std::invalid_argument("depthwise_conv2d: bias shape mismatch");

    const int pad = padding == Padding::same ? detail::same_pad(Kh) : 0;
    const int Ho = detail::out_extent(g.h, Kh, stride, padding, "depthwise_conv2d");
    const int Wo = detail::out_extent(g.w, Kw, stride, padding, "depthwise_conv2d");

    Shape oshape = g.batched ? Shape{g.n, Ho, Wo, C} : Shape{Ho, Wo, C};
    TensorT<T> out(oshape);
    kernels::depthwise_forward(xv.ptr(), g.n, g.h, g.w, C, kv.ptr(), Kh, Kw,
                               bias.valid() ? t.value(bias).ptr() : nullptr, stride, pad,
                               out.ptr(), Ho, Wo);

    return t.record(std::move(out),
                    [x, kernel, bias, stride, pad, Kh, Kw, C, g, Ho, Wo](TapeT<T>& tp, Var self) {
                        const auto& gy = *tp.grad_if(self);
                        kernels::depthwise_backward_input(gy.ptr(), g.n, Ho, Wo, C,
                                                          tp.value(kernel).ptr(), Kh, Kw, stride,
                                                          pad, tp.grad(x).ptr(), g.h, g.w);
                        kernels::depthwise_backward_weights(tp.value(x).ptr(), g.n, g.h, g.w, C,
                                                            gy.ptr(), Ho, Wo, Kh, Kw, stride, pad,
                                                            tp.grad(kernel).ptr());
                        if (bias.valid())
                            kernels::conv2d_backward_bias(gy.ptr(),
                                                          static_cast<int64_t>(g.n) * Ho * Wo, C,
                                                          tp.grad(bias).ptr());
                    });
}

// --- pooling / upsampling ------------------------------------------------------

// Spatial mean per channel: H x W x C -> 1 x 1 x C (batch dim preserved).
template <typename T>
Var global_avg_pool(TapeT<T>& t, Var x) {
    const auto& xv = t.value(x);
    const Geom g = activation_geom(xv.shape, "global_avg_pool");
    Shape oshape = g.batched ? Shape{g.n, 1, 1, g.c} : Shape{1, 1, g.c};
    TensorT<T> out(oshape);
    kernels::gap_forward(xv.ptr(), g.n, g.h, g.w, g.c, out.ptr());
    return t.record(std::move(out), [x, g](TapeT<T>& tp, Var self) {
        kernels::gap_backward(tp.grad_if(self)->ptr(), g.n, g.h, g.w, g.c, tp.grad(x).ptr());
    });
}

// Nearest-neighbor 2x replication.
template <typename T>
Var upsample2x(TapeT<T>& t, Var x) {
    const auto& xv = t.value(x);
    const Geom g = activation_geom(xv.shape, "upsample2x");
    Shape oshape = g.batched ? Shape{g.n, 2 * g.h, 2 * g.w, g.c} : Shape{2 * g.h, 2 * g.w, g.c};
    TensorT<T> out(oshape);
    kernels::upsample2x_forward(xv.ptr(), g.n, g.h, g.w, g.c, out.ptr());
    return t.record(std::move(out), [x, g](TapeT<T>& tp, Var self) {
        kernels::upsample2x_backward(tp.grad_if(self)->ptr(), g.n, g.h, g.w, g.c,
                                     tp.grad(x).ptr());
    });
}

// --- activations ----------------------------------------------------------------

template <typename T>
Var activation(TapeT<T>& t, Act kind, Var x) {
    const auto& xv = t.value(x);
    TensorT<T> out(xv.shape);
    const int64_t n = xv.numel();

    switch (kind) {
        case Act::relu:
            for (int64_t i = 0; i < n; ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
            break;
        case Act::elu:  // alpha = 1
            for (int64_t i = 0; i < n; ++i)
                out[i] = xv[i] > T(0) ? xv[i] : std::expm1(xv[i]);
            break;
        case Act::sigmoid:
            for (int64_t i = 0; i < n; ++i) {
                const T v = xv[i];
                out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                                   : std::exp(v) / (T(1) + std::exp(v));
            }
            break;
        case Act::softmax_channels: {
            const Geom g = activation_geom(xv.shape, "softmax_channels");
            if (g.c < 2)
                throw std::invalid_argument("softmax_channels requires C >= 2, got " +
                                            shape_str(xv.shape));
            const int64_t pixels = static_cast<int64_t>(g.n) * g.h * g.w;
            for (int64_t s = 0; s < pixels; ++s) {
                const T* row = xv.ptr() + s * g.c;
                T* orow = out.ptr() + s * g.c;
                T mx = row[0];
                for (int c = 1; c < g.c; ++c) mx = std::max(mx, row[c]);
                T tot = T(0);
                for (int c = 0; c < g.c; ++c) {
                    orow[c] = std::exp(row[c] - mx);
                    tot += orow[c];
                }
                for (int c = 0; c < g.c; ++c) orow[c] /= tot;
            }
            break;
        }
    }

    return t.record(std::move(out), [kind, x](TapeT<T>& tp, Var self) {
        const auto& gy = *tp.grad_if(self);
        const auto& y = tp.value(self);
        const auto& xv2 = tp.value(x);
        auto& gx = tp.grad(x);
        const int64_t m = y.numel();
        switch (kind) {
            case Act::relu:
                for (int64_t i = 0; i < m; ++i)
                    if (y[i] > T(0)) gx[i] += gy[i];
                break;
            case Act::elu:
                // d/dx = 1 for x > 0, exp(x) = y + 1 otherwise (continuous at 0)
                for (int64_t i = 0; i < m; ++i)
                    gx[i] += gy[i] * (xv2[i] > T(0) ? T(1) : y[i] + T(1));
                break;
            case Act::sigmoid:
                for (int64_t i = 0; i < m; ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
                break;
            case Act::softmax_channels: {
                const Geom g = activation_geom(y.shape, "softmax_channels");
                const int64_t pixels = static_cast<int64_t>(g.n) * g.h * g.w;
                for (int64_t s = 0; s < pixels; ++s) {
                    const T* yrow = y.ptr() + s * g.c;
                    const T* grow = gy.ptr() + s * g.c;
                    T dot = T(0);
                    for (int c = 0; c < g.c; ++c) dot += grow[c] * yrow[c];
                    for (int c = 0; c < g.c; ++c)
                        gx[s * g.c + c] += yrow[c] * (grow[c] - dot);
                }
                break;
            }
        }
    });
}

template <typename T> Var relu(TapeT<T>& t, Var x) { return activation(t, Act::relu, x); }
template <typename T> Var elu(TapeT<T>& t, Var x) { return activation(t, Act::elu, x); }
template <typename T> Var sigmoid(TapeT<T>& t, Var x) { return activation(t, Act::sigmoid, x); }

// --- per-sample per-channel spatial normalization --------------------------------
//
// Batch-independent: each (sample, channel) plane is normalized by its own
// spatial mean/variance, then affine-transformed by scale/shift (length C).
template <typename T>
Var channel_norm(TapeT<T>& t, Var x, Var scale, Var shift, T eps) {
    if (!(eps > T(0))) throw std::invalid_argument("channel_norm: eps must be > 0");
    const auto& xv = t.value(x);
    const Geom g = activation_geom(xv.shape, "channel_norm");
    if (t.value(scale).shape != Shape{g.c} || t.value(shift).shape != Shape{g.c})
        throw std::invalid_argument("channel_norm: scale/shift must have shape [C]");

    const int64_t spatial = static_cast<int64_t>(g.h) * g.w;
    std::vector<T> mean(static_cast<size_t>(g.n) * g.c), inv_std(static_cast<size_t>(g.n) * g.c);
    TensorT<T> out(xv.shape);
    const auto& sc = t.value(scale);
    const auto& sh = t.value(shift);

    for (int n = 0; n < g.n; ++n) {
        const T* xn = xv.ptr() + static_cast<int64_t>(n) * spatial * g.c;
        T* on = out.ptr() + static_cast<int64_t>(n) * spatial * g.c;
        for (int c = 0; c < g.c; ++c) {
            // double accumulation keeps the constant-plane numerator exactly 0
            double acc = 0.0;
            for (int64_t s = 0; s < spatial; ++s) acc += xn[s * g.c + c];
            const T mu = static_cast<T>(acc / static_cast<double>(spatial));
            double vacc = 0.0;
            for (int64_t s = 0; s < spatial; ++s) {
                const double d = static_cast<double>(xn[s * g.c + c]) - mu;
                vacc += d * d;
            }
            const T var = static_cast<T>(vacc / static_cast<double>(spatial));
            const T istd = T(1) / std::sqrt(var + eps);
            mean[static_cast<size_t>(n) * g.c + c] = mu;
            inv_std[static_cast<size_t>(n) * g.c + c] = istd;
            for (int64_t s = 0; s < spatial; ++s)
                on[s * g.c + c] = (xn[s * g.c + c] - mu) * istd * sc[c] + sh[c];
        }
    }

    return t.record(std::move(out),
                    [x, scale, shift, g, spatial, mean = std::move(mean),
                     inv_std = std::move(inv_std)](TapeT<T>& tp, Var self) {
                        const auto& gy = *tp.grad_if(self);
                        const auto& xv2 = tp.value(x);
                        const auto& sc2 = tp.value(scale);
                        auto& gx = tp.grad(x);
                        auto& gsc = tp.grad(scale);
                        auto& gsh = tp.grad(shift);
                        const T inv_m = T(1) / static_cast<T>(spatial);
                        for (int n = 0; n < g.n; ++n) {
                            const int64_t base = static_cast<int64_t>(n) * spatial * g.c;
                            for (int c = 0; c < g.c; ++c) {
                                const T mu = mean[static_cast<size_t>(n) * g.c + c];
                                const T istd = inv_std[static_cast<size_t>(n) * g.c + c];
                                T sum_g = T(0), sum_gy_yhat = T(0);
                                for (int64_t s = 0; s < spatial; ++s) {
                                    const int64_t i = base + s * g.c + c;
                                    const T yhat = (xv2[i] - mu) * istd;
                                    sum_g += gy[i];
                                    sum_gy_yhat += gy[i] * yhat;
                                }
                                gsc[c] += sum_gy_yhat;
                                gsh[c] += sum_g;
                                const T k1 = sum_g * inv_m;
                                const T k2 = sum_gy_yhat * inv_m;
                                for (int64_t s = 0; s < spatial; ++s) {
                                    const int64_t i = base + s * g.c + c;
                                    const T yhat = (xv2[i] - mu) * istd;
                                    gx[i] += sc2[c] * istd * (gy[i] - k1 - yhat * k2);
                                }
                            }
                        }
                    });
}

// --- dropout -------------------------------------------------------------------
//
// Inverted dropout: keep mask drawn from a counter-based hash of (seed, index),
// survivors scaled by 1/(1-rate). The mask is a pure function of the seed so
// backward regenerates it instead of storing it.
namespace detail {
template <typename T>
inline bool drop_element(uint64_t seed, int64_t idx, T rate) {
    uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(idx + 1));
    const T u = static_cast<T>(splitmix64(s) >> 40) * (T(1) / T(16777216));
    return u < rate;
}
}  // namespace detail

template <typename T>
Var dropout(TapeT<T>& t, Var x, T rate, uint64_t seed, bool training) {
    if (rate < T(0) || rate >= T(1))
        throw std::invalid_argument("dropout: rate must be in [0, 1), got " +
                                    std::to_string(static_cast<double>(rate)));
    const auto& xv = t.value(x);
    if (!training || rate == T(0)) {
        TensorT<T> out = xv;
        return t.record(std::move(out), [x](TapeT<T>& tp, Var self) {
            const auto& gy = *tp.grad_if(self);
            auto& gx = tp.grad(x);
            for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
        });
    }
    const T inv_keep = T(1) / (T(1) - rate);
    TensorT<T> out(xv.shape);
    for (int64_t i = 0; i < xv.numel(); ++i)
        out[i] = detail::drop_element(seed, i, rate) ? T(0) : xv[i] * inv_keep;
    return t.record(std::move(out), [x, rate, seed, inv_keep](TapeT<T>& tp, Var self) {
        const auto& gy = *tp.grad_if(self);
        auto& gx = tp.grad(x);
        for (int64_t i = 0; i < gy.numel(); ++i)
            if (!detail::drop_element(seed, i, rate)) gx[i] += gy[i] * inv_keep;
    });
}

// --- reductions ------------------------------------------------------------------

// Sum of all elements -> scalar.
template <typename T>
Var sum(TapeT<T>& t, Var x) {
    const auto& xv = t.value(x);
    T tot = T(0);
    for (int64_t i = 0; i < xv.numel(); ++i) tot += xv[i];
    return t.record(TensorT<T>::scalar(tot), [x](TapeT<T>& tp, Var self) {
        const T g = (*tp.grad_if(self))[0];
        auto& gx = tp.grad(x);
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

// Sum over the channel range [c0, c1) of every pixel -> scalar.
template <typename T>
Var sum_channels(TapeT<T>& t, Var x, int c0, int c1) {
    const auto& xv = t.value(x);
    const Geom g = activation_geom(xv.shape, "sum_channels");
    if (c0 < 0 || c1 > g.c || c0 >= c1)
        throw std::invalid_argument("sum_channels: bad channel range");
    const int64_t pixels = static_cast<int64_t>(g.n) * g.h * g.w;
    T tot = T(0);
    for (int64_t s = 0; s < pixels; ++s)
        for (int c = c0; c < c1; ++c) tot += xv[s * g.c + c];
    return t.record(TensorT<T>::scalar(tot), [x, c0, c1, g](TapeT<T>& tp, Var self) {
        const T gv = (*tp.grad_if(self))[0];
        auto& gx = tp.grad(x);
        const int64_t pixels = static_cast<int64_t>(g.n) * g.h * g.w;
        for (int64_t s = 0; s < pixels; ++s)
            for (int c = c0; c < c1; ++c) gx[s * g.c + c] += gv;
    });
}

// y = k * x for a compile-time constant k.
template <typename T>
Var scale_by(TapeT<T>& t, Var x, T k) {
    const auto& xv = t.value(x);
    TensorT<T> out(xv.shape);
    for (int64_t i = 0; i < xv.numel(); ++i) out[i] = k * xv[i];
    return t.record(std::move(out), [x, k](TapeT<T>& tp, Var self) {
        const auto& gy = *tp.grad_if(self);
        auto& gx = tp.grad(x);
        for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += k * gy[i];
    });
}

}  // namespace med2d::ops
