#pragma once

#include "med2d/ops.hpp"

// Fused differentiable losses. Predictions are probabilities (sigmoid or
// channel-softmax output), targets are {0,1} / one-hot masks of the same
// shape. Each loss is a single tape node with an analytic backward rule.

namespace med2d::ops {

namespace detail {

template <typename T>
inline void check_loss_shapes(const TensorT<T>& pred, const TensorT<T>& target, const char* who) {
    if (pred.shape != target.shape)
        throw std::invalid_argument(std::string(who) + ": pred shape " + shape_str(pred.shape) +
                                    " does not match target " + shape_str(target.shape));
#if MED2D_FINITE_CHECKS
    for (int64_t i = 0; i < pred.numel(); ++i)
        if (pred[i] < T(0) || pred[i] > T(1))
            throw std::invalid_argument(std::string(who) +
                                        ": prediction outside [0,1] at index " +
                                        std::to_string(i));
#endif
}

}  // namespace detail

// 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth), averaged over
// classes and batch samples.
template <typename T>
Var dice_loss(TapeT<T>& t, Var pred, Var target, T smooth = T(1)) {
    if (!(smooth > T(0))) throw std::invalid_argument("dice_loss: smooth must be > 0");
    const auto& pv = t.value(pred);
    const auto& tv = t.value(target);
    detail::check_loss_shapes(pv, tv, "dice_loss");
    const Geom g = activation_geom(pv.shape, "dice_loss");
    const int64_t spatial = static_cast<int64_t>(g.h) * g.w;

    double acc = 0.0;
    for (int n = 0; n < g.n; ++n)
        for (int c = 0; c < g.c; ++c) {
            const int64_t base = static_cast<int64_t>(n) * spatial * g.c;
            double inter = 0.0, psum = 0.0, tsum = 0.0;
            for (int64_t s = 0; s < spatial; ++s) {
                const double p = pv[base + s * g.c + c], tt = tv[base + s * g.c + c];
                inter += p * tt;
                psum += p;
                tsum += tt;
            }
            acc += (2.0 * inter + smooth) / (psum + tsum + smooth);
        }
    const T loss = static_cast<T>(1.0 - acc / static_cast<double>(g.n * g.c));

    return t.record(TensorT<T>::scalar(loss),
                    [pred, target, smooth, g, spatial](TapeT<T>& tp, Var self) {
                        const T gy = (*tp.grad_if(self))[0];
                        const auto& pv2 = tp.value(pred);
                        const auto& tv2 = tp.value(target);
                        auto& gp = tp.grad(pred);
                        auto& gt = tp.grad(target);
                        const double norm = static_cast<double>(gy) / (g.n * g.c);
                        for (int n = 0; n < g.n; ++n)
                            for (int c = 0; c < g.c; ++c) {
                                const int64_t base = static_cast<int64_t>(n) * spatial * g.c;
                                double inter = 0.0, psum = 0.0, tsum = 0.0;
                                for (int64_t s = 0; s < spatial; ++s) {
                                    const double p = pv2[base + s * g.c + c];
                                    const double tt = tv2[base + s * g.c + c];
                                    inter += p * tt;
                                    psum += p;
                                    tsum += tt;
                                }
                                const double denom = psum + tsum + smooth;
                                const double d = (2.0 * inter + smooth) / denom;
                                for (int64_t s = 0; s < spatial; ++s) {
                                    const int64_t i = base + s * g.c + c;
                                    gp[i] -= static_cast<T>(norm * (2.0 * tv2[i] - d) / denom);
                                    gt[i] -= static_cast<T>(norm * (2.0 * pv2[i] - d) / denom);
                                }
                            }
                    });
}

// Binary cross-entropy on probabilities, mean over all elements. Probabilities
// are clamped to [1e-7, 1-1e-7]; the clamped region carries zero gradient.
template <typename T>
Var bce_loss(TapeT<T>& t, Var pred, Var target) {
    const auto& pv = t.value(pred);
    const auto& tv = t.value(target);
    detail::check_loss_shapes(pv, tv, "bce_loss");
    const T eps = T(1e-7);
    const int64_t n = pv.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double p = std::clamp(pv[i], eps, T(1) - eps);
        acc -= tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p);
    }
    const T loss = static_cast<T>(acc / static_cast<double>(n));

    return t.record(TensorT<T>::scalar(loss), [pred, target, eps](TapeT<T>& tp, Var self) {
        const T gy = (*tp.grad_if(self))[0];
        const auto& pv2 = tp.value(pred);
        const auto& tv2 = tp.value(target);
        auto& gp = tp.grad(pred);
        auto& gt = tp.grad(target);
        const int64_t m = pv2.numel();
        const T norm = gy / static_cast<T>(m);
        for (int64_t i = 0; i < m; ++i) {
            const T p = pv2[i];
            if (p > eps && p < T(1) - eps)
                gp[i] += norm * (-tv2[i] / p + (T(1) - tv2[i]) / (T(1) - p));
            const T pc = std::clamp(p, eps, T(1) - eps);
            gt[i] += norm * (std::log(T(1) - pc) - std::log(pc));
        }
    });
}

// Cross-entropy of softmax probabilities against a one-hot target, mean over
// pixels.
template <typename T>
Var ce_loss(TapeT<T>& t, Var pred, Var target) {
    const auto& pv = t.value(pred);
    const auto& tv = t.value(target);
    detail::check_loss_shapes(pv, tv, "ce_loss");
    const Geom g = activation_geom(pv.shape, "ce_loss");
    const T eps = T(1e-7);
    const int64_t pixels = static_cast<int64_t>(g.n) * g.h * g.w;
    double acc = 0.0;
    for (int64_t s = 0; s < pixels; ++s)
        for (int c = 0; c < g.c; ++c) {
            const int64_t i = s * g.c + c;
            if (tv[i] != T(0))
                acc -= static_cast<double>(tv[i]) * std::log(std::max<double>(pv[i], eps));
        }
    const T loss = static_cast<T>(acc / static_cast<double>(pixels));

    return t.record(TensorT<T>::scalar(loss), [pred, target, g, eps](TapeT<T>& tp, Var self) {
        const T gy = (*tp.grad_if(self))[0];
        const auto& pv2 = tp.value(pred);
        const auto& tv2 = tp.value(target);
        auto& gp = tp.grad(pred);
        auto& gt = tp.grad(target);
        const int64_t pixels = static_cast<int64_t>(g.n) * g.h * g.w;
        const T norm = gy / static_cast<T>(pixels);
        for (int64_t s = 0; s < pixels; ++s)
            for (int c = 0; c < g.c; ++c) {
                const int64_t i = s * g.c + c;
                if (pv2[i] > eps) gp[i] -= norm * tv2[i] / pv2[i];
                gt[i] -= norm * std::log(std::max(pv2[i], eps));
            }
    });
}

}  // namespace med2d::ops
