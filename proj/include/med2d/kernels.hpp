#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "med2d/tensor.hpp"

// Raw convolution / pooling / resize kernels on N x H x W x C buffers.
//
// Every parallel loop is gather-style: each output element is produced by one
// thread with a fixed inner accumulation order, so results are bitwise
// identical for any thread count. Channels-last keeps the innermost loops on
// contiguous memory.

namespace med2d::kernels {

inline int& thread_cap_ref() {
    static int cap = [] {
        if (const char* e = std::getenv("MED2D_THREADS")) {
            int v = std::atoi(e);
            if (v >= 1) return v;
        }
#ifdef _OPENMP
        return omp_get_max_threads();
#else
        return 1;
#endif
    }();
    return cap;
}

inline int threads() { return thread_cap_ref(); }
inline void set_threads(int n) { thread_cap_ref() = n < 1 ? 1 : n; }

#ifdef _OPENMP
#define MED2D_PARALLEL_FOR _Pragma("omp parallel for schedule(static) num_threads(med2d::kernels::threads())")
#else
#define MED2D_PARALLEL_FOR
#endif

// --- standard convolution (cross-correlation) ------------------------------

template <typename T>
void conv2d_forward(const T* x, int N, int H, int W, int Cin, const T* w, int Kh, int Kw,
                    int Cout, const T* bias, int stride, int pad, T* y, int Ho, int Wo) {
    MED2D_PARALLEL_FOR
    for (int r = 0; r < N * Ho; ++r) {
        const int n = r / Ho, oi = r % Ho;
        for (int oj = 0; oj < Wo; ++oj) {
            T* yrow = y + ((static_cast<int64_t>(n) * Ho + oi) * Wo + oj) * Cout;
            for (int co = 0; co < Cout; ++co) yrow[co] = bias ? bias[co] : T(0);
            for (int p = 0; p < Kh; ++p) {
                const int ii = oi * stride - pad + p;
                if (ii < 0 || ii >= H) continue;
                for (int q = 0; q < Kw; ++q) {
                    const int jj = oj * stride - pad + q;
                    if (jj < 0 || jj >= W) continue;
                    const T* xpix = x + ((static_cast<int64_t>(n) * H + ii) * W + jj) * Cin;
                    const T* wpos = w + (static_cast<int64_t>(p) * Kw + q) * Cin * Cout;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const T xv = xpix[ci];
                        const T* wrow = wpos + static_cast<int64_t>(ci) * Cout;
                        for (int co = 0; co < Cout; ++co) yrow[co] += xv * wrow[co];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* gy, int N, int Ho, int Wo, int Cout, const T* w, int Kh,
                           int Kw, int Cin, int stride, int pad, T* gx, int H, int W) {
    MED2D_PARALLEL_FOR
    for (int r = 0; r < N * H; ++r) {
        const int n = r / H, i = r % H;
        for (int j = 0; j < W; ++j) {
            T* gxpix = gx + ((static_cast<int64_t>(n) * H + i) * W + j) * Cin;
            for (int p = 0; p < Kh; ++p) {
                const int num_i = i + pad - p;
                if (num_i < 0 || num_i % stride) continue;
                const int oi = num_i / stride;
                if (oi >= Ho) continue;
                for (int q = 0; q < Kw; ++q) {
                    const int num_j = j + pad - q;
                    if (num_j < 0 || num_j % stride) continue;
                    const int oj = num_j / stride;
                    if (oj >= Wo) continue;
                    const T* gyrow =
                        gy + ((static_cast<int64_t>(n) * Ho + oi) * Wo + oj) * Cout;
                    const T* wpos = w + (static_cast<int64_t>(p) * Kw + q) * Cin * Cout;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const T* wrow = wpos + static_cast<int64_t>(ci) * Cout;
                        T acc = T(0);
                        for (int co = 0; co < Cout; ++co) acc += gyrow[co] * wrow[co];
                        gxpix[ci] += acc;
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weights(const T* x, int N, int H, int W, int Cin, const T* gy, int Ho,
                             int Wo, int Cout, int Kh, int Kw, int stride, int pad, T* gw) {
    MED2D_PARALLEL_FOR
    for (int pq = 0; pq < Kh * Kw; ++pq) {
        const int p = pq / Kw, q = pq % Kw;
        T* gwpos = gw + static_cast<int64_t>(pq) * Cin * Cout;
        for (int n = 0; n < N; ++n) {
            for (int oi = 0; oi < Ho; ++oi) {
                const int ii = oi * stride - pad + p;
                if (ii < 0 || ii >= H) continue;
                for (int oj = 0; oj < Wo; ++oj) {
                    const int jj = oj * stride - pad + q;
                    if (jj < 0 || jj >= W) continue;
                    const T* xpix = x + ((static_cast<int64_t>(n) * H + ii) * W + jj) * Cin;
                    const T* gyrow =
                        gy + ((static_cast<int64_t>(n) * Ho + oi) * Wo + oj) * Cout;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const T xv = xpix[ci];
                        T* gwrow = gwpos + static_cast<int64_t>(ci) * Cout;
                        for (int co = 0; co < Cout; ++co) gwrow[co] += xv * gyrow[co];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_bias(const T* gy, int64_t pixels, int Cout, T* gb) {
    for (int64_t i = 0; i < pixels; ++i) {
        const T* gyrow = gy + i * Cout;
        for (int co = 0; co < Cout; ++co) gb[co] += gyrow[co];
    }
}

// --- depthwise convolution --------------------------------------------------

template <typename T>
void depthwise_forward(const T* x, int N, int H, int W, int C, const T* w, int Kh, int Kw,
                       const T* bias, int stride, int pad, T* y, int Ho, int Wo) {
    MED2D_PARALLEL_FOR
    for (int r = 0; r < N * Ho; ++r) {
        const int n = r / Ho, oi = r % Ho;
        for (int oj = 0; oj < Wo; ++oj) {
            T* yrow = y + ((static_cast<int64_t>(n) * Ho + oi) * Wo + oj) * C;
            for (int c = 0; c < C; ++c) yrow[c] = bias ? bias[c] : T(0);
            for (int p = 0; p < Kh; ++p) {
                const int ii = oi * stride - pad + p;
                if (ii < 0 || ii >= H) continue;
                for (int q = 0; q < Kw; ++q) {
                    const int jj = oj * stride - pad + q;
                    if (jj < 0 || jj >= W) continue;
                    const T* xpix = x + ((static_cast<int64_t>(n) * H + ii) * W + jj) * C;
                    const T* wrow = w + (static_cast<int64_t>(p) * Kw + q) * C;
                    for (int c = 0; c < C; ++c) yrow[c] += xpix[c] * wrow[c];
                }
            }
        }
    }
}

template <typename T>
void depthwise_backward_input(const T* gy, int N, int Ho, int Wo, int C, const T* w, int Kh,
                              int Kw, int stride, int pad, T* gx, int H, int W) {
    MED2D_PARALLEL_FOR
    for (int r = 0; r < N * H; ++r) {
        const int n = r / H, i = r % H;
        for (int j = 0; j < W; ++j) {
            T* gxpix = gx + ((static_cast<int64_t>(n) * H + i) * W + j) * C;
            for (int p = 0; p < Kh; ++p) {
                const int num_i = i + pad - p;
                if (num_i < 0 || num_i % stride) continue;
                const int oi = num_i / stride;
                if (oi >= Ho) continue;
                for (int q = 0; q < Kw; ++q) {
                    const int num_j = j + pad - q;
                    if (num_j < 0 || num_j % stride) continue;
                    const int oj = num_j / stride;
                    if (oj >= Wo) continue;
                    const T* gyrow = gy + ((static_cast<int64_t>(n) * Ho + oi) * Wo + oj) * C;
                    const T* wrow = w + (static_cast<int64_t>(p) * Kw + q) * C;
                    for (int c = 0; c < C; ++c) gxpix[c] += gyrow[c] * wrow[c];
                }
            }
        }
    }
}

template <typename T>
void depthwise_backward_weights(const T* x, int N, int H, int W, int C, const T* gy, int Ho,
                                int Wo, int Kh, int Kw, int stride, int pad, T* gw) {
    MED2D_PARALLEL_FOR
    for (int pq = 0; pq < Kh * Kw; ++pq) {
        const int p = pq / Kw, q = pq % Kw;
        T* gwrow = gw + static_cast<int64_t>(pq) * C;
        for (int n = 0; n < N; ++n) {
            for (int oi = 0; oi < Ho; ++oi) {
                const int ii = oi * stride - pad + p;
                if (ii < 0 || ii >= H) continue;
                for (int oj = 0; oj < Wo; ++oj) {
                    const int jj = oj * stride - pad + q;
                    if (jj < 0 || jj >= W) continue;
                    const T* xpix = x + ((static_cast<int64_t>(n) * H + ii) * W + jj) * C;
                    const T* gyrow = gy + ((static_cast<int64_t>(n) * Ho + oi) * Wo + oj) * C;
                    for (int c = 0; c < C; ++c) gwrow[c] += xpix[c] * gyrow[c];
                }
            }
        }
    }
}

// --- pooling / upsampling ---------------------------------------------------

template <typename T>
void gap_forward(const T* x, int N, int H, int W, int C, T* y) {
    const T inv = T(1) / static_cast<T>(H * W);
    for (int n = 0; n < N; ++n) {
        T* yrow = y + static_cast<int64_t>(n) * C;
        for (int c = 0; c < C; ++c) yrow[c] = T(0);
        const T* xn = x + static_cast<int64_t>(n) * H * W * C;
        for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i)
            for (int c = 0; c < C; ++c) yrow[c] += xn[i * C + c];
        for (int c = 0; c < C; ++c) yrow[c] *= inv;
    }
}

template <typename T>
void gap_backward(const T* gy, int N, int H, int W, int C, T* gx) {
    const T inv = T(1) / static_cast<T>(H * W);
    for (int n = 0; n < N; ++n) {
        const T* gyrow = gy + static_cast<int64_t>(n) * C;
        T* gxn = gx + static_cast<int64_t>(n) * H * W * C;
        for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i)
            for (int c = 0; c < C; ++c) gxn[i * C + c] += gyrow[c] * inv;
    }
}

template <typename T>
void upsample2x_forward(const T* x, int N, int H, int W, int C, T* y) {
    const int Ho = 2 * H, Wo = 2 * W;
    MED2D_PARALLEL_FOR
    for (int r = 0; r < N * Ho; ++r) {
        const int n = r / Ho, oi = r % Ho;
        const int i = oi / 2;
        for (int oj = 0; oj < Wo; ++oj) {
            const int j = oj / 2;
            const T* xpix = x + ((static_cast<int64_t>(n) * H + i) * W + j) * C;
            T* ypix = y + ((static_cast<int64_t>(n) * Ho + oi) * Wo + oj) * C;
            for (int c = 0; c < C; ++c) ypix[c] = xpix[c];
        }
    }
}

template <typename T>
void upsample2x_backward(const T* gy, int N, int H, int W, int C, T* gx) {
    // H, W are the *input* dims; each input pixel collects its 2x2 block
    const int Ho = 2 * H, Wo = 2 * W;
    MED2D_PARALLEL_FOR
    for (int r = 0; r < N * H; ++r) {
        const int n = r / H, i = r % H;
        for (int j = 0; j < W; ++j) {
            T* gxpix = gx + ((static_cast<int64_t>(n) * H + i) * W + j) * C;
            for (int di = 0; di < 2; ++di)
                for (int dj = 0; dj < 2; ++dj) {
                    const T* gypix =
                        gy + ((static_cast<int64_t>(n) * Ho + 2 * i + di) * Wo + 2 * j + dj) * C;
                    for (int c = 0; c < C; ++c) gxpix[c] += gypix[c];
                }
        }
    }
}

// --- resize (data path + saliency upsampling; not differentiable) -----------

template <typename T>
void resize_bilinear(const T* x, int H, int W, int C, T* y, int Ho, int Wo) {
    const double sy = static_cast<double>(H) / Ho;
    const double sx = static_cast<double>(W) / Wo;
    for (int oi = 0; oi < Ho; ++oi) {
        double fy = (oi + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        int i0 = static_cast<int>(fy);
        int i1 = i0 + 1 < H ? i0 + 1 : H - 1;
        const double wy = fy - i0;
        for (int oj = 0; oj < Wo; ++oj) {
            double fx = (oj + 0.5) * sx - 0.5;
            if (fx < 0) fx = 0;
            int j0 = static_cast<int>(fx);
            int j1 = j0 + 1 < W ? j0 + 1 : W - 1;
            const double wx = fx - j0;
            T* ypix = y + (static_cast<int64_t>(oi) * Wo + oj) * C;
            for (int c = 0; c < C; ++c) {
                const double a = x[(static_cast<int64_t>(i0) * W + j0) * C + c];
                const double b = x[(static_cast<int64_t>(i0) * W + j1) * C + c];
                const double d = x[(static_cast<int64_t>(i1) * W + j0) * C + c];
                const double e = x[(static_cast<int64_t>(i1) * W + j1) * C + c];
                ypix[c] = static_cast<T>((a * (1 - wx) + b * wx) * (1 - wy) +
                                         (d * (1 - wx) + e * wx) * wy);
            }
        }
    }
}

template <typename T>
void resize_nearest(const T* x, int H, int W, int C, T* y, int Ho, int Wo) {
    const double sy = static_cast<double>(H) / Ho;
    const double sx = static_cast<double>(W) / Wo;
    for (int oi = 0; oi < Ho; ++oi) {
        int i = static_cast<int>((oi + 0.5) * sy);
        if (i >= H) i = H - 1;
        for (int oj = 0; oj < Wo; ++oj) {
            int j = static_cast<int>((oj + 0.5) * sx);
            if (j >= W) j = W - 1;
            const T* xpix = x + (static_cast<int64_t>(i) * W + j) * C;
            T* ypix = y + (static_cast<int64_t>(oi) * Wo + oj) * C;
            for (int c = 0; c < C; ++c) ypix[c] = xpix[c];
        }
    }
}

}  // namespace med2d::kernels
