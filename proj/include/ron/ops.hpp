#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "ron/tensor.hpp"

namespace ron {

namespace detail {

template <typename T>
inline bool want_grad(Graph<T>* g, std::initializer_list<const Tensor<T>*> inputs) {
    if (!g) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad) return true;
    return false;
}

inline int out_extent(int in, int k, int stride, int pad) {
    int num = in + 2 * pad - k;
    if (num < 0 || num % stride != 0)
        throw ConfigError("non-integral convolution output extent");
    return num / stride + 1;
}

}  // namespace detail

namespace detail {

// Unrolls the k*k receptive field of every output pixel of one image into a
// [Ci*k*k, Ho*Wo] matrix so the convolution and both of its adjoints become
// dense matrix products over long contiguous rows.
template <typename T>
void im2col(const T* in, int Ci, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            T* col) {
    for (int ci = 0; ci < Ci; ++ci) {
        const T* chan = in + static_cast<size_t>(ci) * H * W;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + (static_cast<size_t>(ci) * k * k + ky * k + kx) *
                                   (static_cast<size_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    T* orow = row + static_cast<size_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(orow, orow + Wo, T(0));
                        continue;
                    }
                    int ox0 = 0;
                    while (ox0 < Wo && ox0 * stride + kx - pad < 0) ++ox0;
                    int ox1 = Wo;
                    while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= W) --ox1;
                    std::fill(orow, orow + ox0, T(0));
                    std::fill(orow + ox1, orow + Wo, T(0));
                    const T* irow = chan + static_cast<size_t>(iy) * W + kx - pad;
                    if (stride == 1) {
                        std::copy(irow + ox0, irow + ox1, orow + ox0);
                    } else {
                        for (int ox = ox0; ox < ox1; ++ox)
                            orow[ox] = irow[static_cast<size_t>(ox) * stride];
                    }
                }
            }
    }
}

// Scatter-add adjoint of im2col.
template <typename T>
void col2im_add(const T* col, int Ci, int H, int W, int k, int stride, int pad, int Ho,
                int Wo, T* gin) {
    for (int ci = 0; ci < Ci; ++ci) {
        T* chan = gin + static_cast<size_t>(ci) * H * W;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + (static_cast<size_t>(ci) * k * k + ky * k + kx) *
                                         (static_cast<size_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    int ox0 = 0;
                    while (ox0 < Wo && ox0 * stride + kx - pad < 0) ++ox0;
                    int ox1 = Wo;
                    while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= W) --ox1;
                    const T* orow = row + static_cast<size_t>(oy) * Wo;
                    T* irow = chan + static_cast<size_t>(iy) * W + kx - pad;
                    if (stride == 1) {
                        for (int ox = ox0; ox < ox1; ++ox) irow[ox] += orow[ox];
                    } else {
                        for (int ox = ox0; ox < ox1; ++ox)
                            irow[static_cast<size_t>(ox) * stride] += orow[ox];
                    }
                }
            }
    }
}

}  // namespace detail

// Cross-correlation. weight is [Cout, Cin, k, k]; bias, when nonempty, is
// [1, Cout, 1, 1].
template <typename T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& b, int stride, int pad) {
    const int N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int Co = w.shape[0], k = w.shape[2];
    if (w.shape[1] != Ci) throw DimensionError("conv2d: input channels mismatch");
    if (w.shape[2] != w.shape[3]) throw DimensionError("conv2d: non-square kernel");
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: bad stride/pad");
    const bool has_bias = b.size() > 0;
    if (has_bias && (b.shape[1] != Co || b.size() != static_cast<size_t>(Co)))
        throw DimensionError("conv2d: bias shape mismatch");
    const int Ho = detail::out_extent(H, k, stride, pad);
    const int Wo = detail::out_extent(W, k, stride, pad);

    Tensor<T> y(N, Co, Ho, Wo);
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* yp = y.ptr();
    const size_t M = static_cast<size_t>(Ho) * Wo;
    const size_t K = static_cast<size_t>(Ci) * k * k;
    std::vector<T> col(K * M);

    for (int n = 0; n < N; ++n) {
        detail::im2col(xp + static_cast<size_t>(n) * Ci * H * W, Ci, H, W, k, stride, pad,
                       Ho, Wo, col.data());
        // y[n] = W (Co x K) * col (K x M), rows of col are contiguous
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int co = 0; co < Co; ++co) {
            T* out = yp + (static_cast<size_t>(n) * Co + co) * M;
            const T bias = has_bias ? (*b.data)[co] : T(0);
            std::fill(out, out + M, bias);
            const T* wrow = wp + static_cast<size_t>(co) * K;
            for (size_t kk = 0; kk < K; ++kk) {
                const T wv = wrow[kk];
                if (wv == T(0)) continue;
                const T* crow = col.data() + kk * M;
                for (size_t m = 0; m < M; ++m) out[m] += wv * crow[m];
            }
        }
    }

    if (detail::want_grad(g, {&x, &w, &b})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> xc = x, wc = w, bc = b, yc = y;
        xc.ensure_grad();
        wc.ensure_grad();
        if (has_bias) bc.ensure_grad();
        g->record([xc, wc, bc, yc, stride, pad, has_bias]() mutable {
            const int N = xc.shape[0], Ci = xc.shape[1], H = xc.shape[2], W = xc.shape[3];
            const int Co = wc.shape[0], k = wc.shape[2];
            const int Ho = yc.shape[2], Wo = yc.shape[3];
            const T* gy = yc.gptr();
            const T* xp = xc.ptr();
            const T* wp = wc.ptr();

            const size_t M = static_cast<size_t>(Ho) * Wo;
            const size_t K = static_cast<size_t>(Ci) * k * k;
            T* gb = has_bias ? bc.gptr() : nullptr;
            T* gw = wc.gptr();
            T* gx = xc.gptr();
            std::vector<T> col(K * M), gcol(K * M);

            for (int n = 0; n < N; ++n) {
                const T* go = gy + static_cast<size_t>(n) * Co * M;
                detail::im2col(xp + static_cast<size_t>(n) * Ci * H * W, Ci, H, W, k,
                               stride, pad, Ho, Wo, col.data());

                if (has_bias)
                    for (int co = 0; co < Co; ++co) {
                        const T* grow = go + static_cast<size_t>(co) * M;
                        T s = T(0);
                        for (size_t m = 0; m < M; ++m) s += grow[m];
                        gb[co] += s;
                    }

                // gw += gy[n] (Co x M) * col^T (M x K): row-vs-row dot products
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int co = 0; co < Co; ++co) {
                    const T* grow = go + static_cast<size_t>(co) * M;
                    T* gwrow = gw + static_cast<size_t>(co) * K;
                    for (size_t kk = 0; kk < K; ++kk) {
                        const T* crow = col.data() + kk * M;
                        T acc = T(0);
                        for (size_t m = 0; m < M; ++m) acc += grow[m] * crow[m];
                        gwrow[kk] += acc;
                    }
                }

                // gcol = W^T (K x Co) * gy[n] (Co x M), then scatter back to gx
                std::fill(gcol.begin(), gcol.end(), T(0));
                for (int co = 0; co < Co; ++co) {
                    const T* grow = go + static_cast<size_t>(co) * M;
                    const T* wrow = wp + static_cast<size_t>(co) * K;
                    for (size_t kk = 0; kk < K; ++kk) {
                        const T wv = wrow[kk];
                        if (wv == T(0)) continue;
                        T* gcrow = gcol.data() + kk * M;
                        for (size_t m = 0; m < M; ++m) gcrow[m] += wv * grow[m];
                    }
                }
                detail::col2im_add(gcol.data(), Ci, H, W, k, stride, pad, Ho, Wo,
                                   gx + static_cast<size_t>(n) * Ci * H * W);
            }
        });
    }
    return y;
}

// Transposed convolution, exact 2x upsampling only. weight is
// [Cin, Cout, 2, 2] (ConvTranspose convention).
template <typename T>
Tensor<T> deconv2d(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, int stride) {
    const int N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int k = w.shape[2];
    if (stride != 2 || k != 2 || w.shape[3] != 2)
        throw ConfigError("deconv2d: only kernel 2, stride 2 supported");
    if (w.shape[0] != Ci) throw DimensionError("deconv2d: input channels mismatch");
    const int Co = w.shape[1];
    const int Ho = 2 * H, Wo = 2 * W;

    Tensor<T> y(N, Co, Ho, Wo);
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* yp = y.ptr();
    for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Ci; ++ci) {
            const T* in = xp + (static_cast<size_t>(n) * Ci + ci) * H * W;
            for (int co = 0; co < Co; ++co) {
                T* out = yp + (static_cast<size_t>(n) * Co + co) * Ho * Wo;
                const T* wk = wp + (static_cast<size_t>(ci) * Co + co) * 4;
                for (int iy = 0; iy < H; ++iy)
                    for (int ix = 0; ix < W; ++ix) {
                        const T v = in[static_cast<size_t>(iy) * W + ix];
                        T* o = out + static_cast<size_t>(2 * iy) * Wo + 2 * ix;
                        o[0] += v * wk[0];
                        o[1] += v * wk[1];
                        o[Wo] += v * wk[2];
                        o[Wo + 1] += v * wk[3];
                    }
            }
        }

    if (detail::want_grad(g, {&x, &w})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> xc = x, wc = w, yc = y;
        xc.ensure_grad();
        wc.ensure_grad();
        g->record([xc, wc, yc]() mutable {
            const int N = xc.shape[0], Ci = xc.shape[1], H = xc.shape[2], W = xc.shape[3];
            const int Co = wc.shape[1];
            const int Wo = yc.shape[3];
            const T* gy = yc.gptr();
            const T* xp = xc.ptr();
            const T* wp = wc.ptr();
            T* gx = xc.gptr();
            T* gw = wc.gptr();
            for (int n = 0; n < N; ++n)
                for (int ci = 0; ci < Ci; ++ci) {
                    const T* in = xp + (static_cast<size_t>(n) * Ci + ci) * H * W;
                    T* gin = gx + (static_cast<size_t>(n) * Ci + ci) * H * W;
                    for (int co = 0; co < Co; ++co) {
                        const T* go = gy + (static_cast<size_t>(n) * Co + co) * static_cast<size_t>(2 * H) * Wo;
                        const T* wk = wp + (static_cast<size_t>(ci) * Co + co) * 4;
                        T* gwk = gw + (static_cast<size_t>(ci) * Co + co) * 4;
                        for (int iy = 0; iy < H; ++iy)
                            for (int ix = 0; ix < W; ++ix) {
                                const T* o = go + static_cast<size_t>(2 * iy) * Wo + 2 * ix;
                                const T v = in[static_cast<size_t>(iy) * W + ix];
                                gin[static_cast<size_t>(iy) * W + ix] +=
                                    wk[0] * o[0] + wk[1] * o[1] + wk[2] * o[Wo] + wk[3] * o[Wo + 1];
                                gwk[0] += v * o[0];
                                gwk[1] += v * o[1];
                                gwk[2] += v * o[Wo];
                                gwk[3] += v * o[Wo + 1];
                            }
                    }
                }
        });
    }
    return y;
}

// 2x2 max pooling, stride 2. Ties route gradient to the first occurrence
// in row-major order.
template <typename T>
Tensor<T> maxpool2(Graph<T>* g, const Tensor<T>& x) {
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (H % 2 != 0 || W % 2 != 0) throw DimensionError("maxpool2: odd extent");
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> y(N, C, Ho, Wo);
    auto argmax = std::make_shared<std::vector<int32_t>>(y.size());
    const T* xp = x.ptr();
    T* yp = y.ptr();
    int32_t* am = argmax->data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* in = xp + (static_cast<size_t>(n) * C + c) * H * W;
            T* out = yp + (static_cast<size_t>(n) * C + c) * Ho * Wo;
            int32_t* ao = am + (static_cast<size_t>(n) * C + c) * Ho * Wo;
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    const int base = 2 * oy * W + 2 * ox;
                    int best = base;
                    T bv = in[base];
                    const int cand[3] = {base + 1, base + W, base + W + 1};
                    for (int c2 : cand)
                        if (in[c2] > bv) {
                            bv = in[c2];
                            best = c2;
                        }
                    out[static_cast<size_t>(oy) * Wo + ox] = bv;
                    ao[static_cast<size_t>(oy) * Wo + ox] = best;
                }
        }

    if (detail::want_grad(g, {&x})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> xc = x, yc = y;
        xc.ensure_grad();
        g->record([xc, yc, argmax]() mutable {
            const int N = xc.shape[0], C = xc.shape[1], H = xc.shape[2], W = xc.shape[3];
            const int Ho = H / 2, Wo = W / 2;
            const T* gy = yc.gptr();
            T* gx = xc.gptr();
            const int32_t* am = argmax->data();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const size_t plane_out = (static_cast<size_t>(n) * C + c) * Ho * Wo;
                    const size_t plane_in = (static_cast<size_t>(n) * C + c) * H * W;
                    for (int i = 0; i < Ho * Wo; ++i)
                        gx[plane_in + am[plane_out + i]] += gy[plane_out + i];
                }
        });
    }
    return y;
}

template <typename T>
Tensor<T> relu(Graph<T>* g, const Tensor<T>& x) {
    Tensor<T> y(x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    const T* xp = x.ptr();
    T* yp = y.ptr();
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);

    if (detail::want_grad(g, {&x})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> xc = x, yc = y;
        xc.ensure_grad();
        g->record([xc, yc]() mutable {
            const T* xp = xc.ptr();
            const T* gy = yc.gptr();
            T* gx = xc.gptr();
            const size_t n = xc.size();
            for (size_t i = 0; i < n; ++i)
                if (xp[i] > T(0)) gx[i] += gy[i];
        });
    }
    return y;
}

template <typename T>
Tensor<T> add(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
    Tensor<T> y(a.shape[0], a.shape[1], a.shape[2], a.shape[3]);
    const T* ap = a.ptr();
    const T* bp = b.ptr();
    T* yp = y.ptr();
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) yp[i] = ap[i] + bp[i];

    if (detail::want_grad(g, {&a, &b})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> ac = a, bc = b, yc = y;
        ac.ensure_grad();
        bc.ensure_grad();
        g->record([ac, bc, yc]() mutable {
            const T* gy = yc.gptr();
            T* ga = ac.gptr();
            T* gb = bc.gptr();
            const size_t n = ac.size();
            for (size_t i = 0; i < n; ++i) {
                ga[i] += gy[i];
                gb[i] += gy[i];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> concat_channels(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape[0] != b.shape[0] || a.shape[2] != b.shape[2] || a.shape[3] != b.shape[3])
        throw DimensionError("concat_channels: N/H/W mismatch");
    const int N = a.shape[0], Ca = a.shape[1], Cb = b.shape[1];
    const int H = a.shape[2], W = a.shape[3];
    Tensor<T> y(N, Ca + Cb, H, W);
    const size_t plane = static_cast<size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy_n(a.ptr() + static_cast<size_t>(n) * Ca * plane, Ca * plane,
                    y.ptr() + static_cast<size_t>(n) * (Ca + Cb) * plane);
        std::copy_n(b.ptr() + static_cast<size_t>(n) * Cb * plane, Cb * plane,
                    y.ptr() + (static_cast<size_t>(n) * (Ca + Cb) + Ca) * plane);
    }

    if (detail::want_grad(g, {&a, &b})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> ac = a, bc = b, yc = y;
        ac.ensure_grad();
        bc.ensure_grad();
        g->record([ac, bc, yc]() mutable {
            const int N = ac.shape[0], Ca = ac.shape[1], Cb = bc.shape[1];
            const size_t plane = static_cast<size_t>(ac.shape[2]) * ac.shape[3];
            const T* gy = yc.gptr();
            T* ga = ac.gptr();
            T* gb = bc.gptr();
            for (int n = 0; n < N; ++n) {
                const T* gya = gy + static_cast<size_t>(n) * (Ca + Cb) * plane;
                const T* gyb = gya + Ca * plane;
                for (size_t i = 0; i < Ca * plane; ++i)
                    ga[static_cast<size_t>(n) * Ca * plane + i] += gya[i];
                for (size_t i = 0; i < Cb * plane; ++i)
                    gb[static_cast<size_t>(n) * Cb * plane + i] += gyb[i];
            }
        });
    }
    return y;
}

// Softmax over contiguous channel groups, independently per spatial location.
// Stabilized by per-group max subtraction.
template <typename T>
Tensor<T> softmax_groups(Graph<T>* g, const Tensor<T>& x, int group) {
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (group < 1 || C % group != 0)
        throw DimensionError("softmax_groups: channels not divisible by group");
    Tensor<T> y(N, C, H, W);
    const int ngroups = C / group;
    const size_t plane = static_cast<size_t>(H) * W;
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (int n = 0; n < N; ++n)
        for (int gi = 0; gi < ngroups; ++gi)
            for (size_t s = 0; s < plane; ++s) {
                const size_t base = (static_cast<size_t>(n) * C + static_cast<size_t>(gi) * group) * plane + s;
                T mx = xp[base];
                for (int c = 1; c < group; ++c)
                    mx = std::max(mx, xp[base + static_cast<size_t>(c) * plane]);
                T sum = T(0);
                for (int c = 0; c < group; ++c) {
                    const T e = std::exp(xp[base + static_cast<size_t>(c) * plane] - mx);
                    yp[base + static_cast<size_t>(c) * plane] = e;
                    sum += e;
                }
                for (int c = 0; c < group; ++c) yp[base + static_cast<size_t>(c) * plane] /= sum;
            }

    if (detail::want_grad(g, {&x})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> xc = x, yc = y;
        xc.ensure_grad();
        g->record([xc, yc, group]() mutable {
            const int N = xc.shape[0], C = xc.shape[1];
            const int ngroups = C / group;
            const size_t plane = static_cast<size_t>(xc.shape[2]) * xc.shape[3];
            const T* p = yc.ptr();
            const T* gy = yc.gptr();
            T* gx = xc.gptr();
            for (int n = 0; n < N; ++n)
                for (int gi = 0; gi < ngroups; ++gi)
                    for (size_t s = 0; s < plane; ++s) {
                        const size_t base =
                            (static_cast<size_t>(n) * C + static_cast<size_t>(gi) * group) * plane + s;
                        T dot = T(0);
                        for (int c = 0; c < group; ++c) {
                            const size_t i = base + static_cast<size_t>(c) * plane;
                            dot += gy[i] * p[i];
                        }
                        for (int c = 0; c < group; ++c) {
                            const size_t i = base + static_cast<size_t>(c) * plane;
                            gx[i] += p[i] * (gy[i] - dot);
                        }
                    }
        });
    }
    return y;
}

// One selected location for a cross-entropy sum: probability tensor index
// (n, channel, y, x) of the target class.
struct CeTarget {
    int n, c, y, x;
};

inline constexpr double kLogClamp = 1e-12;

// Sum of -log p_target over the selected locations. probs come from
// softmax_groups; p is clamped below at 1e-12 before the log.
template <typename T>
Tensor<T> cross_entropy_sum(Graph<T>* g, const Tensor<T>& probs,
                            const std::vector<CeTarget>& targets) {
    Tensor<T> y(1, 1, 1, 1);
    T loss = T(0);
    for (const CeTarget& t : targets) {
        const T p = std::max(probs.at(t.n, t.c, t.y, t.x), static_cast<T>(kLogClamp));
        loss -= std::log(p);
    }
    (*y.data)[0] = loss;

    if (detail::want_grad(g, {&probs})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> pc = probs, yc = y;
        pc.ensure_grad();
        auto tg = std::make_shared<std::vector<CeTarget>>(targets);
        g->record([pc, yc, tg]() mutable {
            const T go = (*yc.grad)[0];
            for (const CeTarget& t : *tg) {
                const size_t i = pc.index(t.n, t.c, t.y, t.x);
                const T p = std::max((*pc.data)[i], static_cast<T>(kLogClamp));
                (*pc.grad)[i] -= go / p;
            }
        });
    }
    return y;
}

// One positive anchor's regression slot: 4 consecutive channels starting at
// c0, with the encoded target offsets.
struct LocTarget {
    int n, c0, y, x;
    std::array<double, 4> t;
};

template <typename T>
inline T smooth_l1_scalar(T d) {
    const T a = std::abs(d);
    return a < T(1) ? T(0.5) * d * d : a - T(0.5);
}

// Smooth-L1 summed over the 4 offsets of every listed anchor.
template <typename T>
Tensor<T> smooth_l1_sum(Graph<T>* g, const Tensor<T>& preds,
                        const std::vector<LocTarget>& items) {
    Tensor<T> y(1, 1, 1, 1);
    T loss = T(0);
    for (const LocTarget& it : items)
        for (int j = 0; j < 4; ++j)
            loss += smooth_l1_scalar(preds.at(it.n, it.c0 + j, it.y, it.x) -
                                     static_cast<T>(it.t[j]));
    (*y.data)[0] = loss;

    if (detail::want_grad(g, {&preds})) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> pc = preds, yc = y;
        pc.ensure_grad();
        auto its = std::make_shared<std::vector<LocTarget>>(items);
        g->record([pc, yc, its]() mutable {
            const T go = (*yc.grad)[0];
            for (const LocTarget& it : *its)
                for (int j = 0; j < 4; ++j) {
                    const size_t i = pc.index(it.n, it.c0 + j, it.y, it.x);
                    const T d = (*pc.data)[i] - static_cast<T>(it.t[j]);
                    const T dd = std::abs(d) < T(1) ? d : (d > T(0) ? T(1) : T(-1));
                    (*pc.grad)[i] += go * dd;
                }
        });
    }
    return y;
}

// Weighted sum of scalar tensors: sum_i coeff_i * s_i.
template <typename T>
Tensor<T> weighted_sum(Graph<T>* g, const std::vector<std::pair<T, Tensor<T>>>& terms) {
    Tensor<T> y(1, 1, 1, 1);
    T total = T(0);
    bool rg = false;
    for (const auto& [c, t] : terms) {
        if (t.size() != 1) throw DimensionError("weighted_sum: non-scalar term");
        total += c * (*t.data)[0];
        rg = rg || t.requires_grad;
    }
    (*y.data)[0] = total;

    if (g && rg) {
        y.requires_grad = true;
        y.ensure_grad();
        Tensor<T> yc = y;
        auto tc = std::make_shared<std::vector<std::pair<T, Tensor<T>>>>(terms);
        for (auto& [c, t] : *tc) t.ensure_grad();
        g->record([yc, tc]() mutable {
            const T go = (*yc.grad)[0];
            for (auto& [c, t] : *tc) (*t.grad)[0] += c * go;
        });
    }
    return y;
}

// SGD with momentum and coupled weight decay:
//   v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
template <typename T>
void sgd_update(std::vector<Tensor<T>*>& params, std::vector<std::vector<T>>& velocity,
                T lr, T momentum, T weight_decay) {
    if (velocity.size() != params.size())
        throw DimensionError("sgd_update: velocity count mismatch");
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& p = *params[pi];
        if (!p.grad) throw NumericError("sgd_update: parameter has no gradient");
        std::vector<T>& v = velocity[pi];
        if (v.size() != p.size()) v.assign(p.size(), T(0));
        T* pp = p.ptr();
        const T* gp = p.gptr();
        for (size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(gp[i])) throw NumericError("sgd_update: NaN/Inf gradient");
            v[i] = momentum * v[i] + gp[i] + weight_decay * pp[i];
            pp[i] -= lr * v[i];
        }
    }
}

}  // namespace ron
