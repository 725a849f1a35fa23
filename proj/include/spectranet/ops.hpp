#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spectranet/autodiff.hpp"

namespace spectranet {

namespace detail {

inline void require_rank4(const char* op, const Shape& s) {
    if (s.size() != 4) throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + shape_str(s));
}

}  // namespace detail

// ============================================================================
// 1x1 convolution (per-pixel channel matmul)
// ============================================================================

/// y[b,o,i,j] = sum_c w[o,c] * x[b,c,i,j] + bias[o]
template <Real T>
Var<T> matmul_channels(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
    detail::require_rank4("matmul_channels", x.shape());
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (ws.size() != 2 || ws[1] != xs[1]) throw ShapeError("matmul_channels", xs, ws);
    if (bias.shape() != Shape{ws[0]}) throw ShapeError("matmul_channels(bias)", ws, bias.shape());

    const std::size_t B = xs[0], Cin = xs[1], Cout = ws[0], P = xs[2] * xs[3];
    Tensor<T> y({B, Cout, xs[2], xs[3]});
    const T* xp = x.value().ptr();
    const T* wp = w.value().ptr();
    const T* bp = bias.value().ptr();
    T* yp = y.ptr();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Cout; ++o) {
            T* yrow = yp + (b * Cout + o) * P;
            std::fill(yrow, yrow + P, bp[o]);
            for (std::size_t c = 0; c < Cin; ++c) {
                const T wv = wp[o * Cin + c];
                const T* xrow = xp + (b * Cin + c) * P;
                for (std::size_t p = 0; p < P; ++p) yrow[p] += wv * xrow[p];
            }
        }

    return detail::make_result<T>(std::move(y), {x, w, bias}, [B, Cin, Cout, P](GraphNode<T>& self) {
        const T* g = self.grad.ptr();
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        if (px->requires_grad) {
            T* gx = px->grad_ref().ptr();
            const T* wv = pw->value.ptr();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < Cout; ++o) {
                    const T* grow = g + (b * Cout + o) * P;
                    for (std::size_t c = 0; c < Cin; ++c) {
                        const T wc = wv[o * Cin + c];
                        T* gxrow = gx + (b * Cin + c) * P;
                        for (std::size_t p = 0; p < P; ++p) gxrow[p] += wc * grow[p];
                    }
                }
        }
        if (pw->requires_grad) {
            T* gw = pw->grad_ref().ptr();
            const T* xv = px->value.ptr();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < Cout; ++o) {
                    const T* grow = g + (b * Cout + o) * P;
                    for (std::size_t c = 0; c < Cin; ++c) {
                        const T* xrow = xv + (b * Cin + c) * P;
                        T acc = 0;
                        for (std::size_t p = 0; p < P; ++p) acc += grow[p] * xrow[p];
                        gw[o * Cin + c] += acc;
                    }
                }
        }
        if (pb->requires_grad) {
            T* gb = pb->grad_ref().ptr();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < Cout; ++o) {
                    const T* grow = g + (b * Cout + o) * P;
                    T acc = 0;
                    for (std::size_t p = 0; p < P; ++p) acc += grow[p];
                    gb[o] += acc;
                }
        }
    });
}

// ============================================================================
// GeLU, exact erf form
// ============================================================================

template <Real T>
inline T gelu_value(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <Real T>
inline T gelu_derivative(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <Real T>
Var<T> gelu(const Var<T>& x) {
    Tensor<T> y = x.value();
    for (auto& v : y.data()) v = gelu_value(v);
    return detail::make_result<T>(std::move(y), {x}, [](GraphNode<T>& self) {
        auto& p = self.parents[0];
        auto& gx = p->grad_ref();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * gelu_derivative(p->value[i]);
    });
}

// ============================================================================
// Resampling
// ============================================================================

/// 2x2 mean pooling; H and W must be even.
template <Real T>
Var<T> avgpool2(const Var<T>& x) {
    detail::require_rank4("avgpool2", x.shape());
    const auto& s = x.shape();
    const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
    if (H % 2 || W % 2) throw ShapeError("avgpool2: spatial extents must be even, got " + shape_str(s));
    const std::size_t Ho = H / 2, Wo = W / 2;
    Tensor<T> y({B, C, Ho, Wo});
    const T* xp = x.value().ptr();
    T* yp = y.ptr();
    for (std::size_t bc = 0; bc < B * C; ++bc)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
                const T* r0 = xp + bc * H * W + 2 * i * W + 2 * j;
                const T* r1 = r0 + W;
                yp[bc * Ho * Wo + i * Wo + j] = T(0.25) * (r0[0] + r0[1] + r1[0] + r1[1]);
            }
    return detail::make_result<T>(std::move(y), {x}, [B, C, H, W, Ho, Wo](GraphNode<T>& self) {
        T* gx = self.parents[0]->grad_ref().ptr();
        const T* g = self.grad.ptr();
        for (std::size_t bc = 0; bc < B * C; ++bc)
            for (std::size_t i = 0; i < Ho; ++i)
                for (std::size_t j = 0; j < Wo; ++j) {
                    const T q = T(0.25) * g[bc * Ho * Wo + i * Wo + j];
                    T* r0 = gx + bc * H * W + 2 * i * W + 2 * j;
                    T* r1 = r0 + W;
                    r0[0] += q;
                    r0[1] += q;
                    r1[0] += q;
                    r1[1] += q;
                }
    });
}

namespace detail {

// Source taps for one output index of a 2x half-pixel bilinear upsample.
struct Tap {
    std::size_t lo, hi;
    double w_hi;  // weight of `hi`; `lo` gets 1 - w_hi
};

inline std::vector<Tap> upsample_taps(std::size_t n_in) {
    std::vector<Tap> taps(2 * n_in);
    for (std::size_t o = 0; o < 2 * n_in; ++o) {
        double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
        if (src < 0) src = 0;
        const auto lo = static_cast<std::size_t>(src);
        const std::size_t hi = std::min(lo + 1, n_in - 1);
        taps[o] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace detail

/// Exact 2x bilinear upsampling, half-pixel centers (align_corners = false),
/// source coordinates clamped at the edges.
template <Real T>
Var<T> upsample_bilinear2(const Var<T>& x) {
    detail::require_rank4("upsample_bilinear2", x.shape());
    const auto& s = x.shape();
    const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
    const std::size_t Ho = 2 * H, Wo = 2 * W;
    const auto ty = detail::upsample_taps(H);
    const auto tx = detail::upsample_taps(W);
    Tensor<T> y({B, C, Ho, Wo});
    const T* xp = x.value().ptr();
    T* yp = y.ptr();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* src = xp + bc * H * W;
        T* dst = yp + bc * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i) {
            const T wy = T(ty[i].w_hi);
            const T* r0 = src + ty[i].lo * W;
            const T* r1 = src + ty[i].hi * W;
            for (std::size_t j = 0; j < Wo; ++j) {
                const T wx = T(tx[j].w_hi);
                const T top = (T(1) - wx) * r0[tx[j].lo] + wx * r0[tx[j].hi];
                const T bot = (T(1) - wx) * r1[tx[j].lo] + wx * r1[tx[j].hi];
                dst[i * Wo + j] = (T(1) - wy) * top + wy * bot;
            }
        }
    }
    return detail::make_result<T>(std::move(y), {x}, [B, C, H, W, Ho, Wo, ty, tx](GraphNode<T>& self) {
        T* gx = self.parents[0]->grad_ref().ptr();
        const T* g = self.grad.ptr();
        for (std::size_t bc = 0; bc < B * C; ++bc) {
            T* dst = gx + bc * H * W;
            const T* gy = g + bc * Ho * Wo;
            for (std::size_t i = 0; i < Ho; ++i) {
                const T wy = T(ty[i].w_hi);
                T* r0 = dst + ty[i].lo * W;
                T* r1 = dst + ty[i].hi * W;
                for (std::size_t j = 0; j < Wo; ++j) {
                    const T wx = T(tx[j].w_hi);
                    const T v = gy[i * Wo + j];
                    r0[tx[j].lo] += (T(1) - wy) * (T(1) - wx) * v;
                    r0[tx[j].hi] += (T(1) - wy) * wx * v;
                    r1[tx[j].lo] += wy * (T(1) - wx) * v;
                    r1[tx[j].hi] += wy * wx * v;
                }
            }
        }
    });
}

// ============================================================================
// Channel slicing / concatenation
// ============================================================================

template <Real T>
Var<T> slice_channels(const Var<T>& x, std::size_t start, std::size_t count) {
    detail::require_rank4("slice_channels", x.shape());
    const auto& s = x.shape();
    if (start + count > s[1])
        throw ShapeError("slice_channels: range [" + std::to_string(start) + "," + std::to_string(start + count) +
                         ") outside " + shape_str(s));
    const std::size_t B = s[0], C = s[1], P = s[2] * s[3];
    Tensor<T> y({B, count, s[2], s[3]});
    for (std::size_t b = 0; b < B; ++b)
        std::copy_n(x.value().ptr() + (b * C + start) * P, count * P, y.ptr() + b * count * P);
    return detail::make_result<T>(std::move(y), {x}, [B, C, P, start, count](GraphNode<T>& self) {
        T* gx = self.parents[0]->grad_ref().ptr();
        for (std::size_t b = 0; b < B; ++b) {
            const T* src = self.grad.ptr() + b * count * P;
            T* dst = gx + (b * C + start) * P;
            for (std::size_t k = 0; k < count * P; ++k) dst[k] += src[k];
        }
    });
}

template <Real T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    detail::require_rank4("concat_channels", a.shape());
    detail::require_rank4("concat_channels", b.shape());
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) throw ShapeError("concat_channels", sa, sb);
    const std::size_t B = sa[0], Ca = sa[1], Cb = sb[1], P = sa[2] * sa[3];
    Tensor<T> y({B, Ca + Cb, sa[2], sa[3]});
    for (std::size_t n = 0; n < B; ++n) {
        std::copy_n(a.value().ptr() + n * Ca * P, Ca * P, y.ptr() + n * (Ca + Cb) * P);
        std::copy_n(b.value().ptr() + n * Cb * P, Cb * P, y.ptr() + (n * (Ca + Cb) + Ca) * P);
    }
    return detail::make_result<T>(std::move(y), {a, b}, [B, Ca, Cb, P](GraphNode<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const T* g = self.grad.ptr();
        for (std::size_t n = 0; n < B; ++n) {
            const T* row = g + n * (Ca + Cb) * P;
            if (pa->requires_grad) {
                T* ga = pa->grad_ref().ptr() + n * Ca * P;
                for (std::size_t k = 0; k < Ca * P; ++k) ga[k] += row[k];
            }
            if (pb->requires_grad) {
                T* gb = pb->grad_ref().ptr() + n * Cb * P;
                for (std::size_t k = 0; k < Cb * P; ++k) gb[k] += row[Ca * P + k];
            }
        }
    });
}

// ============================================================================
// Relative L2 objective
// ============================================================================

/// Raised when a target sample has zero norm.
class DegenerateSample : public std::domain_error {
public:
    explicit DegenerateSample(std::size_t index)
        : std::domain_error("relative_l2: target sample " + std::to_string(index) + " has zero norm"), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

/// mean over the leading (batch) axis of ||pred_b - target_b|| / ||target_b||
template <Real T>
Var<T> relative_l2(const Var<T>& pred, const Tensor<T>& target) {
    require_same_shape("relative_l2", pred.value(), target);
    if (pred.shape().empty()) throw ShapeError("relative_l2: empty shape");
    const std::size_t B = pred.shape()[0];
    const std::size_t n = B ? pred.size() / B : 0;
    std::vector<T> diff_norm(B), target_norm(B);
    T total = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const T* p = pred.value().ptr() + b * n;
        const T* t = target.ptr() + b * n;
        T dd = 0, tt = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const T d = p[k] - t[k];
            dd += d * d;
            tt += t[k] * t[k];
        }
        if (tt == T(0)) throw DegenerateSample(b);
        diff_norm[b] = std::sqrt(dd);
        target_norm[b] = std::sqrt(tt);
        total += diff_norm[b] / target_norm[b];
    }
    const T value = total / static_cast<T>(B);
    return detail::make_result<T>(Tensor<T>::scalar(value), {pred},
                                  [B, n, target, diff_norm, target_norm](GraphNode<T>& self) {
                                      auto& p = self.parents[0];
                                      T* gp = p->grad_ref().ptr();
                                      const T g = self.grad[0] / static_cast<T>(B);
                                      for (std::size_t b = 0; b < B; ++b) {
                                          if (diff_norm[b] == T(0)) continue;
                                          const T c = g / (diff_norm[b] * target_norm[b]);
                                          const T* pv = p->value.ptr() + b * n;
                                          const T* tv = target.ptr() + b * n;
                                          for (std::size_t k = 0; k < n; ++k) gp[b * n + k] += c * (pv[k] - tv[k]);
                                      }
                                  });
}

}  // namespace spectranet
