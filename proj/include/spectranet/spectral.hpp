#pragma once

#include <complex>

#include "spectranet/autodiff.hpp"
#include "spectranet/fft.hpp"

namespace spectranet {

/// Real and complex-entry parameter counts of one truncated spectral layer.
struct SpectralCount {
    std::size_t real = 0;
    std::size_t complex_entries = 0;
};

inline SpectralCount spectral_param_count(std::size_t c_in, std::size_t c_out, std::size_t modes) {
    const std::size_t entries = 2 * c_in * c_out * modes * modes;
    return {2 * entries, entries};
}

/// Shape of one complex weight block, stored as interleaved (re, im) pairs.
inline Shape spectral_weight_shape(std::size_t c_in, std::size_t c_out, std::size_t modes) {
    return {c_in, c_out, modes, modes, 2};
}

// ============================================================================
// Truncated spectral convolution
// ============================================================================
//
// rfft2 -> keep rows [0,m) and [H-m,H) of columns [0,m) -> per-mode complex
// channel mixing with two independent weight blocks -> zero-fill -> irfft2.
// `modes` may be smaller than the weight block extent M (resolution transfer);
// the positive block then uses weight rows [0,m) and the negative block weight
// rows [M-m, M) so each weight stays attached to the same wavenumber.

template <Real T>
Var<T> spectral_conv(const Var<T>& x, const Var<T>& w_pos, const Var<T>& w_neg, std::size_t modes) {
    using C = std::complex<T>;
    const auto& xs = x.shape();
    if (xs.size() != 4) throw ShapeError("spectral_conv: expected [B,C,H,W], got " + shape_str(xs));
    const auto& ws = w_pos.shape();
    if (ws.size() != 5 || ws[4] != 2 || ws[2] != ws[3] || ws[0] != xs[1])
        throw ShapeError("spectral_conv(weights)", xs, ws);
    if (w_neg.shape() != ws) throw ShapeError("spectral_conv(w_neg)", ws, w_neg.shape());
    const std::size_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3], Cout = ws[1], M = ws[2];
    detail::require_fft_extents("spectral_conv", H, W);
    const std::size_t m = modes;
    if (m > M) throw std::invalid_argument("spectral_conv: modes " + std::to_string(m) + " exceed weight block " +
                                           std::to_string(M));
    if (m > H / 2 || m > W / 2 + 1)
        throw std::invalid_argument("spectral_conv: modes " + std::to_string(m) + " exceed the Nyquist limit of a " +
                                    std::to_string(H) + "x" + std::to_string(W) + " grid");

    const std::size_t HW = H * W;
    const std::size_t blk = m * m;  // one block, one channel
    const std::size_t neg_off = M - m;
    // index helpers into the interleaved weight storage
    auto widx = [=](std::size_t i, std::size_t o, std::size_t r, std::size_t k) {
        return (((i * Cout + o) * M + r) * M + k) * 2;
    };
    auto row_of = [=](std::size_t blk_id, std::size_t r) { return blk_id == 0 ? r : H - m + r; };

    // truncated input spectra: [B][Cin][2 blocks][m][m]
    std::vector<C> xt(B * Cin * 2 * blk);
    Tensor<T> y({B, Cout, H, W});
    if (m == 0) {
        return detail::make_result<T>(std::move(y), {x, w_pos, w_neg}, [](GraphNode<T>&) {});
    }

    std::vector<C> spec(H * m), out_spec(H * m);
    const T* wp = w_pos.value().ptr();
    const T* wn = w_neg.value().ptr();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < Cin; ++i) {
            rfft2_plane(x.value().ptr() + (b * Cin + i) * HW, H, W, spec.data(), m, m);
            C* dst = xt.data() + (b * Cin + i) * 2 * blk;
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t k = 0; k < m; ++k) {
                    dst[r * m + k] = spec[row_of(0, r) * m + k];
                    dst[blk + r * m + k] = spec[row_of(1, r) * m + k];
                }
        }
        for (std::size_t o = 0; o < Cout; ++o) {
            std::fill(out_spec.begin(), out_spec.end(), C(0));
            for (std::size_t i = 0; i < Cin; ++i) {
                const C* src = xt.data() + (b * Cin + i) * 2 * blk;
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t k = 0; k < m; ++k) {
                        const std::size_t ip = widx(i, o, r, k), in = widx(i, o, neg_off + r, k);
                        out_spec[row_of(0, r) * m + k] += src[r * m + k] * C(wp[ip], wp[ip + 1]);
                        out_spec[row_of(1, r) * m + k] += src[blk + r * m + k] * C(wn[in], wn[in + 1]);
                    }
            }
            irfft2_plane(out_spec.data(), H, W, m, m, y.ptr() + (b * Cout + o) * HW);
        }
    }

    return detail::make_result<T>(
        std::move(y), {x, w_pos, w_neg},
        [=, xt = std::move(xt)](GraphNode<T>& self) {
            auto& px = self.parents[0];
            auto& pp = self.parents[1];
            auto& pn = self.parents[2];
            const T* wpv = pp->value.ptr();
            const T* wnv = pn->value.ptr();
            std::vector<C> spec(H * m), acc(H * m);
            // truncated upstream spectra for every output channel of one sample
            std::vector<C> gt(Cout * 2 * blk);
            std::vector<T> plane(HW);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t o = 0; o < Cout; ++o) {
                    rfft2_plane(self.grad.ptr() + (b * Cout + o) * HW, H, W, spec.data(), m, m);
                    C* dst = gt.data() + o * 2 * blk;
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t k = 0; k < m; ++k) {
                            dst[r * m + k] = spec[row_of(0, r) * m + k];
                            dst[blk + r * m + k] = spec[row_of(1, r) * m + k];
                        }
                }
                // weight adjoint: conj(x_hat) * (c_k / HW) * rfft2(grad)
                for (int side = 0; side < 2; ++side) {
                    auto& pw = side == 0 ? pp : pn;
                    if (!pw->requires_grad) continue;
                    T* gw = pw->grad_ref().ptr();
                    const std::size_t roff = side == 0 ? 0 : neg_off;
                    for (std::size_t i = 0; i < Cin; ++i) {
                        const C* xs_ = xt.data() + (b * Cin + i) * 2 * blk + side * blk;
                        for (std::size_t o = 0; o < Cout; ++o) {
                            const C* gs = gt.data() + o * 2 * blk + side * blk;
                            for (std::size_t r = 0; r < m; ++r)
                                for (std::size_t k = 0; k < m; ++k) {
                                    const T ck = static_cast<T>(half_spectrum_weight(k, W)) / static_cast<T>(HW);
                                    const C v = std::conj(xs_[r * m + k]) * gs[r * m + k] * ck;
                                    const std::size_t wi = widx(i, o, roff + r, k);
                                    gw[wi] += v.real();
                                    gw[wi + 1] += v.imag();
                                }
                        }
                    }
                }
                // input adjoint: the same transform with conjugate-transposed weights
                if (px->requires_grad) {
                    T* gx = px->grad_ref().ptr();
                    for (std::size_t i = 0; i < Cin; ++i) {
                        std::fill(acc.begin(), acc.end(), C(0));
                        for (std::size_t o = 0; o < Cout; ++o) {
                            const C* gs = gt.data() + o * 2 * blk;
                            for (std::size_t r = 0; r < m; ++r)
                                for (std::size_t k = 0; k < m; ++k) {
                                    const std::size_t ip = widx(i, o, r, k), in = widx(i, o, neg_off + r, k);
                                    acc[row_of(0, r) * m + k] += std::conj(C(wpv[ip], wpv[ip + 1])) * gs[r * m + k];
                                    acc[row_of(1, r) * m + k] +=
                                        std::conj(C(wnv[in], wnv[in + 1])) * gs[blk + r * m + k];
                                }
                        }
                        irfft2_plane(acc.data(), H, W, m, m, plane.data());
                        T* dst = gx + (b * Cin + i) * HW;
                        for (std::size_t p = 0; p < HW; ++p) dst[p] += plane[p];
                    }
                }
            }
        });
}

// ============================================================================
// Spectral zero-padding resample
// ============================================================================

/// Upsamples the last two axes by embedding the half-spectrum into a larger
/// coefficient grid. Exact for fields band-limited below the source Nyquist.
/// Nyquist rows/columns of the source are split evenly between +k and -k.
template <Real T>
Tensor<T> spectral_zeropad_resample(const Tensor<T>& x, std::size_t H2, std::size_t W2) {
    if (x.rank() < 2) throw ShapeError("spectral_zeropad_resample: need at least 2 axes");
    const std::size_t H1 = x.dim(x.rank() - 2), W1 = x.dim(x.rank() - 1);
    detail::require_fft_extents("spectral_zeropad_resample", H1, W1);
    detail::require_fft_extents("spectral_zeropad_resample", H2, W2);
    if (H2 < H1 || W2 < W1)
        throw std::invalid_argument("spectral_zeropad_resample: downsampling " + std::to_string(H1) + "x" +
                                    std::to_string(W1) + " -> " + std::to_string(H2) + "x" + std::to_string(W2) +
                                    " is not supported");
    const auto X = rfft2(x);
    auto Y = ComplexSpectrum<T>::zeros(X.lead, H2, W2);
    const T gain = static_cast<T>(H2 * W2) / static_cast<T>(H1 * W1);
    const bool grow_h = H2 > H1, grow_w = W2 > W1;
    for (std::size_t p = 0; p < X.planes(); ++p)
        for (std::size_t k1 = 0; k1 < H1; ++k1)
            for (std::size_t k2 = 0; k2 < X.cols(); ++k2) {
                std::complex<T> v = X.at(p, k1, k2) * gain;
                if (grow_w && 2 * k2 == W1) v *= T(0.5);
                if (grow_h && 2 * k1 == H1) {
                    v *= T(0.5);
                    Y.at(p, k1, k2) += v;
                    Y.at(p, H2 - k1, k2) += v;
                } else {
                    const std::size_t r = (2 * k1 < H1) ? k1 : H2 - (H1 - k1);
                    Y.at(p, r, k2) += v;
                }
            }
    return irfft2(Y, H2, W2);
}

}  // namespace spectranet
