#pragma once

#include <complex>
#include <map>
#include <numbers>
#include <vector>

#include "spectranet/tensor.hpp"

namespace spectranet {

// ============================================================================
// Radix-2 complex FFT
// ============================================================================

namespace detail {

template <Real T>
const std::vector<std::complex<T>>& twiddles(std::size_t n) {
    thread_local std::map<std::size_t, std::vector<std::complex<T>>> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<std::complex<T>> tw(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        tw[k] = {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
    }
    return cache.emplace(n, std::move(tw)).first->second;
}

}  // namespace detail

/// In-place unnormalized DFT of length n (power of two), stride 1.
/// forward: exp(-2 pi i k n / N); inverse: exp(+2 pi i k n / N), no 1/N.
template <Real T>
void fft_inplace(std::complex<T>* a, std::size_t n, bool inverse) {
    if (!is_power_of_two(n)) throw std::invalid_argument("fft: length " + std::to_string(n) + " is not a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const auto& tw = detail::twiddles<T>(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2, step = n / len;
        for (std::size_t i = 0; i < n; i += len)
            for (std::size_t k = 0; k < half; ++k) {
                std::complex<T> w = tw[k * step];
                if (inverse) w = std::conj(w);
                const std::complex<T> u = a[i + k];
                const std::complex<T> v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
    }
}

// ============================================================================
// Real 2-D transforms on a single plane
// ============================================================================
//
// A plane is H x W real values; its half-spectrum is H x (W/2+1) complex with
// row stride `ld`. `ncols` limits work to the leading columns: the forward
// transform only fills columns [0, ncols), the inverse treats the remaining
// columns as zero.

template <Real T>
void rfft2_plane(const T* x, std::size_t H, std::size_t W, std::complex<T>* out, std::size_t ld,
                 std::size_t ncols) {
    std::vector<std::complex<T>> row(W), col(H), tmp(H * ncols);
    // pack two real rows into one complex transform
    for (std::size_t r = 0; r < H; r += 2) {
        const bool pair = r + 1 < H;
        for (std::size_t j = 0; j < W; ++j) row[j] = {x[r * W + j], pair ? x[(r + 1) * W + j] : T(0)};
        fft_inplace(row.data(), W, false);
        for (std::size_t k = 0; k < ncols; ++k) {
            const std::complex<T> zk = row[k];
            const std::complex<T> zc = std::conj(row[(W - k) % W]);
            tmp[r * ncols + k] = T(0.5) * (zk + zc);
            if (pair) tmp[(r + 1) * ncols + k] = std::complex<T>(0, T(-0.5)) * (zk - zc);
        }
    }
    for (std::size_t k = 0; k < ncols; ++k) {
        for (std::size_t r = 0; r < H; ++r) col[r] = tmp[r * ncols + k];
        fft_inplace(col.data(), H, false);
        for (std::size_t r = 0; r < H; ++r) out[r * ld + k] = col[r];
    }
}

/// Inverse of rfft2_plane with 1/(HW). Imaginary parts of the k2 = 0 and
/// k2 = W/2 columns after the row-axis inverse are discarded, matching the
/// usual c2r convention.
template <Real T>
void irfft2_plane(const std::complex<T>* in, std::size_t H, std::size_t W, std::size_t ld, std::size_t ncols,
                  T* y) {
    const std::size_t half = W / 2;
    std::vector<std::complex<T>> col(H), tmp(H * ncols), row(W);
    for (std::size_t k = 0; k < ncols; ++k) {
        for (std::size_t r = 0; r < H; ++r) col[r] = in[r * ld + k];
        fft_inplace(col.data(), H, true);
        for (std::size_t r = 0; r < H; ++r) tmp[r * ncols + k] = col[r];
    }
    const T norm = T(1) / static_cast<T>(H * W);
    auto hermitian_row = [&](std::size_t r, std::vector<std::complex<T>>& full) {
        std::fill(full.begin(), full.end(), std::complex<T>(0));
        for (std::size_t k = 0; k < ncols && k <= half; ++k) full[k] = tmp[r * ncols + k];
        full[0] = {full[0].real(), T(0)};
        if (half > 0) full[half] = {full[half].real(), T(0)};
        for (std::size_t k = 1; k < half; ++k) full[W - k] = std::conj(full[k]);
    };
    std::vector<std::complex<T>> a(W), b(W);
    for (std::size_t r = 0; r < H; r += 2) {
        const bool pair = r + 1 < H;
        hermitian_row(r, a);
        if (pair) {
            hermitian_row(r + 1, b);
            for (std::size_t j = 0; j < W; ++j) row[j] = a[j] + std::complex<T>(0, 1) * b[j];
        } else {
            row = a;
        }
        fft_inplace(row.data(), W, true);
        for (std::size_t j = 0; j < W; ++j) {
            y[r * W + j] = row[j].real() * norm;
            if (pair) y[(r + 1) * W + j] = row[j].imag() * norm;
        }
    }
}

// ============================================================================
// Batched half-spectrum
// ============================================================================

/// Half-spectrum of a real field batch: leading dims, then rows x (width/2+1).
template <Real T>
struct ComplexSpectrum {
    Shape lead;
    std::size_t rows = 0;
    std::size_t width = 0;  // real-space extent of the last axis
    std::vector<std::complex<T>> data;

    std::size_t cols() const { return width / 2 + 1; }
    std::size_t planes() const { return numel(lead); }
    std::size_t plane_size() const { return rows * cols(); }
    Shape shape() const {
        Shape s = lead;
        s.push_back(rows);
        s.push_back(cols());
        return s;
    }
    std::complex<T>& at(std::size_t plane, std::size_t k1, std::size_t k2) {
        return data[plane * plane_size() + k1 * cols() + k2];
    }
    const std::complex<T>& at(std::size_t plane, std::size_t k1, std::size_t k2) const {
        return data[plane * plane_size() + k1 * cols() + k2];
    }

    static ComplexSpectrum zeros(Shape lead, std::size_t rows, std::size_t width) {
        ComplexSpectrum s{std::move(lead), rows, width, {}};
        s.data.assign(s.planes() * s.plane_size(), std::complex<T>(0));
        return s;
    }
};

namespace detail {

inline void require_fft_extents(const char* op, std::size_t H, std::size_t W) {
    if (!is_power_of_two(H) || !is_power_of_two(W))
        throw std::invalid_argument(std::string(op) + ": extents " + std::to_string(H) + "x" + std::to_string(W) +
                                    " must be powers of two");
}

}  // namespace detail

/// Unnormalized forward transform over the last two axes.
/// X[k1,k2] = sum x[n1,n2] exp(-2 pi i (k1 n1 / H + k2 n2 / W)), k2 in [0, W/2].
template <Real T>
ComplexSpectrum<T> rfft2(const Tensor<T>& x) {
    if (x.rank() < 2) throw ShapeError("rfft2: need at least 2 axes, got " + shape_str(x.shape()));
    const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    detail::require_fft_extents("rfft2", H, W);
    Shape lead(x.shape().begin(), x.shape().end() - 2);
    auto X = ComplexSpectrum<T>::zeros(lead, H, W);
    for (std::size_t p = 0; p < X.planes(); ++p)
        rfft2_plane(x.ptr() + p * H * W, H, W, X.data.data() + p * X.plane_size(), X.cols(), X.cols());
    return X;
}

/// Inverse transform with 1/(HW) normalization; irfft2(rfft2(x)) == x.
template <Real T>
Tensor<T> irfft2(const ComplexSpectrum<T>& X, std::size_t H, std::size_t W) {
    if (X.rows != H || X.width != W)
        throw ShapeError("irfft2: spectrum " + shape_str(X.shape()) + " incompatible with output " +
                         std::to_string(H) + "x" + std::to_string(W));
    detail::require_fft_extents("irfft2", H, W);
    Shape s = X.lead;
    s.push_back(H);
    s.push_back(W);
    Tensor<T> y(s);
    for (std::size_t p = 0; p < X.planes(); ++p)
        irfft2_plane(X.data.data() + p * X.plane_size(), H, W, X.cols(), X.cols(), y.ptr() + p * H * W);
    return y;
}

/// Weight of a half-spectrum column in Parseval sums (1 for k2 = 0 and W/2, else 2).
inline double half_spectrum_weight(std::size_t k2, std::size_t W) {
    return (k2 == 0 || 2 * k2 == W) ? 1.0 : 2.0;
}

}  // namespace spectranet
