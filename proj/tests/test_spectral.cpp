#include "test_support.hpp"

using namespace spectranet;
using namespace testing_support;

namespace {

double rfft_vs_naive(std::size_t H, std::size_t W, std::uint64_t seed) {
    const auto x = rand_tensor({2, H, W}, seed);
    const auto X = rfft2(x);
    double worst = 0;
    for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t k1 = 0; k1 < H; ++k1)
            for (std::size_t k2 = 0; k2 <= W / 2; ++k2)
                worst = std::max(worst, std::abs(X.at(p, k1, k2) - dft_coeff(x.ptr() + p * H * W, H, W, long(k1), long(k2))));
    return worst;
}

// One weight entry on a single Fourier mode: the layer multiplies that mode by w.
Tensor<double> single_mode_response(long k1, long k2, std::size_t block, std::size_t row, std::size_t col,
                                    std::complex<double> w) {
    const std::size_t N = 8, M = 3;
    Tensor<double> x({1, 1, N, N});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            x.at(0, 0, i, j) = std::cos(2 * std::numbers::pi * (double(k1) * double(i) + double(k2) * double(j)) / double(N));
    Tensor<double> wp(spectral_weight_shape(1, 1, M)), wn(spectral_weight_shape(1, 1, M));
    auto& target = block == 0 ? wp : wn;
    target[(row * M + col) * 2] = w.real();
    target[(row * M + col) * 2 + 1] = w.imag();
    return spectral_conv(Var<double>(x), Var<double>(wp), Var<double>(wn), M).value();
}

}  // namespace

TEST(Fft, MatchesNaiveDft) {
    EXPECT_LE(rfft_vs_naive(8, 8, 1), 1e-10);
    EXPECT_LE(rfft_vs_naive(4, 16, 2), 1e-10);
    EXPECT_LE(rfft_vs_naive(16, 2, 3), 1e-10);
}

TEST(Fft, RoundTrip) {
    const auto x = rand_tensor({3, 16, 32}, 4);
    const auto y = irfft2(rfft2(x), 16, 32);
    EXPECT_LE(max_abs_diff(x, y), 1e-12);
}

TEST(Fft, Parseval) {
    const auto x = rand_tensor({8, 8}, 5);
    const auto X = rfft2(x);
    double spec = 0;
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c <= 4; ++c) spec += (c == 0 || c == 4 ? 1.0 : 2.0) * std::norm(X.at(0, r, c));
    const double energy = sum_squares(x.data());
    EXPECT_LE(std::abs(spec / 64 - energy) / energy, 1e-10);
}

TEST(Fft, RejectsNonPowerOfTwo) {
    EXPECT_THROW(rfft2(Tensor<double>({6, 8})), std::invalid_argument);
    EXPECT_THROW(rfft2(Tensor<double>({8, 12})), std::invalid_argument);
}

TEST(SpectralConv, SingleModeMultipliesByWeight) {
    const std::complex<double> w(0.6, -1.3);
    const auto pos = single_mode_response(1, 2, 0, 1, 2, w);
    const auto neg = single_mode_response(-1, 2, 1, 2, 2, w);  // row 7 -> weight row 2 of the negative block
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
            const double tp = 2 * std::numbers::pi * (1.0 * double(i) + 2.0 * double(j)) / 8;
            const double tn = 2 * std::numbers::pi * (-1.0 * double(i) + 2.0 * double(j)) / 8;
            EXPECT_NEAR(pos.at(0, 0, i, j), w.real() * std::cos(tp) - w.imag() * std::sin(tp), 1e-12);
            EXPECT_NEAR(neg.at(0, 0, i, j), w.real() * std::cos(tn) - w.imag() * std::sin(tn), 1e-12);
        }
}

TEST(SpectralConv, ModesOutsideTheBoxAreRemoved) {
    // k2 = 3 is outside a 3-mode box, so the output is zero whatever the weights
    const std::size_t N = 8, M = 3;
    Tensor<double> x({1, 1, N, N});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) x.at(0, 0, i, j) = std::sin(2 * std::numbers::pi * 3.0 * double(j) / double(N));
    const auto y = spectral_conv(Var<double>(x), Var<double>(rand_tensor(spectral_weight_shape(1, 1, M), 1)),
                                 Var<double>(rand_tensor(spectral_weight_shape(1, 1, M), 2)), M)
                       .value();
    EXPECT_LE(l2_norm(y), 1e-12);
}

TEST(SpectralConv, AdjointIdentity) {
    const auto x = rand_tensor({2, 3, 16, 8}, 1), y = rand_tensor({2, 4, 16, 8}, 2);
    const Var<double> wp(rand_tensor(spectral_weight_shape(3, 4, 4), 3)), wn(rand_tensor(spectral_weight_shape(3, 4, 4), 4));
    const Var<double> xv(x, true);
    const auto out = spectral_conv(xv, wp, wn, 4);
    backward(sum(mul(out, Var<double>(y))));
    const double lhs = dot(out.value(), y), rhs = dot(x, xv.grad());
    EXPECT_LE(std::abs(lhs - rhs) / std::abs(lhs), 1e-10);
}

TEST(SpectralConv, GradientsMatchCentralDifferences) {
    for (std::size_t m : {2u, 3u}) {
        ScalarFn f = [m](const auto& v) {
            return sum(mul(spectral_conv(v[0], v[1], v[2], m), Var<double>(rand_tensor({2, 3, 8, 8}, 77))));
        };
        EXPECT_LE(fd_rel_error(f, {rand_tensor({2, 2, 8, 8}, 1), rand_tensor(spectral_weight_shape(2, 3, 3), 2),
                                   rand_tensor(spectral_weight_shape(2, 3, 3), 3)}),
                  1e-5)
            << "m=" << m;
    }
}

TEST(SpectralConv, ResolutionInvariantOnSharedModes) {
    const std::size_t M = 4;
    const BandLimited field(7, 11);
    const Var<double> wp(rand_tensor(spectral_weight_shape(1, 2, M), 5)), wn(rand_tensor(spectral_weight_shape(1, 2, M), 6));
    auto run = [&](std::size_t n) {
        const auto x = field.sample(n).reshaped({1, 1, n, n});
        return rfft2(spectral_conv(Var<double>(x), wp, wn, M).value());
    };
    const auto a = run(32), b = run(64);
    double worst = 0, scale = 0;
    for (std::size_t c = 0; c < 2; ++c)
        for (long k1 = -long(M) + 1; k1 < long(M); ++k1)
            for (std::size_t k2 = 0; k2 < M; ++k2) {
                const auto va = a.at(c, std::size_t((k1 + 32) % 32), k2) / (32.0 * 32.0);
                const auto vb = b.at(c, std::size_t((k1 + 64) % 64), k2) / (64.0 * 64.0);
                worst = std::max(worst, std::abs(va - vb));
                scale = std::max(scale, std::abs(va));
            }
    EXPECT_GT(scale, 1e-3);
    EXPECT_LE(worst, 1e-6);
}

TEST(SpectralConv, SubsetModesReuseWeightsByWavenumber) {
    // With m < M the outputs equal a full-width conv whose extra rows/cols are zero.
    const std::size_t M = 4, m = 2;
    const auto wp = rand_tensor(spectral_weight_shape(1, 1, M), 1), wn = rand_tensor(spectral_weight_shape(1, 1, M), 2);
    Tensor<double> wp2 = wp, wn2 = wn;
    for (std::size_t r = 0; r < M; ++r)
        for (std::size_t c = 0; c < M; ++c)
            for (std::size_t z = 0; z < 2; ++z) {
                if (r >= m || c >= m) wp2[(r * M + c) * 2 + z] = 0;
                if (r < M - m || c >= m) wn2[(r * M + c) * 2 + z] = 0;
            }
    const auto x = rand_tensor({1, 1, 16, 16}, 3);
    const auto a = spectral_conv(Var<double>(x), Var<double>(wp), Var<double>(wn), m).value();
    const auto b = spectral_conv(Var<double>(x), Var<double>(wp2), Var<double>(wn2), M).value();
    EXPECT_LE(max_abs_diff(a, b), 1e-13);
}

TEST(SpectralConv, RejectsModesBeyondNyquistOrBlock) {
    const Var<double> x(rand_tensor({1, 1, 8, 8}, 1));
    const Var<double> w(rand_tensor(spectral_weight_shape(1, 1, 6), 2));
    EXPECT_THROW(spectral_conv(x, w, w, 5), std::invalid_argument);
    const Var<double> w3(rand_tensor(spectral_weight_shape(1, 1, 3), 3));
    EXPECT_THROW(spectral_conv(x, w3, w3, 4), std::invalid_argument);
    EXPECT_THROW(spectral_conv(Var<double>(rand_tensor({1, 2, 8, 8}, 4)), w3, w3, 3), ShapeError);
}

TEST(SpectralConv, ParameterCountIsAFunctionOfChannelsAndModes) {
    const auto c = spectral_param_count(3, 5, 4);
    EXPECT_EQ(c.complex_entries, 2u * 3 * 5 * 4 * 4);
    EXPECT_EQ(c.real, 2 * c.complex_entries);
    EXPECT_EQ(numel(spectral_weight_shape(3, 5, 4)) * 2, c.real);
}

TEST(ZeroPad, ExactForBandLimitedFields) {
    const BandLimited field(8, 3);  // |k| <= 7 < 16/2
    const auto lo = field.sample(16), hi = field.sample(64);
    const auto up = spectral_zeropad_resample(lo, 64, 64);
    EXPECT_LE(max_abs_diff(up, hi) / l2_norm(hi) * 64, 1e-10);
    const auto same = spectral_zeropad_resample(lo, 16, 16);
    EXPECT_LE(max_abs_diff(same, lo), 1e-12);
    EXPECT_THROW(spectral_zeropad_resample(hi, 32, 32), std::invalid_argument);
}
