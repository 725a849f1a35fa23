#pragma once

#include <functional>

#include "spectranet/evaluate.hpp"
#include "spectranet/train.hpp"

namespace spectranet::oracles {

// ============================================================================
// Reference implementations
// ============================================================================

/// O(N^4) half-spectrum DFT of one H x W plane.
inline std::vector<std::complex<double>> naive_rdft2(const Tensor<double>& x, std::size_t H, std::size_t W) {
    const std::size_t cols = W / 2 + 1;
    std::vector<std::complex<double>> X(H * cols);
    for (std::size_t k1 = 0; k1 < H; ++k1)
        for (std::size_t k2 = 0; k2 < cols; ++k2) {
            std::complex<double> s = 0;
            for (std::size_t n1 = 0; n1 < H; ++n1)
                for (std::size_t n2 = 0; n2 < W; ++n2) {
                    const double a = -2 * std::numbers::pi *
                                     (double(k1 * n1 % H) / double(H) + double(k2 * n2 % W) / double(W));
                    s += x[n1 * W + n2] * std::complex<double>(std::cos(a), std::sin(a));
                }
            X[k1 * cols + k2] = s;
        }
    return X;
}

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
    Tensor<double> t(std::move(s));
    fill_uniform(t, lo, hi, rng);
    return t;
}

// ============================================================================
// Gradient checking
// ============================================================================

using GraphFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

struct GradCheck {
    double rel_err = 0;       // max |a - n| / (max |a| + 1e-12), both over every input entry
    double max_abs_err = 0;
    std::size_t checked = 0;  // scalar entries compared
};

/// Central differences against reverse mode for a scalar-valued graph. The
/// error is normalized by the largest analytic gradient over all inputs, so
/// entries with near-zero gradient are judged on the scale of the whole
/// gradient vector. `max_entries` bounds the entries probed per input.
inline GradCheck gradcheck(const GraphFn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-6,
                           std::size_t max_entries = std::numeric_limits<std::size_t>::max()) {
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.emplace_back(t, true);
    backward(f(leaves));
    GradCheck out;
    auto value_at = [&](std::size_t i, std::size_t k, double delta) {
        std::vector<Var<double>> c;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            Tensor<double> t = inputs[j];
            if (j == i) t[k] += delta;
            c.emplace_back(std::move(t), false);
        }
        return f(c).value().item();
    };
    double scale = 0;
    for (const auto& l : leaves) {
        const auto g = l.grad();
        for (double v : g.data()) scale = std::max(scale, std::abs(v));
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto analytic = leaves[i].grad();
        const std::size_t n = inputs[i].size();
        const std::size_t stride = std::max<std::size_t>(1, n / std::min(n, max_entries));
        for (std::size_t k = 0; k < n; k += stride) {
            const double numeric = (value_at(i, k, h) - value_at(i, k, -h)) / (2 * h);
            out.max_abs_err = std::max(out.max_abs_err, std::abs(analytic[k] - numeric));
            ++out.checked;
        }
    }
    out.rel_err = out.max_abs_err / (scale + 1e-12);
    return out;
}

/// sum(y * r) for a fixed random r, turning any op into a scalar probe.
inline Var<double> random_projection(const Var<double>& y, std::uint64_t seed) {
    Rng rng(seed);
    return sum(mul(y, Var<double>(random_tensor(y.shape(), rng))));
}

struct OpGradCase {
    std::string name;
    GraphFn fn;
    std::vector<Tensor<double>> inputs;
};

inline std::vector<OpGradCase> op_gradient_cases(std::uint64_t seed = 1) {
    Rng rng(seed);
    std::vector<OpGradCase> cases;
    auto proj = [](std::function<Var<double>(const std::vector<Var<double>>&)> op) {
        return [op](const std::vector<Var<double>>& v) { return random_projection(op(v), 99); };
    };
    const Shape s4{2, 3, 4, 4};
    cases.push_back({"add", proj([](const auto& v) { return add(v[0], v[1]); }),
                     {random_tensor(s4, rng), random_tensor(s4, rng)}});
    cases.push_back({"add_broadcast", proj([](const auto& v) { return add(v[0], v[1]); }),
                     {random_tensor(s4, rng), random_tensor({4, 4}, rng)}});
    cases.push_back({"sub", proj([](const auto& v) { return sub(v[0], v[1]); }),
                     {random_tensor(s4, rng), random_tensor(s4, rng)}});
    cases.push_back({"mul", proj([](const auto& v) { return mul(v[0], v[1]); }),
                     {random_tensor(s4, rng), random_tensor(s4, rng)}});
    cases.push_back({"scale", proj([](const auto& v) { return scale(v[0], 0.37); }), {random_tensor(s4, rng)}});
    cases.push_back({"sum", [](const auto& v) { return sum(v[0]); }, {random_tensor(s4, rng)}});
    cases.push_back({"matmul_channels", proj([](const auto& v) { return matmul_channels(v[0], v[1], v[2]); }),
                     {random_tensor(s4, rng), random_tensor({5, 3}, rng), random_tensor({5}, rng)}});
    cases.push_back({"gelu", proj([](const auto& v) { return gelu(v[0]); }), {random_tensor(s4, rng, -3, 3)}});
    cases.push_back({"avgpool2", proj([](const auto& v) { return avgpool2(v[0]); }), {random_tensor(s4, rng)}});
    cases.push_back({"upsample_bilinear2", proj([](const auto& v) { return upsample_bilinear2(v[0]); }),
                     {random_tensor(s4, rng)}});
    cases.push_back({"slice_channels", proj([](const auto& v) { return slice_channels(v[0], 1, 2); }),
                     {random_tensor(s4, rng)}});
    cases.push_back({"concat_channels", proj([](const auto& v) { return concat_channels(v[0], v[1]); }),
                     {random_tensor(s4, rng), random_tensor({2, 2, 4, 4}, rng)}});
    cases.push_back({"spectral_conv",
                     proj([](const auto& v) { return spectral_conv(v[0], v[1], v[2], 2); }),
                     {random_tensor({2, 2, 8, 8}, rng), random_tensor(spectral_weight_shape(2, 3, 2), rng),
                      random_tensor(spectral_weight_shape(2, 3, 2), rng)}});
    cases.push_back({"spectral_conv_subset_modes",
                     proj([](const auto& v) { return spectral_conv(v[0], v[1], v[2], 2); }),
                     {random_tensor({1, 2, 8, 8}, rng), random_tensor(spectral_weight_shape(2, 2, 3), rng),
                      random_tensor(spectral_weight_shape(2, 2, 3), rng)}});
    const auto target = random_tensor({2, 1, 4, 4}, rng);
    cases.push_back({"relative_l2", [target](const auto& v) { return relative_l2(v[0], target); },
                     {random_tensor({2, 1, 4, 4}, rng)}});
    return cases;
}

/// Configuration used for the end-to-end gradient check.
inline ModelConfig gradient_check_config() {
    ModelConfig c;
    c.width = 4;
    c.modes = 4;
    c.levels = 2;
    c.t_in = 3;
    c.grid_h = c.grid_w = 16;
    return c;
}

/// Full training loss (one-step + lambda two-step) of a small SpectraNet,
/// differentiated with respect to every parameter.
inline GradCheck model_gradient_check(std::uint64_t seed = 3, double lambda = 0.1,
                                      std::size_t max_entries = std::numeric_limits<std::size_t>::max()) {
    const auto cfg = gradient_check_config();
    SpectraNet<double> m(cfg, seed);
    Rng rng(seed + 1);
    // O(1) spectral weights so the spectral path is not negligible in the check
    for (auto& p : m.parameters())
        if (p.is_complex) fill_uniform(p.value, -0.3, 0.3, rng);
    const auto window = random_tensor({1, cfg.t_in, cfg.grid_h, cfg.grid_w}, rng);
    const auto y1 = random_tensor({1, 1, cfg.grid_h, cfg.grid_w}, rng);
    const auto y2 = random_tensor({1, 1, cfg.grid_h, cfg.grid_w}, rng);
    std::vector<Tensor<double>> inputs;
    for (const auto& p : m.parameters()) inputs.push_back(p.value);
    GraphFn f = [&](const std::vector<Var<double>>& leaves) {
        const Binding<double> b(leaves);
        return training_loss<double>(m, b, window, y1, &y2, lambda).loss;
    };
    return gradcheck(f, inputs, 1e-6, max_entries);
}

// ============================================================================
// Oracle suite
// ============================================================================

struct OracleResult {
    std::string name;
    bool passed = false;
    double value = 0;
    double tolerance = 0;
};

inline OracleResult check_le(std::string name, double value, double tol) {
    return {std::move(name), value <= tol, value, tol};
}

inline double fft_dft_error(std::uint64_t seed = 0) {
    Rng rng(seed);
    const auto x = random_tensor({8, 8}, rng);
    const auto X = rfft2(x);
    const auto ref = naive_rdft2(x, 8, 8);
    double e = 0;
    for (std::size_t k = 0; k < ref.size(); ++k) e = std::max(e, std::abs(X.data[k] - ref[k]));
    return e;
}

inline double fft_roundtrip_error(std::uint64_t seed = 0) {
    Rng rng(seed);
    const auto x = random_tensor({16, 16}, rng);
    const auto y = irfft2(rfft2(x), 16, 16);
    return max_abs_diff(x, y) / l2_norm(x) * std::sqrt(double(x.size()));
}

inline double parseval_error(std::uint64_t seed = 0) {
    Rng rng(seed);
    const auto x = random_tensor({8, 16}, rng);
    const auto X = rfft2(x);
    double s = 0;
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < X.cols(); ++c) s += half_spectrum_weight(c, 16) * std::norm(X.at(0, r, c));
    const double e = sum_squares(x.data());
    return std::abs(s / 128.0 - e) / e;
}

inline double spectral_adjoint_error(std::uint64_t seed = 0) {
    Rng rng(seed);
    const auto x = random_tensor({2, 3, 8, 8}, rng), y = random_tensor({2, 2, 8, 8}, rng);
    const auto wp = random_tensor(spectral_weight_shape(3, 2, 3), rng), wn = random_tensor(spectral_weight_shape(3, 2, 3), rng);
    Var<double> xv(x, true);
    const auto out = spectral_conv(xv, Var<double>(wp), Var<double>(wn), 3);
    const double lhs = dot(out.value(), y);
    backward(sum(mul(out, Var<double>(y))));
    const double rhs = dot(x, xv.grad());
    return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

/// Relative amplitude error of a single decaying mode cos(3x + 4y) over `steps`.
inline double solver_decay_error(double nu = 0.01, double dt = 1e-3, std::size_t steps = 1000) {
    const std::size_t N = 32;
    auto w = rfft2(sample_field(N, [](double x, double y) { return std::cos(3 * x + 4 * y); }));
    const Spectrum zero{};
    const double a0 = std::abs(w.at(0, 3, 4));
    for (std::size_t s = 0; s < steps; ++s) w = step_cn_euler(w, dt, nu, zero);
    const double expected = a0 * std::exp(-25 * nu * dt * double(steps));
    return std::abs(std::abs(w.at(0, 3, 4)) - expected) / expected;
}

/// Max spectral divergence and max post-step energy above the 2/3 cutoff
/// over a short forced run from a random field.
inline std::pair<double, double> solver_invariants(std::size_t steps = 50) {
    SolverConfig c;
    c.grid = 32;
    std::mt19937_64 rng(7);
    auto w = random_initial_condition(c, rng);
    const auto f = forcing_spectrum(c);
    double div = 0, above = 0;
    for (std::size_t s = 0; s < steps; ++s) {
        w = step_cn_euler(w, c.dt, c.nu, f);
        const auto [u, v] = velocity_from_vorticity(w);
        div = std::max(div, spectral_divergence(u, v));
        above = std::max(above, energy_above_cutoff(w));
    }
    return {div, above};
}

inline double lemma1a_worst_rel(const std::vector<double>& Ls, std::size_t max_T, double eps0 = 1e-3) {
    double worst = 0;
    for (double L : Ls)
        for (std::size_t T = 1; T <= max_T; ++T) {
            const double ref = lemma1a_closed_form(L, eps0, T);
            worst = std::max(worst, std::abs(lemma1a_error(L, eps0, T) - ref) / ref);
        }
    return worst;
}

/// Quick self-test used by the `oracles` command.
inline std::vector<OracleResult> run_suite(bool include_model_gradient = true) {
    std::vector<OracleResult> r;
    r.push_back(check_le("fft.naive_dft_max_abs", fft_dft_error(), 1e-10));
    r.push_back(check_le("fft.roundtrip_rel", fft_roundtrip_error(), 1e-12));
    r.push_back(check_le("fft.parseval_rel", parseval_error(), 1e-10));
    r.push_back(check_le("spectral.adjoint_rel", spectral_adjoint_error(), 1e-10));
    for (const auto& c : op_gradient_cases()) r.push_back(check_le("grad." + c.name, gradcheck(c.fn, c.inputs).rel_err, 1e-5));
    if (include_model_gradient)
        r.push_back(check_le("grad.spectranet_loss(sampled)", model_gradient_check(3, 0.1, 24).rel_err, 1e-4));
    r.push_back(check_le("lemma1a.geometric_rel", lemma1a_worst_rel({0.5, 1.5}, 40), 1e-9));
    const auto b = lemma1b_trials(200, 200, 0.01);
    r.push_back(check_le("lemma1b.violations", double(b.violations), 0));
    r.push_back(check_le("solver.single_mode_decay_rel", solver_decay_error(), 0.01));
    const auto [div, above] = solver_invariants();
    r.push_back(check_le("solver.divergence", div, 1e-12));
    r.push_back(check_le("solver.above_cutoff", above, 0));
    return r;
}

}  // namespace spectranet::oracles
