#pragma once

#include <functional>
#include <limits>

#include "spectranet/model.hpp"
#include "spectranet/simulate.hpp"
#include "spectranet/stats.hpp"

namespace spectranet {

// ============================================================================
// Trajectory metrics
// ============================================================================

/// Per-sample ||pred - truth|| / ||truth|| over each sample's whole trailing
/// block (all frames stacked). Layout-agnostic as long as both agree.
template <Real T>
std::vector<double> joint_trajectory_l2(const Tensor<T>& pred, const Tensor<T>& truth) {
    if (pred.shape() != truth.shape()) throw ShapeError("joint_trajectory_l2", pred.shape(), truth.shape());
    if (pred.rank() < 2) throw ShapeError("joint_trajectory_l2: need [B, ...], got " + shape_str(pred.shape()));
    const std::size_t B = pred.dim(0), n = pred.size() / B;
    std::vector<double> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        double num = 0, den = 0;
        for (std::size_t k = b * n; k < (b + 1) * n; ++k) {
            const double d = double(pred[k]) - double(truth[k]);
            num += d * d;
            den += double(truth[k]) * double(truth[k]);
        }
        if (den == 0) throw DegenerateSample(b);
        out[b] = std::sqrt(num) / std::sqrt(den);
    }
    return out;
}

// ============================================================================
// Windows from a dataset
// ============================================================================

/// Frames [t0, t0+count) of every trajectory as [n, count, H, W].
template <Real T>
Tensor<T> frames_of(const TrajectoryDataset& ds, std::size_t t0, std::size_t count) {
    if (t0 + count > ds.frames())
        throw std::invalid_argument("dataset has " + std::to_string(ds.frames()) + " frames, need " +
                                    std::to_string(t0 + count));
    const std::size_t P = ds.frame_size();
    Tensor<T> out({ds.n_traj(), count, ds.height(), ds.width()});
    for (std::size_t n = 0; n < ds.n_traj(); ++n)
        for (std::size_t k = 0; k < count * P; ++k) out[n * count * P + k] = static_cast<T>(ds.frame(n, t0)[k]);
    return out;
}

/// Maps a channel-first window [B, t_in, H, W] to the next frame [B, 1, H, W].
template <Real T>
using Stepper = std::function<Tensor<T>(const Tensor<T>&)>;

template <Real T>
Stepper<T> model_stepper(const Model<T>& m) {
    return [&m](const Tensor<T>& w) { return integrate_cf(m, w, raw_output_cf(m, w)); };
}

/// Persistence: the next frame is the last frame of the window.
template <Real T>
Stepper<T> persistence_stepper() {
    return [](const Tensor<T>& w) { return slice_channels(Var<T>(w), w.dim(1) - 1, 1).value(); };
}

/// Free rollout of `t_out` frames from each window, [B, t_out, H, W].
template <Real T>
Tensor<T> rollout_with(const Stepper<T>& f, Tensor<T> window, std::size_t t_out) {
    const std::size_t B = window.dim(0), P = window.dim(2) * window.dim(3);
    Tensor<T> out({B, t_out, window.dim(2), window.dim(3)});
    for (std::size_t t = 0; t < t_out; ++t) {
        const auto next = f(window);
        for (std::size_t b = 0; b < B; ++b) std::copy_n(next.ptr() + b * P, P, out.ptr() + (b * t_out + t) * P);
        window = advance_window_cf(window, next);
    }
    return out;
}

/// Rollouts processed `chunk` trajectories at a time.
template <Real T>
Tensor<T> rollout_chunked(const Stepper<T>& f, const Tensor<T>& windows, std::size_t t_out, std::size_t chunk = 16) {
    const std::size_t N = windows.dim(0), C = windows.dim(1), H = windows.dim(2), W = windows.dim(3);
    Tensor<T> out({N, t_out, H, W});
    for (std::size_t b0 = 0; b0 < N; b0 += chunk) {
        const std::size_t nb = std::min(chunk, N - b0);
        Tensor<T> w({nb, C, H, W});
        std::copy_n(windows.ptr() + b0 * C * H * W, w.size(), w.ptr());
        const auto y = rollout_with(f, std::move(w), t_out);
        std::copy_n(y.ptr(), y.size(), out.ptr() + b0 * t_out * H * W);
    }
    return out;
}

struct EvalReport {
    std::vector<double> per_traj;  // joint L2 per trajectory
    MeanStd l2;
    std::vector<double> persistence_per_traj;
    MeanStd persistence;
};

/// Joint L2 of free rollouts from frames [0, t_in) against frames [t_in, t_in+t_out).
template <Real T>
std::vector<double> rollout_l2(const Stepper<T>& f, const TrajectoryDataset& ds, std::size_t t_in,
                               std::size_t t_out) {
    const auto pred = rollout_chunked(f, frames_of<T>(ds, 0, t_in), t_out);
    return joint_trajectory_l2(pred, frames_of<T>(ds, t_in, t_out));
}

template <Real T>
double persistence_baseline(const TrajectoryDataset& ds, std::size_t t_in, std::size_t t_out) {
    return mean_std(rollout_l2(persistence_stepper<T>(), ds, t_in, t_out)).mean;
}

template <Real T>
EvalReport evaluate_model(const Model<T>& m, const TrajectoryDataset& ds, std::size_t t_out) {
    EvalReport r;
    r.per_traj = rollout_l2(model_stepper(m), ds, m.t_in(), t_out);
    r.l2 = mean_std(r.per_traj);
    r.persistence_per_traj = rollout_l2(persistence_stepper<T>(), ds, m.t_in(), t_out);
    r.persistence = mean_std(r.persistence_per_traj);
    return r;
}

// ============================================================================
// Long-horizon rollout and blow-up detection
// ============================================================================

struct RolloutReport {
    std::size_t horizon = 0;
    std::vector<double> initial_energy;           // per trajectory, last input frame
    std::vector<std::vector<double>> energy;      // [step][traj], frozen after divergence
    std::vector<double> mean_energy;              // per step over all trajectories
    std::vector<double> log10_mean_energy;        // per step
    std::vector<double> blowup_fraction;          // per step, non-decreasing
    std::vector<std::size_t> diverged_at;         // per trajectory; 0 = never
    double final_mean_energy_ratio = 0;           // mean over traj of E_T / E_0
};

template <Real T>
double mean_square(const T* p, std::size_t n) {
    double s = 0;
    for (std::size_t k = 0; k < n; ++k) s += double(p[k]) * double(p[k]);
    return s / double(n);
}

/// A trajectory diverges at the first step with a non-finite value or an
/// energy above threshold x its initial energy; it is frozen from then on.
template <Real T>
RolloutReport long_horizon_rollout(const Stepper<T>& f, Tensor<T> window, std::size_t horizon,
                                   double blowup_threshold = 1e6) {
    if (horizon == 0) throw std::invalid_argument("long_horizon_rollout: T must be >= 1");
    const std::size_t B = window.dim(0), C = window.dim(1), P = window.dim(2) * window.dim(3);
    RolloutReport r;
    r.horizon = horizon;
    r.diverged_at.assign(B, 0);
    for (std::size_t b = 0; b < B; ++b) r.initial_energy.push_back(mean_square(window.ptr() + (b * C + C - 1) * P, P));
    std::vector<double> current = r.initial_energy;
    std::size_t n_div = 0;
    for (std::size_t t = 1; t <= horizon; ++t) {
        auto next = f(window);
        for (std::size_t b = 0; b < B; ++b) {
            if (r.diverged_at[b]) {
                std::copy_n(window.ptr() + (b * C + C - 1) * P, P, next.ptr() + b * P);
                continue;
            }
            const T* p = next.ptr() + b * P;
            const bool finite = std::all_of(p, p + P, [](T v) { return std::isfinite(v); });
            const double e = finite ? mean_square(p, P) : std::numeric_limits<double>::infinity();
            if (!finite || !std::isfinite(e) || e > blowup_threshold * r.initial_energy[b]) {
                r.diverged_at[b] = t;
                ++n_div;
                // hold the last finite state so the batch stays finite
                std::copy_n(window.ptr() + (b * C + C - 1) * P, P, next.ptr() + b * P);
            } else {
                current[b] = e;
            }
        }
        r.energy.push_back(current);
        double mean = 0;
        for (double e : current) mean += e;
        mean /= double(B);
        r.mean_energy.push_back(mean);
        r.log10_mean_energy.push_back(mean > 0 ? std::log10(mean) : -std::numeric_limits<double>::infinity());
        r.blowup_fraction.push_back(double(n_div) / double(B));
        window = advance_window_cf(window, next);
    }
    double ratio = 0;
    for (std::size_t b = 0; b < B; ++b) ratio += current[b] / r.initial_energy[b];
    r.final_mean_energy_ratio = ratio / double(B);
    return r;
}

// ============================================================================
// Empirical Lipschitz constant
// ============================================================================

struct LipschitzReport {
    std::size_t n_inputs = 0, n_probes = 0, horizon = 0;
    double scale = 0;
    double mean_t1 = 0, p95_t1 = 0;    // over per-input suprema at T=1
    double mean_tout = 0, p95_tout = 0;  // at T=horizon, final frame
    std::vector<double> sup_t1, sup_tout;
};

template <Real T>
double l2_distance(const T* a, const T* b, std::size_t n) {
    double s = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = double(a[k]) - double(b[k]);
        s += d * d;
    }
    return std::sqrt(s);
}

/// Default probing protocol: 100 Gaussian probes of std 1e-3 per input, over 100 inputs.
struct LipschitzProtocol {
    std::size_t n_probes = 100;
    double scale = 1e-3;
    std::size_t n_inputs = 100;
};

/// Ratios are taken against the perturbation actually stored, fl(u + eps) - u.
/// The probes of one input are rolled out together as a single batch.
template <Real T>
LipschitzReport empirical_lipschitz(const Stepper<T>& f, const Tensor<T>& inputs, std::size_t n_probes,
                                    double scale, std::size_t horizon, std::uint64_t seed) {
    if (!(scale > 0)) throw std::invalid_argument("empirical_lipschitz: scale must be > 0");
    if (n_probes == 0 || horizon == 0) throw std::invalid_argument("empirical_lipschitz: need probes and horizon");
    const std::size_t N = inputs.dim(0), C = inputs.dim(1), H = inputs.dim(2), W = inputs.dim(3), P = H * W;
    LipschitzReport r{N, n_probes, horizon, scale, 0, 0, 0, 0, {}, {}};
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    for (std::size_t n = 0; n < N; ++n) {
        const T* u = inputs.ptr() + n * C * P;
        Tensor<T> u1({1, C, H, W});
        std::copy_n(u, C * P, u1.ptr());
        const auto base = rollout_with(f, u1, horizon);
        Tensor<T> v({n_probes, C, H, W});
        std::vector<double> eps(n_probes);
        for (std::size_t k = 0; k < n_probes; ++k) {
            T* dst = v.ptr() + k * C * P;
            for (std::size_t i = 0; i < C * P; ++i) dst[i] = static_cast<T>(u[i] + g(rng));
            eps[k] = l2_distance(dst, u, C * P);
        }
        const auto pert = rollout_with(f, std::move(v), horizon);
        double best1 = 0, bestT = 0;
        for (std::size_t k = 0; k < n_probes; ++k) {
            if (eps[k] == 0) continue;
            const T* y = pert.ptr() + k * horizon * P;
            best1 = std::max(best1, l2_distance(y, base.ptr(), P) / eps[k]);
            bestT = std::max(bestT, l2_distance(y + (horizon - 1) * P, base.ptr() + (horizon - 1) * P, P) / eps[k]);
        }
        r.sup_t1.push_back(best1);
        r.sup_tout.push_back(bestT);
    }
    r.mean_t1 = mean_std(r.sup_t1).mean;
    r.p95_t1 = nearest_rank(r.sup_t1, 0.95);
    r.mean_tout = mean_std(r.sup_tout).mean;
    r.p95_tout = nearest_rank(r.sup_tout, 0.95);
    return r;
}

// ============================================================================
// Residual size and the running drift bound
// ============================================================================

struct DeltaStats {
    double mean_ratio = 0, sup_ratio = 0;  // ||D_t|| / ||w_t||
    double mean_norm = 0, sup_norm = 0;    // ||D_t||
    std::size_t drift_violations = 0;      // trajectories with ||w_T - w_0|| > T sup ||D||
    std::size_t samples = 0;
};

/// Residual statistics along free rollouts; the increment is next - last for
/// any stepper, which equals the raw output in residual mode.
template <Real T>
DeltaStats residual_delta(const Stepper<T>& f, const Tensor<T>& windows, std::size_t horizon) {
    const std::size_t N = windows.dim(0), C = windows.dim(1), P = windows.dim(2) * windows.dim(3);
    DeltaStats s;
    Tensor<T> w = windows;
    std::vector<double> sup_traj(N, 0);
    Tensor<T> start({N, 1, windows.dim(2), windows.dim(3)});
    for (std::size_t b = 0; b < N; ++b) std::copy_n(w.ptr() + (b * C + C - 1) * P, P, start.ptr() + b * P);
    for (std::size_t t = 1; t <= horizon; ++t) {
        const auto next = f(w);
        for (std::size_t b = 0; b < N; ++b) {
            const T* last = w.ptr() + (b * C + C - 1) * P;
            const double d = l2_distance(next.ptr() + b * P, last, P);
            const double norm = std::sqrt(mean_square(last, P) * double(P));
            s.mean_norm += d;
            s.sup_norm = std::max(s.sup_norm, d);
            const double ratio = norm > 0 ? d / norm : 0;
            s.mean_ratio += ratio;
            s.sup_ratio = std::max(s.sup_ratio, ratio);
            sup_traj[b] = std::max(sup_traj[b], d);
            ++s.samples;
        }
        w = advance_window_cf(w, next);
        for (std::size_t b = 0; b < N; ++b) {
            const double drift = l2_distance(w.ptr() + (b * C + C - 1) * P, start.ptr() + b * P, P);
            // 1e-12 covers rounding of the norms when the increments are all aligned
            if (drift > double(t) * sup_traj[b] * (1 + 1e-12)) ++s.drift_violations;
        }
    }
    if (s.samples) {
        s.mean_norm /= double(s.samples);
        s.mean_ratio /= double(s.samples);
    }
    return s;
}

/// L2 norm of a frame's content outside the retained box: rows [0,M) and
/// [H-M,H), columns [0,M).
template <Real T>
double truncation_tail(const T* frame, std::size_t H, std::size_t W, std::size_t M) {
    Tensor<double> x({H, W});
    for (std::size_t k = 0; k < H * W; ++k) x[k] = double(frame[k]);
    const auto X = rfft2(x);
    double s = 0;
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < X.cols(); ++c) {
            const bool kept = c < M && (r < M || r + M >= H);
            if (!kept) s += half_spectrum_weight(c, W) * std::norm(X.at(0, r, c));
        }
    return std::sqrt(s / double(H * W));
}

struct BoundReport {
    std::vector<double> floor;        // per trajectory
    std::vector<double> delta;        // per trajectory sup ||D||
    std::vector<std::vector<double>> error;  // [traj][T-1]
    std::vector<bool> satisfied;      // E(T) <= floor + T delta for all T
    double fraction_satisfied = 0;
};

/// Running bound E(T) <= floor + T delta with floor = one-step error plus the
/// truncation tail of the first target frame and delta the sup increment.
template <Real T>
BoundReport running_bound(const Stepper<T>& f, const TrajectoryDataset& ds, std::size_t t_in, std::size_t t_out,
                          std::size_t modes) {
    const auto windows = frames_of<T>(ds, 0, t_in);
    const auto truth = frames_of<T>(ds, t_in, t_out);
    const std::size_t N = ds.n_traj(), H = ds.height(), W = ds.width(), P = H * W;
    BoundReport r;
    Tensor<T> w = windows;
    std::vector<double> delta(N, 0);
    std::vector<std::vector<double>> err(N);
    for (std::size_t t = 0; t < t_out; ++t) {
        const auto next = f(w);
        for (std::size_t b = 0; b < N; ++b) {
            delta[b] = std::max(delta[b], l2_distance(next.ptr() + b * P, w.ptr() + (b * t_in + t_in - 1) * P, P));
            err[b].push_back(l2_distance(next.ptr() + b * P, truth.ptr() + (b * t_out + t) * P, P));
        }
        w = advance_window_cf(w, next);
    }
    std::size_t ok = 0;
    for (std::size_t b = 0; b < N; ++b) {
        const double floor = err[b][0] + truncation_tail(truth.ptr() + b * t_out * P, H, W, modes);
        bool sat = true;
        for (std::size_t t = 0; t < t_out; ++t) sat = sat && err[b][t] <= floor + double(t + 1) * delta[b];
        r.floor.push_back(floor);
        r.delta.push_back(delta[b]);
        r.satisfied.push_back(sat);
        ok += sat;
    }
    r.error = std::move(err);
    r.fraction_satisfied = N ? double(ok) / double(N) : 0;
    return r;
}

// ============================================================================
// Lemma 1 oracles on constructed maps
// ============================================================================

/// Error after T steps between Phi(u) = L u and f(u) = L u + eps0 e (unit e),
/// computed by iterating both maps from a random start.
inline double lemma1a_error(double L, double eps0, std::size_t T, std::uint64_t seed = 0, std::size_t dim = 16) {
    Rng rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> u(dim), e(dim);
    for (auto& x : u) x = g(rng);
    e[0] = 1.0;
    std::vector<double> a = u, b = u;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < dim; ++i) {
            a[i] = L * a[i];
            b[i] = L * b[i] + eps0 * e[i];
        }
    double s = 0;
    for (std::size_t i = 0; i < dim; ++i) s += (b[i] - a[i]) * (b[i] - a[i]);
    return std::sqrt(s);
}

inline double lemma1a_closed_form(double L, double eps0, std::size_t T) {
    return eps0 * (std::pow(L, double(T)) - 1) / (L - 1);
}

struct Lemma1bResult {
    std::size_t trials = 0, horizon = 0, violations = 0;
    double worst_ratio = 0;  // max over trials and T of drift / (T delta)
};

/// f = id + D with D(u) = clip(tanh(A u + c), delta): a random smooth map
/// rescaled to norm at most delta. Checks ||f^T(u0) - u0|| <= T delta (1 + rtol)
/// for all T. Saturated tanh makes D nearly constant, which sits on the
/// equality edge of the bound; rtol absorbs the rounding of that case.
inline Lemma1bResult lemma1b_trials(std::size_t trials, std::size_t horizon, double delta, std::uint64_t seed = 0,
                                    std::size_t dim = 8, double rtol = 1e-12) {
    Lemma1bResult r{trials, horizon, 0, 0};
    Rng rng(seed);
    std::normal_distribution<double> g;
    for (std::size_t k = 0; k < trials; ++k) {
        std::vector<double> A(dim * dim), c(dim), u0(dim);
        for (auto& x : A) x = g(rng);
        for (auto& x : c) x = g(rng);
        for (auto& x : u0) x = g(rng);
        std::vector<double> u = u0, d(dim);
        for (std::size_t t = 1; t <= horizon; ++t) {
            double n = 0;
            for (std::size_t i = 0; i < dim; ++i) {
                double z = c[i];
                for (std::size_t j = 0; j < dim; ++j) z += A[i * dim + j] * u[j];
                d[i] = std::tanh(z);
                n += d[i] * d[i];
            }
            n = std::sqrt(n);
            const double s = n > delta ? delta / n : 1.0;
            for (std::size_t i = 0; i < dim; ++i) u[i] += s * d[i];
            double drift = 0;
            for (std::size_t i = 0; i < dim; ++i) drift += (u[i] - u0[i]) * (u[i] - u0[i]);
            drift = std::sqrt(drift);
            const double bound = double(t) * delta;
            r.worst_ratio = std::max(r.worst_ratio, drift / bound);
            if (drift > bound * (1 + rtol)) ++r.violations;
        }
    }
    return r;
}

// ============================================================================
// Resolution transfer
// ============================================================================

enum class Resample { bilinear, spectral_zeropad };

inline const char* resample_name(Resample s) { return s == Resample::bilinear ? "bilinear" : "spectral_zeropad"; }

inline Resample parse_resample(const std::string& s) {
    if (s == "bilinear") return Resample::bilinear;
    if (s == "spectral_zeropad") return Resample::spectral_zeropad;
    throw std::invalid_argument("unknown resampling scheme '" + s + "' (expected bilinear|spectral_zeropad)");
}

/// Every other grid point of each frame: [n, T, H, W] -> [n, T, H/2, W/2].
template <Real T>
Tensor<T> subsample2(const Tensor<T>& x) {
    const auto& s = x.shape();
    const std::size_t H = s[2], W = s[3];
    Tensor<T> y({s[0], s[1], H / 2, W / 2});
    for (std::size_t p = 0; p < s[0] * s[1]; ++p)
        for (std::size_t i = 0; i < H / 2; ++i)
            for (std::size_t j = 0; j < W / 2; ++j) y[(p * (H / 2) + i) * (W / 2) + j] = x[(p * H + 2 * i) * W + 2 * j];
    return y;
}

template <Real T>
Tensor<T> upsample2(const Tensor<T>& x, Resample scheme) {
    if (scheme == Resample::bilinear) return upsample_bilinear2(Var<T>(x)).value();
    return spectral_zeropad_resample(x, 2 * x.dim(x.rank() - 2), 2 * x.dim(x.rank() - 1));
}

struct TransferReport {
    std::string scheme;
    std::size_t native_grid = 0, target_grid = 0;
    double native_l2 = 0, transfer_l2 = 0, ratio = 0;
};

/// Native: the model on the 2x-subsampled data. Transfer: subsampled inputs
/// upsampled by `scheme`, rolled out on the full grid, scored against the
/// full-resolution truth. `frames` is [n, T, H, W] at the high resolution.
template <Real T>
TransferReport resolution_transfer(const Stepper<T>& f, const Tensor<T>& frames, std::size_t t_in, std::size_t t_out,
                                   Resample scheme) {
    const std::size_t H = frames.dim(2), W = frames.dim(3);
    if (scheme == Resample::spectral_zeropad && (!is_power_of_two(H) || !is_power_of_two(W)))
        throw std::invalid_argument("spectral_zeropad transfer needs a power-of-two target grid");
    if (frames.dim(1) < t_in + t_out) throw std::invalid_argument("resolution_transfer: too few frames");
    auto split = [&](const Tensor<T>& x, std::size_t t0, std::size_t count) {
        const std::size_t n = x.dim(0), Tn = x.dim(1), P = x.dim(2) * x.dim(3);
        Tensor<T> y({n, count, x.dim(2), x.dim(3)});
        for (std::size_t b = 0; b < n; ++b) std::copy_n(x.ptr() + (b * Tn + t0) * P, count * P, y.ptr() + b * count * P);
        return y;
    };
    const auto lo = subsample2(frames);
    const auto lo_in = split(lo, 0, t_in);
    TransferReport r;
    r.scheme = resample_name(scheme);
    r.native_grid = H / 2;
    r.target_grid = H;
    r.native_l2 = mean_std(joint_trajectory_l2(rollout_chunked(f, lo_in, t_out), split(lo, t_in, t_out))).mean;
    const auto hi_in = upsample2(lo_in, scheme);
    r.transfer_l2 = mean_std(joint_trajectory_l2(rollout_chunked(f, hi_in, t_out), split(frames, t_in, t_out))).mean;
    r.ratio = r.transfer_l2 / r.native_l2;
    return r;
}

}  // namespace spectranet
