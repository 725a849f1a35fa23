#pragma once

#include <optional>
#include <thread>

#include "spectranet/checkpoint.hpp"
#include "spectranet/evaluate.hpp"

namespace spectranet {

// ============================================================================
// Configuration
// ============================================================================

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 10;
    double peak_lr = 1e-3;
    double weight_decay = 1e-5;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double lambda_sg = 0.1;
    std::uint64_t seed = 0;
    std::size_t t_out = 10;
    std::size_t n_train = 48, n_val = 8, n_test = 8;  // contiguous split
    std::size_t threads = 1;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},   {"batch_size", c.batch_size}, {"peak_lr", c.peak_lr},
         {"weight_decay", c.weight_decay}, {"beta1", c.beta1}, {"beta2", c.beta2},
         {"eps", c.eps},         {"lambda_sg", c.lambda_sg},   {"seed", c.seed},
         {"t_out", c.t_out},     {"n_train", c.n_train},       {"n_val", c.n_val},
         {"n_test", c.n_test},   {"threads", c.threads}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("peak_lr").get_to(c.peak_lr);
    j.at("weight_decay").get_to(c.weight_decay);
    j.at("beta1").get_to(c.beta1);
    j.at("beta2").get_to(c.beta2);
    j.at("eps").get_to(c.eps);
    j.at("lambda_sg").get_to(c.lambda_sg);
    j.at("seed").get_to(c.seed);
    j.at("t_out").get_to(c.t_out);
    j.at("n_train").get_to(c.n_train);
    j.at("n_val").get_to(c.n_val);
    j.at("n_test").get_to(c.n_test);
    j.at("threads").get_to(c.threads);
}

// ============================================================================
// Loss
// ============================================================================

template <Real T>
struct LossTerms {
    Var<T> loss;
    Var<T> raw;             // network output of the first application
    Var<T> y_hat;           // integrated one-step prediction
    std::optional<Var<T>> y_hat2;  // integrated two-step prediction
};

/// L = rel_l2(raw, y1 - last) + lambda rel_l2(y_hat2, y2) for residual-target
/// models; direct models compare raw against y1. The two-step term advances
/// the window with the integrated prediction and is skipped without y2.
template <Real T>
LossTerms<T> training_loss(const Model<T>& m, const Binding<T>& p, const Tensor<T>& window_cf, const Tensor<T>& y1,
                           const Tensor<T>* y2, double lambda) {
    if (lambda < 0) throw std::invalid_argument("training_loss: lambda must be >= 0");
    const std::size_t C = window_cf.dim(1);
    const Var<T> cur(window_cf);
    const Var<T> last = slice_channels(cur, C - 1, 1);
    const Var<T> raw = m.forward(p, cur);
    const bool residual = m.residual_target();
    Tensor<T> target = y1;
    if (residual) {
        if (y1.shape() != last.shape()) throw ShapeError("training_loss(y1)", last.shape(), y1.shape());
        for (std::size_t k = 0; k < target.size(); ++k) target[k] -= last.value()[k];
    }
    const Var<T> y_hat = residual ? add(raw, last) : raw;
    LossTerms<T> out{relative_l2(raw, target), raw, y_hat, std::nullopt};
    if (y2 && lambda > 0) {
        const Var<T> cur2 = C > 1 ? concat_channels(slice_channels(cur, 1, C - 1), y_hat) : y_hat;
        const Var<T> raw2 = m.forward(p, cur2);
        const Var<T> y_hat2 = residual ? add(raw2, y_hat) : raw2;
        out.loss = add(out.loss, scale(relative_l2(y_hat2, *y2), static_cast<T>(lambda)));
        out.y_hat2 = y_hat2;
    }
    return out;
}

// ============================================================================
// Optimizer and schedule
// ============================================================================

enum class WeightDecayMode { decoupled, coupled };

struct OptimizerState {
    std::vector<std::vector<double>> m, v;
    std::size_t step = 0;
    std::size_t skipped = 0;
};

/// AdamW (decoupled decay theta -= lr wd theta before the moment update), or
/// Adam with the decay folded into the gradient. Non-finite gradients skip
/// the step and return false.
template <Real T>
bool adamw_step(ParameterSet<T>& params, const std::vector<Tensor<T>>& grads, OptimizerState& st, double lr,
                double beta1, double beta2, double eps, double wd,
                WeightDecayMode mode = WeightDecayMode::decoupled) {
    if (grads.size() != params.size()) throw std::invalid_argument("adamw_step: grads/params count mismatch");
    for (const auto& g : grads)
        if (!g.all_finite()) {
            ++st.skipped;
            return false;
        }
    if (st.m.empty()) {
        for (const auto& p : params) {
            st.m.emplace_back(p.value.size(), 0.0);
            st.v.emplace_back(p.value.size(), 0.0);
        }
    }
    ++st.step;
    const double bc1 = 1 - std::pow(beta1, double(st.step));
    const double bc2 = 1 - std::pow(beta2, double(st.step));
    const double step_size = lr / bc1, sqrt_bc2 = std::sqrt(bc2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = params[i].value;
        if (grads[i].shape() != theta.shape()) throw ShapeError("adamw_step(" + params[i].name + ")", theta.shape(), grads[i].shape());
        auto& m = st.m[i];
        auto& v = st.v[i];
        for (std::size_t k = 0; k < theta.size(); ++k) {
            double th = theta[k];
            double g = grads[i][k];
            if (mode == WeightDecayMode::decoupled)
                th *= 1 - lr * wd;
            else
                g += wd * th;
            m[k] = beta1 * m[k] + (1 - beta1) * g;
            v[k] = beta2 * v[k] + (1 - beta2) * g * g;
            th -= step_size * m[k] / (std::sqrt(v[k]) / sqrt_bc2 + eps);
            theta[k] = static_cast<T>(th);
        }
    }
    return true;
}

/// One-cycle schedule: cosine from peak/25 to peak over steps [0, 0.3 n - 1],
/// then cosine to peak/1e4 at step n - 1.
inline double onecycle_lr(std::size_t step, std::size_t total_steps, double peak) {
    if (total_steps == 0 || step >= total_steps)
        throw std::out_of_range("onecycle_lr: step " + std::to_string(step) + " outside [0," +
                                std::to_string(total_steps) + ")");
    const double start = peak / 25, end = peak / 1e4;
    const double end1 = 0.3 * double(total_steps) - 1, end2 = double(total_steps) - 1;
    auto cos_anneal = [](double a, double b, double pct) { return b + (a - b) / 2 * (std::cos(std::numbers::pi * pct) + 1); };
    const double s = double(step);
    if (s <= end1) return end1 <= 0 ? peak : cos_anneal(start, peak, s / end1);
    if (end2 <= end1) return end;
    return cos_anneal(peak, end, (s - std::max(end1, 0.0)) / (end2 - std::max(end1, 0.0)));
}

// ============================================================================
// Training loop
// ============================================================================

struct TrainingWindow {
    std::size_t traj = 0, t = 0;  // input frames [t, t+t_in)
};

/// One teacher-forced window per valid start; y2 exists when frame t+t_in+1 does.
inline std::vector<TrainingWindow> enumerate_windows(const TrajectoryDataset& ds, std::size_t t_in) {
    std::vector<TrainingWindow> w;
    for (std::size_t n = 0; n < ds.n_traj(); ++n)
        for (std::size_t t = 0; t + t_in < ds.frames(); ++t) w.push_back({n, t});
    return w;
}

/// Up to n input windows [n, t_in, H, W], evenly spaced over enumerate_windows order.
template <Real T>
Tensor<T> sample_windows(const TrajectoryDataset& ds, std::size_t t_in, std::size_t n) {
    const auto all = enumerate_windows(ds, t_in);
    if (all.empty()) throw std::invalid_argument("sample_windows: dataset has no window of length " + std::to_string(t_in));
    n = std::min(n, all.size());
    const std::size_t P = ds.frame_size();
    Tensor<T> x({n, t_in, ds.height(), ds.width()});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& w = all[i * all.size() / n];
        const float* src = ds.frame(w.traj, w.t);
        for (std::size_t k = 0; k < t_in * P; ++k) x[i * t_in * P + k] = static_cast<T>(src[k]);
    }
    return x;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0, val_l2 = 0, lr = 0;
};

struct TrainingReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 0 = the untrained model
    double best_val_l2 = std::numeric_limits<double>::infinity();
    std::size_t optimizer_steps = 0, skipped_steps = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <Real T>
Tensor<T> frames_tensor(const TrajectoryDataset& ds, std::size_t traj, std::size_t t0, std::size_t count) {
    Tensor<T> x({1, count, ds.height(), ds.width()});
    const float* src = ds.frame(traj, t0);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<T>(src[k]);
    return x;
}

}  // namespace detail

/// Averaged gradient of the per-sample loss over `batch`. Samples run on up
/// to `threads` workers; the reduction is in sample order, so results do not
/// depend on the thread count.
template <Real T>
std::pair<double, std::vector<Tensor<T>>> batch_gradient(const Model<T>& m, const TrajectoryDataset& ds,
                                                          const std::vector<TrainingWindow>& batch, double lambda,
                                                          std::size_t threads) {
    const std::size_t t_in = m.t_in(), B = batch.size();
    std::vector<std::vector<Tensor<T>>> per(B);
    std::vector<double> losses(B, 0);
    std::vector<std::exception_ptr> errors(B);
    auto run = [&](std::size_t i) {
        try {
            const auto& w = batch[i];
            const auto win = detail::frames_tensor<T>(ds, w.traj, w.t, t_in);
            const auto y1 = detail::frames_tensor<T>(ds, w.traj, w.t + t_in, 1);
            std::optional<Tensor<T>> y2;
            if (w.t + t_in + 1 < ds.frames()) y2 = detail::frames_tensor<T>(ds, w.traj, w.t + t_in + 1, 1);
            const Binding<T> p(m.parameters(), true);
            auto terms = training_loss(m, p, win, y1, y2 ? &*y2 : nullptr, lambda);
            losses[i] = terms.loss.value().item();
            backward(terms.loss);
            per[i] = p.grads();
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t nt = std::max<std::size_t>(1, std::min(threads, B));
    if (nt == 1) {
        for (std::size_t i = 0; i < B; ++i) run(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < nt; ++k)
            pool.emplace_back([&, k] {
                for (std::size_t i = k; i < B; i += nt) run(i);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<Tensor<T>> g = per[0];
    double loss = losses[0];
    for (std::size_t i = 1; i < B; ++i) {
        loss += losses[i];
        for (std::size_t k = 0; k < g.size(); ++k)
            for (std::size_t j = 0; j < g[k].size(); ++j) g[k][j] += per[i][k][j];
    }
    const T inv = T(1) / static_cast<T>(B);
    for (auto& t : g)
        for (auto& v : t.data()) v *= inv;
    return {loss / double(B), std::move(g)};
}

/// Per-epoch callback: (record, is_new_best).
using EpochCallback = std::function<void(const EpochRecord&, bool)>;

/// Trains in place. On return the model holds the best-validation weights
/// (the initial weights if no epoch improved on them).
template <Real T>
TrainingReport train_epochs(Model<T>& m, const TrajectoryDataset& train, const TrajectoryDataset& val,
                            const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    TrainingReport rep;
    const double lambda = m.residual_target() ? cfg.lambda_sg : 0.0;
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    auto windows = enumerate_windows(train, m.t_in());
    if (cfg.epochs > 0 && windows.empty()) throw std::invalid_argument("train: no training windows");
    const std::size_t per_epoch = (windows.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = per_epoch * cfg.epochs;
    auto val_metric = [&] {
        return val.n_traj() ? mean_std(rollout_l2(model_stepper(m), val, m.t_in(), cfg.t_out)).mean : 0.0;
    };
    auto snapshot = [&] {
        std::vector<Tensor<T>> s;
        for (const auto& p : m.parameters()) s.push_back(p.value);
        return s;
    };
    rep.best_val_l2 = val_metric();
    auto best = snapshot();
    OptimizerState opt;
    Rng shuffle_rng(cfg.seed ^ 0x5eedf00dULL);
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(windows.begin(), windows.end(), shuffle_rng);
        double loss_sum = 0, lr = 0;
        for (std::size_t b0 = 0; b0 < windows.size(); b0 += cfg.batch_size) {
            std::vector<TrainingWindow> batch(windows.begin() + b0,
                                              windows.begin() + std::min(b0 + cfg.batch_size, windows.size()));
            auto [loss, grads] = batch_gradient(m, train, batch, lambda, cfg.threads);
            if (!std::isfinite(loss))
                throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(step) + " (batch starting at trajectory " +
                                       std::to_string(batch.front().traj) + ", t=" +
                                       std::to_string(batch.front().t) + ")");
            lr = onecycle_lr(step++, total, cfg.peak_lr);
            adamw_step(m.parameters(), grads, opt, lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
            loss_sum += loss * double(batch.size());
        }
        EpochRecord rec{epoch, loss_sum / double(windows.size()), val_metric(), lr};
        const bool improved = rec.val_l2 < rep.best_val_l2;
        if (improved) {
            rep.best_val_l2 = rec.val_l2;
            rep.best_epoch = epoch;
            best = snapshot();
        }
        rep.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec, improved);
    }
    for (std::size_t i = 0; i < best.size(); ++i) m.parameters()[i].value = std::move(best[i]);
    rep.optimizer_steps = opt.step;
    rep.skipped_steps = opt.skipped;
    return rep;
}

inline std::string metrics_csv(const TrainingReport& r) {
    std::string s = "epoch,train_loss,val_l2,lr\n";
    for (const auto& e : r.epochs)
        s += std::to_string(e.epoch) + "," + io::fmt(e.train_loss) + "," + io::fmt(e.val_l2) + "," + io::fmt(e.lr) + "\n";
    return s;
}

}  // namespace spectranet
