#include "test_support.hpp"

using namespace spectranet;
using namespace testing_support;

namespace {

// Reference Adam / AdamW, written out directly in double.
struct RefAdam {
    std::vector<double> m, v;
    int t = 0;
    void step(std::vector<double>& x, const std::vector<double>& g, double lr, double b1, double b2, double eps,
              double wd) {
        if (m.empty()) m.assign(x.size(), 0), v.assign(x.size(), 0);
        ++t;
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k] -= lr * wd * x[k];
            m[k] = b1 * m[k] + (1 - b1) * g[k];
            v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
            const double mh = m[k] / (1 - std::pow(b1, t)), vh = v[k] / (1 - std::pow(b2, t));
            x[k] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

double ref_onecycle(std::size_t step, std::size_t total, double peak) {
    const double pi = std::numbers::pi;
    const double a = 0.3 * double(total) - 1, b = double(total) - 1, s = double(step);
    auto anneal = [&](double from, double to, double pct) { return to + (from - to) / 2 * (1 + std::cos(pi * pct)); };
    if (s <= a) return anneal(peak / 25, peak, s / a);
    return anneal(peak, peak / 1e4, (s - a) / (b - a));
}

}  // namespace

TEST(Loss, TwoStepTermEqualsComposedSteps) {
    const SpectraNet<double> m(tiny_config(), 2);
    const auto w = rand_tensor({2, 3, 16, 16}, 1), y1 = rand_tensor({2, 1, 16, 16}, 2), y2 = rand_tensor({2, 1, 16, 16}, 3);
    const Binding<double> p(m.parameters(), false);
    const auto terms = training_loss<double>(m, p, w, y1, &y2, 0.1);
    ASSERT_TRUE(terms.y_hat2.has_value());
    const auto first = integrate_cf(m, w, raw_output_cf(m, w));
    EXPECT_EQ(terms.y_hat.value(), first);
    const auto w2 = advance_window_cf(w, first);
    EXPECT_EQ(terms.y_hat2->value(), integrate_cf(m, w2, raw_output_cf(m, w2)));
}

TEST(Loss, AffineInLambda) {
    const SpectraNet<double> m(tiny_config(), 4);
    const auto w = rand_tensor({1, 3, 16, 16}, 4), y1 = rand_tensor({1, 1, 16, 16}, 5), y2 = rand_tensor({1, 1, 16, 16}, 6);
    const Binding<double> p(m.parameters(), false);
    auto loss = [&](double lam) { return training_loss<double>(m, p, w, y1, &y2, lam).loss.value().item(); };
    const double l0 = loss(0), l1 = loss(0.05), l2 = loss(0.1);
    EXPECT_NEAR(l1 - l0, (l2 - l0) / 2, 1e-12);
    EXPECT_GT(l2, l0);
}

TEST(Loss, ResidualTargetComparesIncrement) {
    SpectraNet<double> m(tiny_config(), 4);
    zero_parameters(m);
    const auto w = rand_tensor({1, 3, 16, 16}, 7), y1 = rand_tensor({1, 1, 16, 16}, 8);
    const Binding<double> p(m.parameters(), false);
    // raw output is 0, so the loss is ||0 - (y1 - last)|| / ||y1 - last|| = 1
    EXPECT_DOUBLE_EQ(training_loss<double>(m, p, w, y1, nullptr, 0.1).loss.value().item(), 1.0);
    EXPECT_THROW(training_loss<double>(m, p, w, y1, nullptr, -1.0), std::invalid_argument);
}

TEST(Optimizer, AdamWWithoutDecayEqualsAdam) {
    ParameterSet<double> ps;
    ps.add("a", rand_tensor({4, 3}, 1));
    ps.add("b", rand_tensor({5}, 2));
    std::vector<double> ref;
    for (const auto& p : ps) ref.insert(ref.end(), p.value.data().begin(), p.value.data().end());
    OptimizerState st;
    RefAdam adam;
    for (int it = 0; it < 6; ++it) {
        const std::vector<Tensor<double>> g = {rand_tensor({4, 3}, 10 + it), rand_tensor({5}, 20 + it)};
        std::vector<double> flat(g[0].data().begin(), g[0].data().end());
        flat.insert(flat.end(), g[1].data().begin(), g[1].data().end());
        ASSERT_TRUE(adamw_step(ps, g, st, 1e-2, 0.9, 0.999, 1e-8, 0.0));
        adam.step(ref, flat, 1e-2, 0.9, 0.999, 1e-8, 0.0);
    }
    std::size_t k = 0;
    for (const auto& p : ps)
        for (double v : p.value.data()) EXPECT_NEAR(v, ref[k++], 1e-12);
}

TEST(Optimizer, DecoupledDecayMatchesReference) {
    ParameterSet<double> ps;
    ps.add("a", rand_tensor({6}, 1));
    std::vector<double> ref(ps[0].value.data().begin(), ps[0].value.data().end());
    OptimizerState st;
    RefAdam adamw;
    for (int it = 0; it < 4; ++it) {
        const auto g = rand_tensor({6}, 40 + it);
        adamw_step(ps, {g}, st, 3e-3, 0.9, 0.99, 1e-8, 0.1);
        adamw.step(ref, std::vector<double>(g.data().begin(), g.data().end()), 3e-3, 0.9, 0.99, 1e-8, 0.1);
    }
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(ps[0].value[k], ref[k], 1e-12);
}

TEST(Optimizer, CoupledAndDecoupledDifferWithDecay) {
    ParameterSet<double> a, b;
    a.add("x", rand_tensor({4}, 1));
    b.add("x", rand_tensor({4}, 1));
    OptimizerState sa, sb;
    const auto g = rand_tensor({4}, 2);
    adamw_step(a, {g}, sa, 1e-2, 0.9, 0.999, 1e-8, 0.5, WeightDecayMode::decoupled);
    adamw_step(b, {g}, sb, 1e-2, 0.9, 0.999, 1e-8, 0.5, WeightDecayMode::coupled);
    EXPECT_GT(max_abs_diff(a[0].value, b[0].value), 1e-6);
}

TEST(Optimizer, NonFiniteGradientSkipsStep) {
    ParameterSet<double> ps;
    ps.add("x", rand_tensor({3}, 1));
    const auto before = ps[0].value;
    OptimizerState st;
    Tensor<double> g({3}, 1.0);
    g[1] = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(adamw_step(ps, {g}, st, 1e-2, 0.9, 0.999, 1e-8, 0.0));
    EXPECT_EQ(ps[0].value, before);
    EXPECT_EQ(st.step, 0u);
    EXPECT_EQ(st.skipped, 1u);
}

TEST(Schedule, OneCycleMatchesReference) {
    const double peak = 1e-3;
    for (std::size_t total : {10u, 100u, 2450u})
        for (std::size_t s = 0; s < total; ++s) EXPECT_NEAR(onecycle_lr(s, total, peak), ref_onecycle(s, total, peak), 1e-15);
    EXPECT_DOUBLE_EQ(onecycle_lr(0, 100, peak), peak / 25);
    EXPECT_DOUBLE_EQ(onecycle_lr(29, 100, peak), peak);
    EXPECT_NEAR(onecycle_lr(99, 100, peak), peak / 1e4, 1e-18);
    EXPECT_THROW(onecycle_lr(100, 100, peak), std::out_of_range);
}

TEST(TrainConfig, JsonRoundTrip) {
    TrainConfig c;
    c.epochs = 7;
    c.lambda_sg = 0.25;
    const nlohmann::json j = c;
    EXPECT_EQ(j.get<TrainConfig>(), c);
}

class TinyTraining : public ::testing::Test {
protected:
    static void SetUpTestSuite() { ds_ = new TrajectoryDataset(tiny_dataset(6, 8, 16, 1)); }
    static void TearDownTestSuite() { delete ds_; }
    static TrajectoryDataset* ds_;
};
TrajectoryDataset* TinyTraining::ds_ = nullptr;

TEST_F(TinyTraining, WindowsCoverEveryStart) {
    const auto w = enumerate_windows(*ds_, 3);
    EXPECT_EQ(w.size(), 6u * (8 - 3));
    EXPECT_EQ(w.back().traj, 5u);
    EXPECT_EQ(w.back().t, 4u);
}

TEST_F(TinyTraining, BatchGradientIsMeanOfSamplesAndThreadInvariant) {
    const SpectraNet<float> m(tiny_config(), 1);
    const std::vector<TrainingWindow> batch = {{0, 0}, {1, 2}, {3, 4}};
    const auto [l1, g1] = batch_gradient(m, *ds_, batch, 0.1, 1);
    const auto [l3, g3] = batch_gradient(m, *ds_, batch, 0.1, 3);
    EXPECT_EQ(l1, l3);
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g1[i], g3[i]);
    double loss_sum = 0;
    std::vector<Tensor<float>> acc;
    for (const auto& w : batch) {
        const auto [l, g] = batch_gradient(m, *ds_, {w}, 0.1, 1);
        loss_sum += l;
        if (acc.empty()) acc = g;
        else
            for (std::size_t i = 0; i < g.size(); ++i)
                for (std::size_t k = 0; k < g[i].size(); ++k) acc[i][k] += g[i][k];
    }
    EXPECT_NEAR(l1, loss_sum / 3, 1e-12);
    for (std::size_t i = 0; i < acc.size(); ++i)
        for (std::size_t k = 0; k < acc[i].size(); ++k)
            EXPECT_NEAR(g1[i][k], acc[i][k] / 3, 1e-6 * (1 + std::abs(acc[i][k])));
}

TEST_F(TinyTraining, DeterministicAndRestoresBest) {
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 4;
    tc.t_out = 4;
    const auto train = ds_->slice(0, 4), val = ds_->slice(4, 2);
    auto run = [&] {
        SpectraNet<float> m(tiny_config(), 7);
        auto rep = train_epochs(m, train, val, tc);
        return std::pair{metrics_csv(rep), std::move(m)};
    };
    auto [csv1, m1] = run();
    auto [csv2, m2] = run();
    EXPECT_EQ(csv1, csv2);
    for (std::size_t i = 0; i < m1.parameters().size(); ++i) EXPECT_EQ(m1.parameters()[i].value, m2.parameters()[i].value);
    SpectraNet<float> m3(tiny_config(), 7);
    const auto rep = train_epochs(m3, train, val, tc);
    EXPECT_EQ(rep.epochs.size(), 4u);
    EXPECT_EQ(rep.optimizer_steps, 4u * 5);  // 20 windows / batch 4
    const double restored = mean_std(rollout_l2(model_stepper<float>(m3), val, 3, 4)).mean;
    EXPECT_EQ(restored, rep.best_val_l2);
    if (rep.best_epoch > 0) {
        EXPECT_EQ(rep.epochs[rep.best_epoch - 1].val_l2, rep.best_val_l2);
    }
}

TEST_F(TinyTraining, LossDecreases) {
    TrainConfig tc;
    tc.epochs = 6;
    tc.batch_size = 5;
    tc.t_out = 4;
    tc.peak_lr = 3e-3;
    SpectraNet<float> m(tiny_config(), 3);
    const auto rep = train_epochs(m, ds_->slice(0, 5), ds_->slice(5, 1), tc);
    EXPECT_LT(rep.epochs.back().train_loss, rep.epochs.front().train_loss);
}

TEST_F(TinyTraining, NonFiniteLossIsReported) {
    auto bad = ds_->slice(0, 2);
    bad.data[5] = std::numeric_limits<float>::quiet_NaN();
    TrainConfig tc;
    tc.epochs = 1;
    tc.t_out = 2;
    SpectraNet<float> m(tiny_config(), 1);
    EXPECT_THROW(train_epochs(m, bad, ds_->slice(4, 1), tc), TrainingDiverged);
}
