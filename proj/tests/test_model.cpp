#include "test_support.hpp"

using namespace spectranet;
using namespace testing_support;

namespace {

std::size_t count_prefix(const ParameterSet<float>& ps, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& p : ps)
        if (p.name.rfind(prefix, 0) == 0) n += p.is_complex ? p.value.size() / 2 : p.value.size();
    return n;
}

Tensor<float> random_window(std::size_t B, std::size_t H, std::size_t C, std::uint64_t seed) {
    return rand_tensor({B, H, H, C}, seed).cast<float>();
}

}  // namespace

TEST(ModelConfig, LevelSchedule) {
    ModelConfig c;
    EXPECT_EQ(c.level_channels(0), 32u);
    EXPECT_EQ(c.level_channels(1), 64u);
    EXPECT_EQ(c.level_channels(2), 128u);
    EXPECT_EQ(c.level_channels(3), 128u);
    EXPECT_EQ(c.level_modes(0, 64), 12u);
    EXPECT_EQ(c.level_modes(2, 16), 3u);
    EXPECT_EQ(c.level_modes(3, 8), 1u);
    EXPECT_EQ(c.level_modes(1, 8), 4u);  // Nyquist cap
}

TEST(ModelConfig, JsonRoundTrip) {
    ModelConfig c = tiny_config(Architecture::fno);
    const nlohmann::json j = c;
    EXPECT_EQ(j.get<ModelConfig>(), c);
    EXPECT_THROW(parse_architecture("unet"), std::invalid_argument);
}

TEST(ParameterCount, GoldenDefaultConfiguration) {
    const SpectraNet<float> m(ModelConfig{}, 0);
    const auto c = count_parameters(m);
    EXPECT_EQ(c.complex_entries, 2040705u);
    EXPECT_EQ(c.real, 3842945u);
    EXPECT_EQ(count_prefix(m.parameters(), "head."), 4353u);
}

TEST(ParameterCount, IndependentOfGrid) {
    for (const auto& [w, M, L] : {std::tuple{8, 8, 3}, std::tuple{32, 12, 3}, std::tuple{16, 6, 2}}) {
        std::vector<ParameterCount> counts;
        for (std::size_t H : {32u, 64u, 128u}) {
            ModelConfig c;
            c.width = w;
            c.modes = M;
            c.levels = L;
            c.grid_h = c.grid_w = H;
            counts.push_back(count_parameters(SpectraNet<float>(c, 0)));
        }
        EXPECT_EQ(counts[0], counts[1]);
        EXPECT_EQ(counts[1], counts[2]);
    }
}

TEST(ParameterCount, ParameterNamesAreUnique) {
    const SpectraNet<float> m(ModelConfig{}, 0);
    std::set<std::string> names;
    for (const auto& p : m.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
    EXPECT_TRUE(m.parameters().find("enc.0.spec.w_pos").has_value());
    EXPECT_TRUE(m.parameters().find("mid.spec.w_neg").has_value());
}

TEST(Model, SameSeedSameWeightsAndOutputs) {
    const auto cfg = tiny_config();
    const SpectraNet<float> a(cfg, 42), b(cfg, 42), c(cfg, 43);
    for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
    EXPECT_NE(a.parameters()[0].value, c.parameters()[0].value);
    const auto w = random_window(2, 16, 3, 1);
    EXPECT_EQ(forward(a, w), forward(b, w));
}

TEST(Model, ResidualIdentityIsBitwise) {
    const auto cfg = tiny_config();
    const SpectraNet<float> m(cfg, 1);
    const auto w = random_window(3, 16, 3, 2);
    const auto raw = forward(m, w), next = step(m, w);
    ASSERT_EQ(next.shape(), (Shape{3, 16, 16, 1}));
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j)
                EXPECT_EQ(next.at(b, i, j, 0), w.at(b, i, j, 2) + raw.at(b, i, j, 0));
}

TEST(Model, FnoIsDirectPrediction) {
    auto cfg = tiny_config(Architecture::fno);
    cfg.residual_target = true;  // ignored by the baseline
    const FnoBaseline<float> m(cfg, 1);
    EXPECT_FALSE(m.residual_target());
    const auto w = random_window(2, 16, 3, 3);
    EXPECT_EQ(step(m, w), forward(m, w));
    EXPECT_TRUE(m.parameters().find("fno.1.spec.w_pos").has_value());
}

TEST(Model, ZeroWeightResidualModelIsPersistence) {
    SpectraNet<float> m(tiny_config(), 1);
    zero_parameters(m);
    const auto w = random_window(2, 16, 3, 4);
    const auto y = rollout(m, w, 4);
    ASSERT_EQ(y.shape(), (Shape{2, 16, 16, 4}));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j)
                for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(y.at(b, i, j, t), w.at(b, i, j, 2));
}

TEST(Model, RolloutFeedsPredictionsBack) {
    const SpectraNet<float> m(tiny_config(), 5);
    auto w = random_window(1, 16, 3, 5);
    const auto y = rollout(m, w, 3);
    for (std::size_t t = 0; t < 3; ++t) {
        const auto next = step(m, w);
        for (std::size_t k = 0; k < 256; ++k) EXPECT_EQ(y[k * 3 + t], next[k]);
        w = advance_window(w, next);
    }
}

TEST(Model, InputValidation) {
    const SpectraNet<float> m(tiny_config(), 1);
    EXPECT_THROW(forward(m, random_window(1, 16, 4, 1)), ShapeError);
    EXPECT_THROW(forward(m, Tensor<float>({1, 12, 12, 3})), std::invalid_argument);
    EXPECT_THROW(forward(m, Tensor<float>({1, 8, 8, 3})), std::invalid_argument);  // below 2^L * 4
    auto bad = random_window(1, 16, 3, 1);
    bad[17] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(forward(m, bad), std::domain_error);
    EXPECT_THROW(rollout(m, random_window(1, 16, 3, 1), 0), std::invalid_argument);
}

TEST(Model, RunsOnOtherGrids) {
    const SpectraNet<float> m(tiny_config(), 1);
    EXPECT_EQ(forward(m, random_window(1, 32, 3, 1)).shape(), (Shape{1, 32, 32, 1}));
    EXPECT_EQ(forward(m, Tensor<float>({1, 16, 32, 3}, 0.5f)).shape(), (Shape{1, 16, 32, 1}));
}

TEST(Model, LevelZeroBlockIsResolutionInvariant) {
    ModelConfig cfg = tiny_config();
    cfg.width = 3;
    SpectraNet<double> m(cfg, 9);
    for (auto& p : m.parameters())
        if (p.name.rfind("enc.0.", 0) == 0 && !p.is_complex) p.value.fill(0.0);
    const Binding<double> p(m.parameters(), false);
    const auto& blk = m.encoder_block(0);
    auto input = [&](std::size_t n) {
        Tensor<double> x({1, 3, n, n});
        for (std::size_t c = 0; c < 3; ++c) {
            const auto f = BandLimited(6, 100 + c).sample(n);
            std::copy_n(f.ptr(), n * n, x.ptr() + c * n * n);
        }
        return x;
    };
    const auto x32 = input(32), x64 = input(64);
    // pre-activation: shared low modes agree
    const auto s32 = rfft2(detail::apply(p, blk.spec, Var<double>(x32)).value());
    const auto s64 = rfft2(detail::apply(p, blk.spec, Var<double>(x64)).value());
    double worst = 0;
    for (std::size_t c = 0; c < 3; ++c)
        for (long k1 = -3; k1 <= 3; ++k1)
            for (std::size_t k2 = 0; k2 < 4; ++k2)
                worst = std::max(worst, std::abs(s32.at(c, std::size_t((k1 + 32) % 32), k2) / 1024.0 -
                                                 s64.at(c, std::size_t((k1 + 64) % 64), k2) / 4096.0));
    EXPECT_LE(worst, 1e-6);
    // post-activation: the pointwise GeLU keeps the shared grid points equal
    const auto y32 = m.block(p, blk, Var<double>(x32)).value(), y64 = m.block(p, blk, Var<double>(x64)).value();
    double grid_worst = 0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j = 0; j < 32; ++j)
                grid_worst = std::max(grid_worst, std::abs(y32.at(0, c, i, j) - y64.at(0, c, 2 * i, 2 * j)));
    EXPECT_LE(grid_worst, 1e-6);
}

TEST(Model, LossGradientMatchesCentralDifferences) {
    const auto cfg = tiny_config();
    SpectraNet<double> m(cfg, 3);
    const auto window = rand_tensor({1, 3, 16, 16}, 1), y1 = rand_tensor({1, 1, 16, 16}, 2),
               y2 = rand_tensor({1, 1, 16, 16}, 3);
    std::vector<Tensor<double>> inputs;
    for (const auto& p : m.parameters()) inputs.push_back(p.value);
    ScalarFn f = [&](const std::vector<Var<double>>& leaves) {
        return training_loss<double>(m, Binding<double>(leaves), window, y1, &y2, 0.1).loss;
    };
    // every 13th entry keeps the check to a few seconds; the acceptance run covers all
    EXPECT_LE(fd_rel_error(f, inputs, 1e-6, 13), 1e-4);
}
