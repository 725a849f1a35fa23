#pragma once

#include <memory>
#include <nlohmann/json.hpp>

#include "spectranet/ops.hpp"
#include "spectranet/parameters.hpp"
#include "spectranet/spectral.hpp"

namespace spectranet {

// ============================================================================
// Configuration
// ============================================================================

enum class Architecture { spectranet, fno };

inline const char* architecture_name(Architecture a) { return a == Architecture::fno ? "fno" : "spectranet"; }

inline Architecture parse_architecture(const std::string& s) {
    if (s == "spectranet") return Architecture::spectranet;
    if (s == "fno") return Architecture::fno;
    throw std::invalid_argument("unknown architecture '" + s + "' (expected spectranet|fno)");
}

struct ModelConfig {
    Architecture arch = Architecture::spectranet;
    std::size_t width = 32;   // base channel count w
    std::size_t modes = 12;   // truncation M at level 0
    std::size_t levels = 3;   // encoder levels L
    std::size_t t_in = 10;    // input window length
    std::size_t grid_h = 64;  // grid the weights were sized for
    std::size_t grid_w = 64;
    bool residual_target = true;
    std::size_t head_hidden_mult = 4;
    std::size_t fno_depth = 4;

    /// Channels at level l: {w, 2w, 4w, 4w, ...}, saturating at 4w.
    std::size_t level_channels(std::size_t l) const {
        std::size_t c = width;
        for (std::size_t k = 0; k < l && c < 4 * width; ++k) c *= 2;
        return std::min(c, 4 * width);
    }

    /// M_l = min(floor(M / 2^l), H_l / 2) for a level of height h_l.
    std::size_t level_modes(std::size_t l, std::size_t h_l) const { return std::min(modes >> l, h_l / 2); }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"arch", architecture_name(c.arch)},
         {"width", c.width},
         {"modes", c.modes},
         {"levels", c.levels},
         {"t_in", c.t_in},
         {"grid_h", c.grid_h},
         {"grid_w", c.grid_w},
         {"residual_target", c.residual_target},
         {"head_hidden_mult", c.head_hidden_mult},
         {"fno_depth", c.fno_depth}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.arch = parse_architecture(j.at("arch").get<std::string>());
    j.at("width").get_to(c.width);
    j.at("modes").get_to(c.modes);
    j.at("levels").get_to(c.levels);
    j.at("t_in").get_to(c.t_in);
    j.at("grid_h").get_to(c.grid_h);
    j.at("grid_w").get_to(c.grid_w);
    j.at("residual_target").get_to(c.residual_target);
    j.at("head_hidden_mult").get_to(c.head_hidden_mult);
    j.at("fno_depth").get_to(c.fno_depth);
}

// ============================================================================
// Building blocks shared by both architectures
// ============================================================================

namespace detail {

struct Linear {
    std::size_t w = 0, b = 0;  // parameter indices
};

struct SpectralLayer {
    std::size_t w_pos = 0, w_neg = 0;
    std::size_t block_modes = 0;  // 0 -> no spectral path
};

template <Real T>
Linear add_linear(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor<T> w({out, in}), b({out});
    fill_uniform(w, -bound, bound, rng);
    fill_uniform(b, -bound, bound, rng);
    return {ps.add(name + ".w", std::move(w)), ps.add(name + ".b", std::move(b))};
}

template <Real T>
SpectralLayer add_spectral(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                           std::size_t modes, Rng& rng) {
    SpectralLayer s;
    s.block_modes = modes;
    if (modes == 0) return s;
    const double scale = 1.0 / static_cast<double>(in * out);
    Tensor<T> wp(spectral_weight_shape(in, out, modes)), wn(spectral_weight_shape(in, out, modes));
    fill_uniform(wp, 0.0, scale, rng);
    fill_uniform(wn, 0.0, scale, rng);
    s.w_pos = ps.add(name + ".w_pos", std::move(wp), true);
    s.w_neg = ps.add(name + ".w_neg", std::move(wn), true);
    return s;
}

template <Real T>
Var<T> apply(const Binding<T>& p, const Linear& l, const Var<T>& x) {
    return matmul_channels(x, p[l.w], p[l.b]);
}

template <Real T>
Var<T> apply(const Binding<T>& p, const SpectralLayer& s, const Var<T>& x) {
    const std::size_t m = std::min({s.block_modes, x.shape()[2] / 2, x.shape()[3] / 2 + 1});
    return spectral_conv(x, p[s.w_pos], p[s.w_neg], m);
}

/// Normalized coordinate channels: channel 0 holds i/H, channel 1 holds j/W.
template <Real T>
Tensor<T> coordinate_grid(std::size_t B, std::size_t H, std::size_t W) {
    Tensor<T> g({B, 2, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                g.at(b, 0, i, j) = static_cast<T>(i) / static_cast<T>(H);
                g.at(b, 1, i, j) = static_cast<T>(j) / static_cast<T>(W);
            }
    return g;
}

}  // namespace detail

// ============================================================================
// Model interface
// ============================================================================

/// A learned one-step operator on a window of frames. The graph-level forward
/// takes a channel-first window [B, t_in, H, W] and returns the raw output
/// [B, 1, H, W] (a residual when residual_target is set).
template <Real T>
class Model {
public:
    virtual ~Model() = default;

    virtual Var<T> forward(const Binding<T>& params, const Var<T>& window_cf) const = 0;

    const ModelConfig& config() const { return config_; }
    bool residual_target() const { return config_.residual_target; }
    std::size_t t_in() const { return config_.t_in; }
    ParameterSet<T>& parameters() { return params_; }
    const ParameterSet<T>& parameters() const { return params_; }

    /// Inputs must be a power-of-two grid the architecture can coarsen.
    virtual void check_grid(std::size_t H, std::size_t W) const {
        if (!is_power_of_two(H) || !is_power_of_two(W))
            throw std::invalid_argument("grid " + std::to_string(H) + "x" + std::to_string(W) +
                                        " must be powers of two");
    }

protected:
    explicit Model(ModelConfig cfg) : config_(std::move(cfg)) {}

    Var<T> lift_input(const Binding<T>& p, const detail::Linear& lift, const Var<T>& window_cf) const {
        const auto& s = window_cf.shape();
        const Var<T> grid(detail::coordinate_grid<T>(s[0], s[2], s[3]));
        return detail::apply(p, lift, concat_channels(window_cf, grid));
    }

    ModelConfig config_;
    ParameterSet<T> params_;
};

// ============================================================================
// SpectraNet: spectral U-Net with residual-target output
// ============================================================================

template <Real T>
class SpectraNet final : public Model<T> {
public:
    struct Block {
        detail::SpectralLayer spec;
        detail::Linear fc1, fc2, conv;
    };

    SpectraNet(ModelConfig cfg, std::uint64_t seed) : Model<T>(std::move(cfg)) {
        const auto& c = this->config_;
        if (c.levels == 0) throw std::invalid_argument("SpectraNet: levels must be >= 1");
        Rng rng(seed);
        auto& ps = this->params_;
        lift_ = detail::add_linear(ps, "lift", c.t_in + 2, c.width, rng);
        std::size_t h = c.grid_h;
        for (std::size_t l = 0; l < c.levels; ++l, h /= 2) {
            const std::size_t ch = c.level_channels(l);
            enc_.push_back(make_block(ps, "enc." + std::to_string(l), ch, c.level_modes(l, h), rng));
            down_.push_back(detail::add_linear(ps, "down." + std::to_string(l), ch, c.level_channels(l + 1), rng));
        }
        mid_ = make_block(ps, "mid", c.level_channels(c.levels), c.level_modes(c.levels, h), rng);
        up_.resize(c.levels);
        dec_.resize(c.levels);
        h = c.grid_h >> (c.levels - 1);
        for (std::size_t l = c.levels; l-- > 0; h *= 2) {
            const std::size_t ch = c.level_channels(l);
            up_[l] = detail::add_linear(ps, "up." + std::to_string(l), c.level_channels(l + 1), ch, rng);
            dec_[l] = make_block(ps, "dec." + std::to_string(l), ch, c.level_modes(l, h), rng);
        }
        head1_ = detail::add_linear(ps, "head.fc1", c.width, c.head_hidden_mult * c.width, rng);
        head2_ = detail::add_linear(ps, "head.fc2", c.head_hidden_mult * c.width, 1, rng);
    }

    void check_grid(std::size_t H, std::size_t W) const override {
        Model<T>::check_grid(H, W);
        const std::size_t min_extent = (std::size_t{1} << this->config_.levels) * 4;
        if (H < min_extent || W < min_extent)
            throw std::invalid_argument("SpectraNet: grid " + std::to_string(H) + "x" + std::to_string(W) +
                                        " is below 2^L*4 = " + std::to_string(min_extent));
    }

    Var<T> forward(const Binding<T>& p, const Var<T>& window_cf) const override {
        Var<T> z = this->lift_input(p, lift_, window_cf);
        std::vector<Var<T>> skips;
        for (std::size_t l = 0; l < enc_.size(); ++l) {
            z = block(p, enc_[l], z);
            skips.push_back(z);
            z = detail::apply(p, down_[l], avgpool2(z));
        }
        z = block(p, mid_, z);
        for (std::size_t l = dec_.size(); l-- > 0;) {
            z = detail::apply(p, up_[l], upsample_bilinear2(z));
            z = add(z, skips[l]);
            z = block(p, dec_[l], z);
        }
        return detail::apply(p, head2_, gelu(detail::apply(p, head1_, z)));
    }

    /// GeLU(Spec(x) + MLP(x) + Conv(x)) with a two-layer pointwise MLP.
    Var<T> block(const Binding<T>& p, const Block& b, const Var<T>& x) const {
        Var<T> mix = add(detail::apply(p, b.fc2, gelu(detail::apply(p, b.fc1, x))), detail::apply(p, b.conv, x));
        if (b.spec.block_modes > 0) mix = add(detail::apply(p, b.spec, x), mix);
        return gelu(mix);
    }

    const Block& encoder_block(std::size_t l) const { return enc_.at(l); }

private:
    static Block make_block(ParameterSet<T>& ps, const std::string& name, std::size_t ch, std::size_t modes,
                            Rng& rng) {
        Block b;
        b.spec = detail::add_spectral(ps, name + ".spec", ch, ch, modes, rng);
        b.fc1 = detail::add_linear(ps, name + ".mlp.fc1", ch, ch, rng);
        b.fc2 = detail::add_linear(ps, name + ".mlp.fc2", ch, ch, rng);
        b.conv = detail::add_linear(ps, name + ".conv", ch, ch, rng);
        return b;
    }

    detail::Linear lift_, head1_, head2_;
    std::vector<Block> enc_, dec_;
    std::vector<detail::Linear> down_, up_;
    Block mid_;
};

// ============================================================================
// FNO-style direct-prediction baseline
// ============================================================================

template <Real T>
class FnoBaseline final : public Model<T> {
public:
    FnoBaseline(ModelConfig cfg, std::uint64_t seed) : Model<T>(std::move(cfg)) {
        auto& c = this->config_;
        c.residual_target = false;
        Rng rng(seed);
        auto& ps = this->params_;
        lift_ = detail::add_linear(ps, "lift", c.t_in + 2, c.width, rng);
        for (std::size_t d = 0; d < c.fno_depth; ++d) {
            const std::string name = "fno." + std::to_string(d);
            spec_.push_back(detail::add_spectral(ps, name + ".spec", c.width, c.width, c.modes, rng));
            pointwise_.push_back(detail::add_linear(ps, name + ".w", c.width, c.width, rng));
        }
        head1_ = detail::add_linear(ps, "head.fc1", c.width, c.head_hidden_mult * c.width, rng);
        head2_ = detail::add_linear(ps, "head.fc2", c.head_hidden_mult * c.width, 1, rng);
    }

    Var<T> forward(const Binding<T>& p, const Var<T>& window_cf) const override {
        Var<T> z = this->lift_input(p, lift_, window_cf);
        for (std::size_t d = 0; d < spec_.size(); ++d) {
            z = add(detail::apply(p, spec_[d], z), detail::apply(p, pointwise_[d], z));
            if (d + 1 < spec_.size()) z = gelu(z);
        }
        return detail::apply(p, head2_, gelu(detail::apply(p, head1_, z)));
    }

private:
    detail::Linear lift_, head1_, head2_;
    std::vector<detail::SpectralLayer> spec_;
    std::vector<detail::Linear> pointwise_;
};

template <Real T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.arch == Architecture::fno) return std::make_unique<FnoBaseline<T>>(cfg, seed);
    return std::make_unique<SpectraNet<T>>(cfg, seed);
}

template <Real T>
ParameterCount count_parameters(const Model<T>& m) {
    return m.parameters().count();
}

template <Real T>
void zero_parameters(Model<T>& m) {
    for (auto& p : m.parameters()) p.value.fill(T(0));
}

// ============================================================================
// Inference: forward, step, rollout
// ============================================================================

/// Channel-first raw output without gradient tracking; no input validation.
template <Real T>
Tensor<T> raw_output_cf(const Model<T>& m, const Tensor<T>& window_cf) {
    const Binding<T> p(m.parameters(), false);
    return m.forward(p, Var<T>(window_cf)).value();
}

/// Integrated next frame from a channel-first window: last + raw or raw.
template <Real T>
Tensor<T> integrate_cf(const Model<T>& m, const Tensor<T>& window_cf, const Tensor<T>& raw_cf) {
    if (!m.residual_target()) return raw_cf;
    const auto& s = window_cf.shape();
    const std::size_t P = s[2] * s[3];
    Tensor<T> y = raw_cf;
    for (std::size_t b = 0; b < s[0]; ++b) {
        const T* last = window_cf.ptr() + (b * s[1] + s[1] - 1) * P;
        T* dst = y.ptr() + b * P;
        for (std::size_t k = 0; k < P; ++k) dst[k] += last[k];
    }
    return y;
}

/// Drops the oldest frame of a channel-first window and appends `frame` [B,1,H,W].
template <Real T>
Tensor<T> advance_window_cf(const Tensor<T>& window_cf, const Tensor<T>& frame) {
    const auto& s = window_cf.shape();
    const std::size_t B = s[0], C = s[1], P = s[2] * s[3];
    Tensor<T> out(s);
    for (std::size_t b = 0; b < B; ++b) {
        std::copy_n(window_cf.ptr() + (b * C + 1) * P, (C - 1) * P, out.ptr() + b * C * P);
        std::copy_n(frame.ptr() + b * P, P, out.ptr() + (b * C + C - 1) * P);
    }
    return out;
}

namespace detail {

template <Real T>
void check_window(const Model<T>& m, const Tensor<T>& window) {
    if (window.rank() != 4 || window.dim(3) != m.t_in())
        throw ShapeError("window must be [B,H,W," + std::to_string(m.t_in()) + "], got " + shape_str(window.shape()));
    m.check_grid(window.dim(1), window.dim(2));
}

}  // namespace detail

/// Raw network output for a window [B,H,W,t_in] -> [B,H,W,1].
template <Real T>
Tensor<T> forward(const Model<T>& m, const Tensor<T>& window) {
    detail::check_window(m, window);
    if (!window.all_finite()) throw std::domain_error("forward: window contains non-finite values");
    const auto& s = window.shape();
    return raw_output_cf(m, to_channels_first(window)).reshaped({s[0], s[1], s[2], 1});
}

/// One integrated prediction [B,H,W,1].
template <Real T>
Tensor<T> step(const Model<T>& m, const Tensor<T>& window) {
    detail::check_window(m, window);
    const auto& s = window.shape();
    const auto cf = to_channels_first(window);
    return integrate_cf(m, cf, raw_output_cf(m, cf)).reshaped({s[0], s[1], s[2], 1});
}

/// Free rollout on a channel-first window; returns the T_out frames [B,T_out,H,W].
/// Non-finite values propagate.
template <Real T>
Tensor<T> rollout_cf(const Model<T>& m, Tensor<T> window_cf, std::size_t t_out) {
    const auto& s = window_cf.shape();
    const std::size_t B = s[0], P = s[2] * s[3];
    Tensor<T> out({B, t_out, s[2], s[3]});
    for (std::size_t t = 0; t < t_out; ++t) {
        Tensor<T> next = integrate_cf(m, window_cf, raw_output_cf(m, window_cf));
        for (std::size_t b = 0; b < B; ++b) std::copy_n(next.ptr() + b * P, P, out.ptr() + (b * t_out + t) * P);
        window_cf = advance_window_cf(window_cf, next);
    }
    return out;
}

/// Free rollout: [B,H,W,t_in] -> [B,H,W,T_out], sliding window of integrated predictions.
template <Real T>
Tensor<T> rollout(const Model<T>& m, const Tensor<T>& window, std::size_t t_out) {
    if (t_out == 0) throw std::invalid_argument("rollout: T_out must be >= 1");
    detail::check_window(m, window);
    return to_channels_last(rollout_cf(m, to_channels_first(window), t_out));
}

/// Window [B,H,W,C] advanced by one frame [B,H,W,1] (channels-last).
template <Real T>
Tensor<T> advance_window(const Tensor<T>& window, const Tensor<T>& frame) {
    const auto& s = window.shape();
    if (frame.rank() != 4 || frame.dim(0) != s[0] || frame.dim(1) != s[1] || frame.dim(2) != s[2] || frame.dim(3) != 1)
        throw ShapeError("advance_window", s, frame.shape());
    const auto f = to_channels_first(frame);
    return to_channels_last(advance_window_cf(to_channels_first(window), f));
}

}  // namespace spectranet
