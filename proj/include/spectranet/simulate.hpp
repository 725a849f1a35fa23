#pragma once

#include <complex>
#include <nlohmann/json.hpp>
#include <random>

#include "spectranet/fft.hpp"
#include "spectranet/io.hpp"

namespace spectranet {

// ============================================================================
// Pseudo-spectral vorticity solver on the 2*pi-periodic torus
// ============================================================================
//
// Axis 0 is x (wavenumber k1), axis 1 is y (k2). Spectra are half-spectra
// from rfft2: rows k1 in [0, N), columns k2 in [0, N/2].

using Spectrum = ComplexSpectrum<double>;
using cplx = std::complex<double>;

inline std::int64_t signed_wavenumber(std::size_t idx, std::size_t n) {
    return 2 * idx <= n ? static_cast<std::int64_t>(idx) : static_cast<std::int64_t>(idx) - static_cast<std::int64_t>(n);
}

/// 2/3 rule: true where max(|k1|,|k2|) <= N/3.
inline bool dealias_keep(std::size_t k1, std::size_t k2, std::size_t n) {
    const auto a = std::abs(signed_wavenumber(k1, n));
    const auto b = static_cast<std::int64_t>(k2);
    return 3 * std::max(a, b) <= static_cast<std::int64_t>(n);
}

inline void apply_dealias(Spectrum& s) {
    for (std::size_t p = 0; p < s.planes(); ++p)
        for (std::size_t k1 = 0; k1 < s.rows; ++k1)
            for (std::size_t k2 = 0; k2 < s.cols(); ++k2)
                if (!dealias_keep(k1, k2, s.rows)) s.at(p, k1, k2) = 0.0;
}

/// Streamfunction inversion: psi = w/|k|^2 (zero mean mode), u = i k2 psi, v = -i k1 psi.
inline std::pair<Spectrum, Spectrum> velocity_from_vorticity(const Spectrum& w) {
    auto u = Spectrum::zeros(w.lead, w.rows, w.width);
    auto v = u;
    for (std::size_t p = 0; p < w.planes(); ++p)
        for (std::size_t r = 0; r < w.rows; ++r)
            for (std::size_t c = 0; c < w.cols(); ++c) {
                const double k1 = static_cast<double>(signed_wavenumber(r, w.rows));
                const double k2 = static_cast<double>(c);
                const double k_sq = k1 * k1 + k2 * k2;
                if (k_sq == 0) continue;
                const cplx psi = w.at(p, r, c) / k_sq;
                u.at(p, r, c) = cplx(0, k2) * psi;
                v.at(p, r, c) = cplx(0, -k1) * psi;
            }
    return {std::move(u), std::move(v)};
}

/// Spectral divergence max |i k1 u + i k2 v| over all modes.
inline double spectral_divergence(const Spectrum& u, const Spectrum& v) {
    double worst = 0;
    for (std::size_t p = 0; p < u.planes(); ++p)
        for (std::size_t r = 0; r < u.rows; ++r)
            for (std::size_t c = 0; c < u.cols(); ++c) {
                const double k1 = static_cast<double>(signed_wavenumber(r, u.rows));
                const cplx d = cplx(0, k1) * u.at(p, r, c) + cplx(0, double(c)) * v.at(p, r, c);
                worst = std::max(worst, std::abs(d));
            }
    return worst;
}

namespace detail {

inline Spectrum derivative(const Spectrum& w, int axis) {
    auto d = Spectrum::zeros(w.lead, w.rows, w.width);
    for (std::size_t p = 0; p < w.planes(); ++p)
        for (std::size_t r = 0; r < w.rows; ++r)
            for (std::size_t c = 0; c < w.cols(); ++c) {
                const double k = axis == 0 ? static_cast<double>(signed_wavenumber(r, w.rows)) : double(c);
                d.at(p, r, c) = cplx(0, k) * w.at(p, r, c);
            }
    return d;
}

}  // namespace detail

/// -F[u d(w)/dx + v d(w)/dy], with the 2/3 mask applied to the product.
inline Spectrum rhs_nonlinear(const Spectrum& w) {
    const std::size_t H = w.rows, W = w.width;
    const auto [u_hat, v_hat] = velocity_from_vorticity(w);
    const auto u = irfft2(u_hat, H, W), v = irfft2(v_hat, H, W);
    const auto wx = irfft2(detail::derivative(w, 0), H, W), wy = irfft2(detail::derivative(w, 1), H, W);
    Tensor<double> adv(u.shape());
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = -(u[i] * wx[i] + v[i] * wy[i]);
    auto n = rfft2(adv);
    apply_dealias(n);
    return n;
}

/// One step: CN on the viscous term, explicit Euler on advection and forcing.
inline Spectrum step_cn_euler(const Spectrum& w, double dt, double nu, const Spectrum& forcing) {
    if (!(dt > 0)) throw std::invalid_argument("step_cn_euler: dt must be > 0");
    const auto n = rhs_nonlinear(w);
    auto out = Spectrum::zeros(w.lead, w.rows, w.width);
    for (std::size_t p = 0; p < w.planes(); ++p)
        for (std::size_t r = 0; r < w.rows; ++r)
            for (std::size_t c = 0; c < w.cols(); ++c) {
                const double k1 = static_cast<double>(signed_wavenumber(r, w.rows));
                const double a = dt * nu * (k1 * k1 + double(c * c));
                const cplx f = forcing.data.empty() ? cplx(0) : forcing.at(0, r, c);
                out.at(p, r, c) = ((1 - a / 2) * w.at(p, r, c) + dt * (n.at(p, r, c) + f)) / (1 + a / 2);
            }
    for (const auto& z : out.data)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw std::domain_error("step_cn_euler: non-finite state");
    return out;
}

/// Sum of squared grid values of the real field represented by `w`.
inline double enstrophy(const Spectrum& w) {
    const auto x = irfft2(w, w.rows, w.width);
    double s = 0;
    for (double v : x.data()) s += v * v;
    return s / static_cast<double>(x.size());
}

/// Largest |coefficient| at modes removed by the 2/3 rule.
inline double energy_above_cutoff(const Spectrum& w) {
    double worst = 0;
    for (std::size_t p = 0; p < w.planes(); ++p)
        for (std::size_t r = 0; r < w.rows; ++r)
            for (std::size_t c = 0; c < w.cols(); ++c)
                if (!dealias_keep(r, c, w.rows)) worst = std::max(worst, std::abs(w.at(p, r, c)));
    return worst;
}

// ============================================================================
// Configuration, forcing and initial conditions
// ============================================================================

struct SolverConfig {
    std::size_t grid = 32;
    double nu = 1e-3;
    double dt = 1e-3;
    std::size_t frame_interval = 50;  // solver steps per stored frame
    std::size_t frames = 20;
    double forcing_amplitude = 0.1;  // f = a (sin(x+y) + cos(x+y))
    double ic_alpha = 5.0;           // amplitude ~ (|k|^2 + tau^2)^(-alpha/2)
    double ic_tau = 7.0;
    double ic_rms = 1.0;
    std::size_t burn_in_steps = 0;
    std::uint64_t seed = 0;
    std::size_t max_attempts = 8;

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

inline constexpr const char* kSolverVersion = "cn-euler-dealias23/1";

inline void to_json(nlohmann::json& j, const SolverConfig& c) {
    j = {{"grid", c.grid},
         {"nu", c.nu},
         {"dt", c.dt},
         {"frame_interval", c.frame_interval},
         {"frames", c.frames},
         {"forcing_amplitude", c.forcing_amplitude},
         {"ic_alpha", c.ic_alpha},
         {"ic_tau", c.ic_tau},
         {"ic_rms", c.ic_rms},
         {"burn_in_steps", c.burn_in_steps},
         {"seed", c.seed},
         {"max_attempts", c.max_attempts}};
}

inline void from_json(const nlohmann::json& j, SolverConfig& c) {
    j.at("grid").get_to(c.grid);
    j.at("nu").get_to(c.nu);
    j.at("dt").get_to(c.dt);
    j.at("frame_interval").get_to(c.frame_interval);
    j.at("frames").get_to(c.frames);
    j.at("forcing_amplitude").get_to(c.forcing_amplitude);
    j.at("ic_alpha").get_to(c.ic_alpha);
    j.at("ic_tau").get_to(c.ic_tau);
    j.at("ic_rms").get_to(c.ic_rms);
    j.at("burn_in_steps").get_to(c.burn_in_steps);
    j.at("seed").get_to(c.seed);
    j.at("max_attempts").get_to(c.max_attempts);
}

/// Real field sampled at x_i = 2 pi i / N (axis 0), y_j = 2 pi j / N (axis 1).
template <typename F>
Tensor<double> sample_field(std::size_t n, F&& f) {
    Tensor<double> x({n, n});
    const double h = 2 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) x[i * n + j] = f(h * double(i), h * double(j));
    return x;
}

inline Spectrum forcing_spectrum(const SolverConfig& c) {
    const double a = c.forcing_amplitude;
    auto f = rfft2(sample_field(c.grid, [a](double x, double y) { return a * (std::sin(x + y) + std::cos(x + y)); }));
    apply_dealias(f);
    return f;
}

/// Gaussian random field with envelope (|k|^2+tau^2)^(-alpha/2), zero mean,
/// dealiased, scaled to the configured RMS.
inline Spectrum random_initial_condition(const SolverConfig& c, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor<double> noise({c.grid, c.grid});
    for (auto& v : noise.data()) v = g(rng);
    auto w = rfft2(noise);
    for (std::size_t r = 0; r < w.rows; ++r)
        for (std::size_t col = 0; col < w.cols(); ++col) {
            const double k1 = static_cast<double>(signed_wavenumber(r, w.rows));
            const double k_sq = k1 * k1 + double(col * col);
            w.at(0, r, col) *= std::pow(k_sq + c.ic_tau * c.ic_tau, -c.ic_alpha / 2);
        }
    w.at(0, 0, 0) = 0.0;
    apply_dealias(w);
    const double rms = std::sqrt(enstrophy(w));
    if (rms > 0)
        for (auto& z : w.data) z *= c.ic_rms / rms;
    return w;
}

// ============================================================================
// Dataset generation and the SNDS1 container
// ============================================================================

struct TrajectoryDataset {
    Tensor<float> data;  // [n_traj, T, H, W]
    nlohmann::json meta = nlohmann::json::object();

    std::size_t n_traj() const { return data.dim(0); }
    std::size_t frames() const { return data.dim(1); }
    std::size_t height() const { return data.dim(2); }
    std::size_t width() const { return data.dim(3); }
    std::size_t frame_size() const { return height() * width(); }
    const float* frame(std::size_t traj, std::size_t t) const {
        return data.ptr() + (traj * frames() + t) * frame_size();
    }

    /// Contiguous subset of trajectories [begin, begin+count).
    TrajectoryDataset slice(std::size_t begin, std::size_t count) const {
        if (begin + count > n_traj())
            throw std::out_of_range("dataset slice [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                                    ") exceeds " + std::to_string(n_traj()) + " trajectories");
        const std::size_t per = frames() * frame_size();
        Tensor<float> t({count, frames(), height(), width()});
        std::copy_n(data.ptr() + begin * per, count * per, t.ptr());
        return {std::move(t), meta};
    }
};

/// Integrates one trajectory; returns frames [T, N, N] or throws on blow-up.
inline Tensor<double> integrate_trajectory(const SolverConfig& c, std::mt19937_64& rng) {
    const auto forcing = forcing_spectrum(c);
    auto w = random_initial_condition(c, rng);
    for (std::size_t s = 0; s < c.burn_in_steps; ++s) w = step_cn_euler(w, c.dt, c.nu, forcing);
    const std::size_t P = c.grid * c.grid;
    Tensor<double> out({c.frames, c.grid, c.grid});
    for (std::size_t t = 0; t < c.frames; ++t) {
        if (t > 0)
            for (std::size_t s = 0; s < c.frame_interval; ++s) w = step_cn_euler(w, c.dt, c.nu, forcing);
        const auto x = irfft2(w, c.grid, c.grid);
        std::copy_n(x.ptr(), P, out.ptr() + t * P);
    }
    return out;
}

/// Trajectory i uses the stream seeded by (seed, i, attempt); a blown-up
/// trajectory is logged in meta["events"] and regenerated with attempt+1.
inline TrajectoryDataset generate_dataset(const SolverConfig& c, std::size_t n_traj) {
    if (!is_power_of_two(c.grid)) throw std::invalid_argument("generate: grid must be a power of two");
    if (c.frames == 0) throw std::invalid_argument("generate: frames must be >= 1");
    TrajectoryDataset ds{Tensor<float>({n_traj, c.frames, c.grid, c.grid}), {}};
    ds.meta = {{"solver", c}, {"solver_version", kSolverVersion}, {"n_traj", n_traj},
               {"forcing", "a*(sin(x+y)+cos(x+y)) on [0,2pi)^2"}, {"events", nlohmann::json::array()}};
    const std::size_t per = c.frames * c.grid * c.grid;
    for (std::size_t i = 0; i < n_traj; ++i) {
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt == c.max_attempts)
                throw std::runtime_error("generate: trajectory " + std::to_string(i) + " blew up " +
                                         std::to_string(attempt) + " times");
            std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                              static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(attempt)};
            std::mt19937_64 rng(seq);
            try {
                const auto traj = integrate_trajectory(c, rng);
                for (std::size_t k = 0; k < per; ++k) ds.data[i * per + k] = static_cast<float>(traj[k]);
                break;
            } catch (const std::domain_error& e) {
                ds.meta["events"].push_back({{"trajectory", i}, {"attempt", attempt}, {"error", e.what()}});
            }
        }
    }
    return ds;
}

inline constexpr char kDatasetMagic[5] = {'S', 'N', 'D', 'S', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string serialize_dataset(const TrajectoryDataset& ds) {
    io::ByteWriter w;
    w.raw(kDatasetMagic, sizeof kDatasetMagic);
    w.u32(kDatasetVersion);
    for (std::size_t d = 0; d < 4; ++d) w.u32(static_cast<std::uint32_t>(ds.data.dim(d)));
    w.f32s(ds.data.ptr(), ds.data.size());
    return w.str();
}

inline io::fs::path dataset_sidecar(const io::fs::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

/// Writes the container and its JSON sidecar (`<path>.json`).
inline void save_dataset(const io::fs::path& path, const TrajectoryDataset& ds) {
    io::write_file_atomic(path, serialize_dataset(ds));
    io::write_file_atomic(dataset_sidecar(path), ds.meta.dump(2) + "\n");
}

inline TrajectoryDataset load_dataset(const io::fs::path& path) {
    io::ByteReader r(io::read_file(path), path.string());
    char magic[5];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0)
        throw std::runtime_error(path.string() + ": not an SNDS1 dataset");
    const auto version = r.u32();
    if (version != kDatasetVersion)
        throw std::runtime_error(path.string() + ": unsupported dataset version " + std::to_string(version));
    Shape s(4);
    for (auto& d : s) d = r.u32();
    TrajectoryDataset ds{Tensor<float>(s), {}};
    r.f32s(ds.data.ptr(), ds.data.size());
    if (!r.at_end()) throw std::runtime_error(path.string() + ": trailing bytes after data");
    const auto side = dataset_sidecar(path);
    if (io::fs::exists(side)) ds.meta = nlohmann::json::parse(io::read_file(side));
    return ds;
}

}  // namespace spectranet
