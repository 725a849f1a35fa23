#pragma once

#include "spectranet/io.hpp"
#include "spectranet/model.hpp"

namespace spectranet {

// ============================================================================
// SNCK1 checkpoint container
// ============================================================================
//
//   "SNCK1" | u32 format | u32 json_len | json bytes | u32 n_params
//   per parameter: u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 data
//
// The JSON blob holds {"model": ModelConfig, "seed": u64, ...caller metadata}.

inline constexpr char kCheckpointMagic[5] = {'S', 'N', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointFormat = 1;

template <Real T>
std::string serialize_checkpoint(const Model<T>& model, nlohmann::json meta) {
    meta["model"] = model.config();
    io::ByteWriter w;
    w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointFormat);
    const std::string blob = meta.dump();
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.bytes(blob);
    w.u32(static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.bytes(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
        const auto f = p.value.template cast<float>();
        w.f32s(f.ptr(), f.size());
    }
    return w.str();
}

template <Real T>
void save_checkpoint(const io::fs::path& path, const Model<T>& model, nlohmann::json meta = nlohmann::json::object()) {
    io::write_file_atomic(path, serialize_checkpoint(model, std::move(meta)));
}

template <Real T>
struct LoadedCheckpoint {
    std::unique_ptr<Model<T>> model;
    nlohmann::json meta;
};

/// Rebuilds the model from the embedded config and overwrites every
/// parameter by name. Missing, extra or mis-shaped parameters are errors.
template <Real T>
LoadedCheckpoint<T> load_checkpoint(const io::fs::path& path) {
    io::ByteReader r(io::read_file(path), path.string());
    char magic[5];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error(path.string() + ": not an SNCK1 checkpoint");
    const auto format = r.u32();
    if (format != kCheckpointFormat)
        throw std::runtime_error(path.string() + ": unsupported checkpoint format " + std::to_string(format));
    auto meta = nlohmann::json::parse(r.bytes(r.u32()));
    const auto cfg = meta.at("model").get<ModelConfig>();
    LoadedCheckpoint<T> out{make_model<T>(cfg, meta.value("seed", std::uint64_t{0})), meta};
    auto& params = out.model->parameters();
    const auto n = r.u32();
    if (n != params.size())
        throw std::runtime_error(path.string() + ": holds " + std::to_string(n) + " parameters, model expects " +
                                 std::to_string(params.size()));
    for (std::uint32_t k = 0; k < n; ++k) {
        const std::string name = r.bytes(r.u32());
        const auto idx = params.find(name);
        if (!idx) throw std::runtime_error(path.string() + ": unknown parameter '" + name + "'");
        Shape s(r.u32());
        for (auto& d : s) d = r.u32();
        auto& dst = params[*idx].value;
        if (s != dst.shape()) throw ShapeError("load_checkpoint(" + name + ")", dst.shape(), s);
        Tensor<float> f(s);
        r.f32s(f.ptr(), f.size());
        dst = f.template cast<T>();
    }
    if (!r.at_end()) throw std::runtime_error(path.string() + ": trailing bytes after parameters");
    return out;
}

}  // namespace spectranet
