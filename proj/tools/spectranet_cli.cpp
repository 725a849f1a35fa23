// spectranet: generate -> train -> eval -> rollout -> lipschitz -> transfer -> bench -> oracles
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <memory>
#include <random>
#include <unistd.h>

#include "spectranet/spectranet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spectranet;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kDataRootEnv = "SPECTRANET_DATA_ROOT";

// ----------------------------------------------------------------------------
// Configuration: nested JSON addressed by dotted keys
// ----------------------------------------------------------------------------

json base_defaults() {
    json j;
    j["solver"] = SolverConfig{};
    j["data"] = {{"n_traj", 64}};
    j["model"] = ModelConfig{};
    j["train"] = TrainConfig{};
    j["eval"] = {{"split", "test"}, {"t_out", 10}, {"horizon", 100}};
    const LipschitzProtocol lp;
    j["lipschitz"] = {{"n_probes", lp.n_probes}, {"scale", lp.scale}, {"n_inputs", lp.n_inputs},
                      {"horizon", 10}, {"seed", 0}, {"split", "heldout"}};
    j["transfer"] = {{"scheme", "both"}, {"split", "test"}, {"t_out", 10}};
    const BenchConfig bc;
    j["bench"] = {{"batch_sizes", bc.batch_sizes}, {"warmup", bc.warmup_iters}, {"iters", bc.timed_iters}, {"t_out", 10}};
    return j;
}

json preset(const std::string& name) {
    if (name == "desk")
        return {{"solver.grid", 32}, {"data.n_traj", 64}, {"model.width", 8}, {"model.modes", 8},
                {"model.levels", 3}, {"model.t_in", 10}, {"train.epochs", 50}};
    if (name == "paperish")
        return {{"solver.grid", 64}, {"solver.nu", 1e-5}, {"data.n_traj", 1200}, {"model.width", 32},
                {"model.modes", 12}, {"model.levels", 3}, {"model.t_in", 10}, {"train.epochs", 500},
                {"train.n_train", 950}, {"train.n_val", 50}, {"train.n_test", 200}};
    throw std::invalid_argument("unknown preset '" + name + "' (expected desk|paperish)");
}

// Arrays are leaves.
void flatten_into(const json& j, const std::string& prefix, json& out) {
    if (j.is_object() && !j.empty()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else {
        out[prefix] = j;
    }
}

json flatten(const json& j) {
    json out = json::object();
    flatten_into(j, "", out);
    return out;
}

class Config {
public:
    Config() : cfg_(base_defaults()) { apply(preset("desk"), "preset desk"); }

    void apply(const json& flat, const std::string& source) {
        const auto known = flatten(cfg_);
        for (auto it = flat.begin(); it != flat.end(); ++it) {
            if (!known.contains(it.key())) throw std::invalid_argument(source + ": unknown config key '" + it.key() + "'");
            set(it.key(), it.value());
        }
    }

    void set(const std::string& key, const json& value) {
        json* node = &cfg_;
        std::size_t start = 0;
        for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1)
            node = &(*node)[key.substr(start, dot - start)];
        (*node)[key.substr(start)] = value;
    }

    const json& at(const std::string& section) const { return cfg_.at(section); }
    const json& raw() const { return cfg_; }

    template <typename C>
    C get(const std::string& section) const {
        try {
            return cfg_.at(section).get<C>();
        } catch (const json::exception& e) {
            throw std::invalid_argument("invalid value in config section '" + section + "': " + e.what());
        }
    }

private:
    json cfg_;
};

json parse_value(const std::string& s) {
    try {
        return json::parse(s);
    } catch (const json::exception&) {
        return s;
    }
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

/// JSON (nested or dotted keys; a run manifest contributes its resolved config)
/// or key=value lines with '#' comments.
json read_config_file(const fs::path& path) {
    const auto text = trim(io::read_file(path));
    if (!text.empty() && text.front() == '{') {
        auto j = json::parse(text);
        if (j.contains("tool_version") && j.contains("config")) j = j["config"];
        return flatten(j);
    }
    json flat = json::object();
    std::istringstream in(text);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path.string() + ":" + std::to_string(n) + ": expected key=value");
        flat[trim(line.substr(0, eq))] = parse_value(trim(line.substr(eq + 1)));
    }
    return flat;
}

// ----------------------------------------------------------------------------
// Flag plumbing: every flag is bound to a config key and only overrides when given
// ----------------------------------------------------------------------------

struct Command {
    CLI::App* app = nullptr;
    std::string config_path, preset_name = "desk", out;
    bool force = false;
    std::vector<std::function<void(Config&)>> overrides;

    Command(CLI::App& root, const std::string& name, const std::string& desc, bool with_out = true) {
        app = root.add_subcommand(name, desc);
        app->add_option("--config", config_path, "Config file (JSON with dotted or nested keys, or key=value lines)");
        app->add_option("--preset", preset_name, "Preset applied before the config file: desk|paperish")
            ->capture_default_str();
        if (with_out) {
            app->add_option("--out", out, "Output directory (written atomically)")->required();
            app->add_flag("--force", force, "Replace an existing output directory");
        }
    }

    template <typename V>
    void flag(const std::string& name, const std::string& key, const std::string& help) {
        Config defaults;
        const auto flat = flatten(defaults.raw());
        auto v = std::make_shared<V>(flat.at(key).get<V>());
        auto* opt = app->add_option(name, *v, help + " [" + key + "]")->capture_default_str();
        if constexpr (std::is_same_v<V, std::vector<std::size_t>>) opt->delimiter(',');
        overrides.push_back([opt, v, key](Config& c) {
            if (opt->count()) c.set(key, json(*v));
        });
    }

    Config resolve() const {
        Config c;
        c.apply(preset(preset_name), "preset " + preset_name);
        if (!config_path.empty()) c.apply(read_config_file(config_path), config_path);
        for (const auto& o : overrides) o(c);
        return c;
    }
};

fs::path under_data_root(const std::string& p) {
    fs::path path(p);
    if (const char* root = std::getenv(kDataRootEnv); root && *root && path.is_relative()) return fs::path(root) / path;
    return path;
}

fs::path dataset_path(const std::string& p) {
    auto path = under_data_root(p);
    if (fs::is_directory(path)) path /= "dataset.snds";
    if (!fs::exists(path)) throw std::runtime_error("missing input file '" + path.string() + "'");
    return path;
}

fs::path input_file(const std::string& p) {
    fs::path path(p);
    if (!fs::exists(path)) throw std::runtime_error("missing input file '" + path.string() + "'");
    if (fs::is_directory(path)) path /= "checkpoint.snck";
    if (!fs::exists(path)) throw std::runtime_error("missing input file '" + path.string() + "'");
    return path;
}

// ----------------------------------------------------------------------------
// Output directories: staged in a sibling temp dir, renamed into place on success
// ----------------------------------------------------------------------------

class RunDir {
public:
    RunDir(const fs::path& out, bool force) : final_(out) {
        if (fs::exists(out) && !force)
            throw std::runtime_error("output '" + out.string() + "' exists (use --force to replace it)");
        const auto parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
        fs::create_directories(parent);
        tmp_ = parent / ("." + out.filename().string() + ".tmp-" + std::to_string(::getpid()));
        fs::remove_all(tmp_);
        fs::create_directories(tmp_);
    }
    RunDir(const RunDir&) = delete;
    RunDir& operator=(const RunDir&) = delete;
    ~RunDir() {
        std::error_code ec;
        if (!committed_) fs::remove_all(tmp_, ec);
    }

    void write(const std::string& name, const std::string& contents) {
        io::write_file_atomic(tmp_ / name, contents);
        hashes_[name] = io::sha256_hex(contents);
    }

    void commit(json manifest) {
        manifest["artifacts"] = hashes_;
        io::write_file_atomic(tmp_ / "manifest.json", manifest.dump(2) + "\n");
        if (fs::exists(final_)) fs::remove_all(final_);
        fs::rename(tmp_, final_);
        committed_ = true;
    }

private:
    fs::path final_, tmp_;
    json hashes_ = json::object();
    bool committed_ = false;
};

json base_manifest(const std::string& command, const Config& c, const std::vector<std::string>& argv) {
    return {{"tool", "spectranet"}, {"tool_version", kToolVersion}, {"command", command},
            {"argv", argv},         {"config", c.raw()},          {"inputs", json::object()}};
}

void record_input(json& manifest, const std::string& role, const fs::path& p) {
    manifest["inputs"][role] = {{"path", p.string()}, {"sha256", io::sha256_file(p)}};
}

// ----------------------------------------------------------------------------
// Shared helpers
// ----------------------------------------------------------------------------

struct Split {
    std::size_t n_train, n_val, n_test;
};

Split split_of(const TrainConfig& t) { return {t.n_train, t.n_val, t.n_test}; }

TrajectoryDataset select_split(const TrajectoryDataset& ds, const Split& s, const std::string& which) {
    if (s.n_train + s.n_val + s.n_test > ds.n_traj())
        throw std::invalid_argument("split " + std::to_string(s.n_train) + "/" + std::to_string(s.n_val) + "/" +
                                    std::to_string(s.n_test) + " needs more than the " + std::to_string(ds.n_traj()) +
                                    " trajectories in the dataset");
    if (which == "train") return ds.slice(0, s.n_train);
    if (which == "val") return ds.slice(s.n_train, s.n_val);
    if (which == "test") return ds.slice(s.n_train + s.n_val, s.n_test);
    if (which == "heldout") return ds.slice(s.n_train, s.n_val + s.n_test);
    if (which == "all") return ds;
    throw std::invalid_argument("unknown split '" + which + "' (expected train|val|test|heldout|all)");
}

/// The split a checkpoint was trained with, falling back to the resolved config.
Split checkpoint_split(const json& meta, const Config& c) {
    if (meta.contains("train")) return split_of(meta["train"].get<TrainConfig>());
    return split_of(c.get<TrainConfig>("train"));
}

std::string model_name(const fs::path& ckpt, const Model<float>& m) {
    const std::string arch = architecture_name(m.config().arch);
    if (ckpt.filename() == "checkpoint.snck" && ckpt.has_parent_path() && !ckpt.parent_path().filename().empty())
        return ckpt.parent_path().filename().string();
    return arch + "-" + ckpt.stem().string();
}

void require_frames(const TrajectoryDataset& ds, std::size_t need, const std::string& what) {
    if (ds.frames() < need)
        throw std::invalid_argument(what + " needs " + std::to_string(need) + " frames per trajectory, dataset has " +
                                    std::to_string(ds.frames()));
    if (ds.n_traj() == 0) throw std::invalid_argument(what + ": selected split is empty");
}

// ----------------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------------

int cmd_generate(const Command& cmd, const std::vector<std::string>& argv) {
    const auto c = cmd.resolve();
    const auto solver = c.get<SolverConfig>("solver");
    const auto n_traj = c.at("data").at("n_traj").get<std::size_t>();
    const auto out = under_data_root(cmd.out);
    RunDir dir(out, cmd.force);
    std::cerr << "generating " << n_traj << " trajectories at " << solver.grid << "^2, " << solver.frames << " frames\n";
    const auto ds = generate_dataset(solver, n_traj);
    dir.write("dataset.snds", serialize_dataset(ds));
    dir.write("dataset.snds.json", ds.meta.dump(2) + "\n");
    auto m = base_manifest("generate", c, argv);
    m["seed"] = solver.seed;
    m["summary"] = {{"n_traj", n_traj}, {"events", ds.meta["events"].size()}};
    dir.commit(m);
    std::cout << out.string() << "\n";
    return 0;
}

int cmd_train(const Command& cmd, const std::string& data, const std::string& init,
              const std::vector<std::string>& argv) {
    auto c = cmd.resolve();
    const auto data_path = dataset_path(data);
    const auto ds = load_dataset(data_path);
    auto mc = c.get<ModelConfig>("model");
    mc.grid_h = ds.height();
    mc.grid_w = ds.width();
    if (mc.arch == Architecture::fno) mc.residual_target = false;
    c.set("model", mc);
    const auto tc = c.get<TrainConfig>("train");
    const auto split = split_of(tc);
    const auto train = select_split(ds, split, "train"), val = select_split(ds, split, "val"),
               test = select_split(ds, split, "test");
    require_frames(test, mc.t_in + tc.t_out, "test evaluation");

    RunDir dir(cmd.out, cmd.force);
    auto model = make_model<float>(mc, tc.seed);
    if (init == "zero") zero_parameters(*model);
    else if (init != "random") throw std::invalid_argument("--init must be random|zero");
    const auto count = count_parameters(*model);
    std::cerr << architecture_name(mc.arch) << ": " << count.real << " real parameters, " << train.n_traj()
              << " train / " << val.n_traj() << " val / " << test.n_traj() << " test trajectories\n";

    const auto report = train_epochs(*model, train, val, tc, [](const EpochRecord& r, bool best) {
        std::cerr << "epoch " << r.epoch << " loss " << io::fmt(r.train_loss) << " val " << io::fmt(r.val_l2)
                  << (best ? " *" : "") << "\n";
    });
    const auto ev = evaluate_model(*model, test, tc.t_out);

    std::string results = "trajectory,l2,persistence_l2\n";
    for (std::size_t i = 0; i < ev.per_traj.size(); ++i)
        results += std::to_string(split.n_train + split.n_val + i) + "," + io::fmt(ev.per_traj[i]) + "," +
                   io::fmt(ev.persistence_per_traj[i]) + "\n";
    const json ckpt_meta = {{"seed", tc.seed}, {"train", tc}, {"best_epoch", report.best_epoch}, {"init", init}};
    dir.write("config.json", c.raw().dump(2) + "\n");
    dir.write("metrics.csv", metrics_csv(report));
    dir.write("checkpoint.snck", serialize_checkpoint(*model, ckpt_meta));
    dir.write("test_results.csv", results);
    auto m = base_manifest("train", c, argv);
    record_input(m, "data", data_path);
    m["seed"] = tc.seed;
    m["init"] = init;
    m["summary"] = {{"params_real", count.real},
                    {"params_complex_entries", count.complex_entries},
                    {"best_epoch", report.best_epoch},
                    {"best_val_l2", report.best_val_l2},
                    {"optimizer_steps", report.optimizer_steps},
                    {"skipped_steps", report.skipped_steps},
                    {"test_l2_mean", ev.l2.mean},
                    {"test_l2_std", ev.l2.std},
                    {"persistence_l2_mean", ev.persistence.mean}};
    dir.commit(m);
    std::cout << "test L2 " << io::fmt(ev.l2.mean) << " (persistence " << io::fmt(ev.persistence.mean)
              << "), best epoch " << report.best_epoch << "\n";
    return 0;
}

struct Loaded {
    fs::path ckpt_path, data_path;
    LoadedCheckpoint<float> ckpt;
    TrajectoryDataset ds;
};

Loaded load_inputs(const std::string& ckpt, const std::string& data) {
    Loaded l;
    l.ckpt_path = input_file(ckpt);
    l.data_path = dataset_path(data);
    l.ckpt = load_checkpoint<float>(l.ckpt_path);
    l.ds = load_dataset(l.data_path);
    return l;
}

json inputs_manifest(const std::string& command, const Config& c, const std::vector<std::string>& argv,
                     const Loaded& l) {
    auto m = base_manifest(command, c, argv);
    record_input(m, "checkpoint", l.ckpt_path);
    record_input(m, "data", l.data_path);
    return m;
}

int cmd_eval(const Command& cmd, const std::string& ckpt, const std::string& data,
             const std::vector<std::string>& argv) {
    const auto c = cmd.resolve();
    const auto l = load_inputs(ckpt, data);
    const auto& e = c.at("eval");
    const auto t_out = e.at("t_out").get<std::size_t>();
    const auto which = e.at("split").get<std::string>();
    const auto ds = select_split(l.ds, checkpoint_split(l.ckpt.meta, c), which);
    const auto& model = *l.ckpt.model;
    require_frames(ds, model.t_in() + t_out, "eval");
    RunDir dir(cmd.out, cmd.force);
    const auto ev = evaluate_model(model, ds, t_out);
    std::string csv = "index,l2,persistence_l2\n";
    for (std::size_t i = 0; i < ev.per_traj.size(); ++i)
        csv += std::to_string(i) + "," + io::fmt(ev.per_traj[i]) + "," + io::fmt(ev.persistence_per_traj[i]) + "\n";
    dir.write("eval.csv", csv);
    auto m = inputs_manifest("eval", c, argv, l);
    m["summary"] = {{"split", which},           {"n_traj", ds.n_traj()},
                    {"l2_mean", ev.l2.mean},     {"l2_std", ev.l2.std},
                    {"persistence_l2_mean", ev.persistence.mean}, {"persistence_l2_std", ev.persistence.std}};
    dir.commit(m);
    std::cout << "L2 " << io::fmt(ev.l2.mean) << " persistence " << io::fmt(ev.persistence.mean) << "\n";
    return 0;
}

int cmd_rollout(const Command& cmd, const std::string& ckpt, const std::string& data,
                const std::vector<std::string>& argv) {
    const auto c = cmd.resolve();
    const auto l = load_inputs(ckpt, data);
    const auto& e = c.at("eval");
    const auto horizon = e.at("horizon").get<std::size_t>();
    const auto which = e.at("split").get<std::string>();
    const auto ds = select_split(l.ds, checkpoint_split(l.ckpt.meta, c), which);
    const auto& model = *l.ckpt.model;
    require_frames(ds, model.t_in(), "rollout");
    RunDir dir(cmd.out, cmd.force);
    const auto r = long_horizon_rollout(model_stepper(model), frames_of<float>(ds, 0, model.t_in()), horizon);
    std::string csv = "step,mean_energy,log10_mean_energy,blowup_fraction\n";
    for (std::size_t t = 0; t < horizon; ++t)
        csv += std::to_string(t + 1) + "," + io::fmt(r.mean_energy[t]) + "," + io::fmt(r.log10_mean_energy[t]) + "," +
               io::fmt(r.blowup_fraction[t]) + "\n";
    dir.write("energy.csv", csv);
    auto m = inputs_manifest("rollout", c, argv, l);
    double init = 0;
    for (double v : r.initial_energy) init += v / double(r.initial_energy.size());
    m["summary"] = {{"split", which},
                    {"horizon", horizon},
                    {"final_blowup_fraction", r.blowup_fraction.back()},
                    {"initial_mean_energy", init},
                    {"max_mean_energy", *std::max_element(r.mean_energy.begin(), r.mean_energy.end())},
                    {"final_mean_energy_ratio", r.final_mean_energy_ratio},
                    {"diverged_at", r.diverged_at}};
    dir.commit(m);
    std::cout << "blow-up fraction at T=" << horizon << ": " << io::fmt(r.blowup_fraction.back()) << "\n";
    return 0;
}

int cmd_lipschitz(const Command& cmd, const std::string& ckpt, const std::string& data,
                  const std::vector<std::string>& argv) {
    const auto c = cmd.resolve();
    const auto l = load_inputs(ckpt, data);
    const auto& p = c.at("lipschitz");
    const auto which = p.at("split").get<std::string>();
    const auto horizon = p.at("horizon").get<std::size_t>();
    const auto ds = select_split(l.ds, checkpoint_split(l.ckpt.meta, c), which);
    const auto& model = *l.ckpt.model;
    require_frames(ds, model.t_in() + 1, "lipschitz");
    RunDir dir(cmd.out, cmd.force);
    const auto f = model_stepper(model);
    const auto inputs = sample_windows<float>(ds, model.t_in(), p.at("n_inputs").get<std::size_t>());
    std::cerr << "lipschitz: " << inputs.dim(0) << " inputs x " << p.at("n_probes") << " probes, T=" << horizon << "\n";
    const auto lip = empirical_lipschitz(f, inputs, p.at("n_probes").get<std::size_t>(), p.at("scale").get<double>(),
                                         horizon, p.at("seed").get<std::uint64_t>());
    const auto delta = residual_delta(f, inputs, horizon);
    const std::size_t t_out = std::min<std::size_t>(horizon, ds.frames() - model.t_in());
    const auto bound = running_bound(f, ds, model.t_in(), t_out, model.config().modes);

    std::string csv = "input,sup_ratio_t1,sup_ratio_tout\n";
    for (std::size_t i = 0; i < lip.sup_t1.size(); ++i)
        csv += std::to_string(i) + "," + io::fmt(lip.sup_t1[i]) + "," + io::fmt(lip.sup_tout[i]) + "\n";
    dir.write("lipschitz.csv", csv);
    json report = {{"lipschitz",
                    {{"n_inputs", lip.n_inputs}, {"n_probes", lip.n_probes}, {"scale", lip.scale},
                     {"horizon", lip.horizon}, {"mean_t1", lip.mean_t1}, {"p95_t1", lip.p95_t1},
                     {"mean_tout", lip.mean_tout}, {"p95_tout", lip.p95_tout}}},
                   {"delta",
                    {{"mean_ratio", delta.mean_ratio}, {"sup_ratio", delta.sup_ratio}, {"mean_norm", delta.mean_norm},
                     {"sup_norm", delta.sup_norm}, {"drift_violations", delta.drift_violations},
                     {"samples", delta.samples}}},
                   {"running_bound",
                    {{"t_out", t_out}, {"fraction_satisfied", bound.fraction_satisfied}, {"floor", bound.floor},
                     {"delta", bound.delta}}}};
    dir.write("lipschitz.json", report.dump(2) + "\n");
    auto m = inputs_manifest("lipschitz", c, argv, l);
    m["seed"] = p.at("seed");
    m["summary"] = report["lipschitz"];
    dir.commit(m);
    std::cout << "L_hat mean " << io::fmt(lip.mean_t1) << " p95 " << io::fmt(lip.p95_t1) << "; delta/|w| mean "
              << io::fmt(delta.mean_ratio) << "; running bound holds for " << io::fmt(bound.fraction_satisfied) << "\n";
    return 0;
}

int cmd_transfer(const Command& cmd, const std::string& ckpt, const std::string& data,
                 const std::vector<std::string>& argv) {
    const auto c = cmd.resolve();
    const auto l = load_inputs(ckpt, data);
    const auto& p = c.at("transfer");
    const auto which = p.at("split").get<std::string>();
    const auto t_out = p.at("t_out").get<std::size_t>();
    const auto scheme = p.at("scheme").get<std::string>();
    std::vector<Resample> schemes;
    if (scheme == "both") schemes = {Resample::bilinear, Resample::spectral_zeropad};
    else schemes = {parse_resample(scheme)};
    // the high-resolution data usually has its own split; take it whole unless asked otherwise
    const auto ds = which == "all" ? l.ds : select_split(l.ds, checkpoint_split(l.ckpt.meta, c), which);
    const auto& model = *l.ckpt.model;
    require_frames(ds, model.t_in() + t_out, "transfer");
    RunDir dir(cmd.out, cmd.force);
    std::string csv = "scheme,native_grid,target_grid,native_l2,transfer_l2,ratio\n";
    json rows = json::array();
    for (auto s : schemes) {
        const auto r = resolution_transfer(model_stepper(model), ds.data, model.t_in(), t_out, s);
        csv += r.scheme + "," + std::to_string(r.native_grid) + "," + std::to_string(r.target_grid) + "," +
               io::fmt(r.native_l2) + "," + io::fmt(r.transfer_l2) + "," + io::fmt(r.ratio) + "\n";
        rows.push_back({{"scheme", r.scheme}, {"native_l2", r.native_l2}, {"transfer_l2", r.transfer_l2}, {"ratio", r.ratio}});
        std::cout << r.scheme << ": " << r.native_grid << " -> " << r.target_grid << " ratio " << io::fmt(r.ratio) << "\n";
    }
    dir.write("transfer.csv", csv);
    auto m = inputs_manifest("transfer", c, argv, l);
    m["summary"] = rows;
    dir.commit(m);
    return 0;
}

int cmd_bench(const Command& cmd, const std::vector<std::string>& ckpts, const std::vector<std::string>& argv) {
    const auto c = cmd.resolve();
    const auto& p = c.at("bench");
    BenchConfig bc;
    bc.batch_sizes = p.at("batch_sizes").get<std::vector<std::size_t>>();
    bc.warmup_iters = p.at("warmup").get<std::size_t>();
    bc.timed_iters = p.at("iters").get<std::size_t>();
    const auto t_out = p.at("t_out").get<std::size_t>();
    RunDir dir(cmd.out, cmd.force);
    auto m = base_manifest("bench", c, argv);
    std::vector<CsvSource> sources;
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
        const auto path = input_file(ckpts[i]);
        record_input(m, "checkpoint" + std::to_string(i), path);
        const auto loaded = load_checkpoint<float>(path);
        const auto& model = *loaded.model;
        const auto name = model_name(path, model);
        const auto& mc = model.config();
        WorkloadFactory work = [&model, &mc, t_out](std::size_t batch) {
            Rng rng(batch);
            std::normal_distribution<float> g;
            auto window = std::make_shared<Tensor<float>>(Shape{batch, mc.grid_h, mc.grid_w, mc.t_in});
            for (auto& v : window->data()) v = g(rng);
            return std::function<void()>([&model, window, t_out] { (void)rollout(model, *window, t_out); });
        };
        std::cerr << "timing " << name << "\n";
        const auto csv = timing_csv(time_model(name, count_parameters(model).real, work, bc));
        const auto file = "timing_" + name + ".csv";
        dir.write(file, csv);
        sources.push_back({file, csv});
    }
    const auto merged = aggregate(sources);
    dir.write("timing.csv", merged);
    dir.commit(m);
    std::cout << merged;
    return 0;
}

int cmd_oracles(bool fast, const std::string& out, const std::vector<std::string>& argv) {
    const auto results = oracles::run_suite(!fast);
    bool ok = true;
    json rows = json::array();
    for (const auto& r : results) {
        ok = ok && r.passed;
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " = " << io::fmt(r.value) << " (tol "
                  << io::fmt(r.tolerance) << ")\n";
        rows.push_back({{"name", r.name}, {"passed", r.passed}, {"value", r.value}, {"tolerance", r.tolerance}});
    }
    if (!out.empty()) {
        RunDir dir(out, true);
        dir.write("oracles.json", rows.dump(2) + "\n");
        Config c;
        dir.commit(base_manifest("oracles", c, argv));
    }
    std::cout << (ok ? "all oracles passed" : "oracle failures") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SpectraNet PDE surrogate pipeline. Dataset paths resolve under $" + std::string(kDataRootEnv) +
                 " when set."};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    const std::vector<std::string> args(argv, argv + argc);

    Command gen(app, "generate", "Simulate forced 2-D Navier-Stokes trajectories into <out>/dataset.snds");
    gen.flag<double>("--nu", "solver.nu", "Viscosity");
    gen.flag<std::size_t>("--grid", "solver.grid", "Grid size N (power of two)");
    gen.flag<std::size_t>("--ntraj", "data.n_traj", "Number of trajectories");
    gen.flag<std::size_t>("--frames", "solver.frames", "Stored frames per trajectory");
    gen.flag<std::uint64_t>("--seed", "solver.seed", "Dataset seed");
    gen.flag<double>("--dt", "solver.dt", "Solver time step");
    gen.flag<std::size_t>("--frame-interval", "solver.frame_interval", "Solver steps between stored frames");

    Command train(app, "train", "Train a model; writes config, metrics, checkpoint, test results and manifest");
    std::string train_data, init = "random";
    train.app->add_option("--data", train_data, "Dataset file or generate output directory")->required();
    train.flag<std::uint64_t>("--seed", "train.seed", "Initialization and shuffling seed");
    train.flag<std::string>("--arch", "model.arch", "spectranet|fno");
    train.flag<std::size_t>("--width", "model.width", "Base width w");
    train.flag<std::size_t>("--modes", "model.modes", "Fourier modes M");
    train.flag<std::size_t>("--levels", "model.levels", "Encoder levels L");
    train.flag<std::size_t>("--t-in", "model.t_in", "Input window length");
    train.flag<std::size_t>("--epochs", "train.epochs", "Epochs");
    train.flag<std::size_t>("--batch-size", "train.batch_size", "Batch size");
    train.flag<double>("--lr", "train.peak_lr", "Peak one-cycle learning rate");
    train.flag<double>("--lambda", "train.lambda_sg", "Two-step consistency weight");
    train.flag<std::size_t>("--threads", "train.threads", "Worker threads per batch");
    train.app->add_option("--init", init, "Initial weights: random|zero")->group("")->capture_default_str();

    auto add_inputs = [](Command& c, std::string& ckpt, std::string& data) {
        c.app->add_option("--checkpoint", ckpt, "Checkpoint file or train run directory")->required();
        c.app->add_option("--data", data, "Dataset file or generate output directory")->required();
    };

    Command eval(app, "eval", "Joint trajectory L2 of free rollouts against the persistence baseline");
    std::string eval_ckpt, eval_data;
    add_inputs(eval, eval_ckpt, eval_data);
    eval.flag<std::string>("--split", "eval.split", "train|val|test|heldout|all");
    eval.flag<std::size_t>("--t-out", "eval.t_out", "Rollout length");

    Command roll(app, "rollout", "Long free rollout with energy and blow-up tracking");
    roll.app->alias("longhorizon");
    std::string roll_ckpt, roll_data;
    add_inputs(roll, roll_ckpt, roll_data);
    roll.flag<std::string>("--split", "eval.split", "train|val|test|heldout|all");
    roll.flag<std::size_t>("--horizon", "eval.horizon", "Rollout steps");

    Command lip(app, "lipschitz", "Empirical Lipschitz constant, residual size and running bound");
    std::string lip_ckpt, lip_data;
    add_inputs(lip, lip_ckpt, lip_data);
    lip.flag<std::size_t>("--probes", "lipschitz.n_probes", "Perturbations per input");
    lip.flag<double>("--scale", "lipschitz.scale", "Perturbation standard deviation");
    lip.flag<std::size_t>("--inputs", "lipschitz.n_inputs", "Number of input windows");
    lip.flag<std::size_t>("--horizon", "lipschitz.horizon", "Rollout steps T");
    lip.flag<std::uint64_t>("--seed", "lipschitz.seed", "Perturbation seed");
    lip.flag<std::string>("--split", "lipschitz.split", "train|val|test|heldout|all");

    Command xfer(app, "transfer", "Zero-shot transfer to a 2x finer grid");
    std::string xfer_ckpt, xfer_data;
    add_inputs(xfer, xfer_ckpt, xfer_data);
    xfer.flag<std::string>("--scheme", "transfer.scheme", "bilinear|spectral_zeropad|both");
    xfer.flag<std::string>("--split", "transfer.split", "train|val|test|heldout|all");
    xfer.flag<std::size_t>("--t-out", "transfer.t_out", "Rollout length");

    Command bench(app, "bench", "Rollout latency per batch size; writes per-model and merged timing CSVs");
    std::vector<std::string> bench_ckpts;
    bench.app->add_option("--checkpoint", bench_ckpts, "Checkpoint file(s) or train run directories")->required();
    bench.flag<std::vector<std::size_t>>("--batch-sizes", "bench.batch_sizes", "Comma-separated batch sizes");
    bench.flag<std::size_t>("--iters", "bench.iters", "Timed iterations");
    bench.flag<std::size_t>("--warmup", "bench.warmup", "Warmup iterations");
    bench.flag<std::size_t>("--t-out", "bench.t_out", "Rollout steps per iteration");

    auto* orc = app.add_subcommand("oracles", "Built-in FFT, gradient, lemma and solver oracles");
    bool fast = false;
    std::string orc_out;
    orc->add_flag("--fast", fast, "Skip the full-model gradient check");
    orc->add_option("--out", orc_out, "Optional output directory for oracles.json");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen.app) return cmd_generate(gen, args);
        if (*train.app) return cmd_train(train, train_data, init, args);
        if (*eval.app) return cmd_eval(eval, eval_ckpt, eval_data, args);
        if (*roll.app) return cmd_rollout(roll, roll_ckpt, roll_data, args);
        if (*lip.app) return cmd_lipschitz(lip, lip_ckpt, lip_data, args);
        if (*xfer.app) return cmd_transfer(xfer, xfer_ckpt, xfer_data, args);
        if (*bench.app) return cmd_bench(bench, bench_ckpts, args);
        if (*orc) return cmd_oracles(fast, orc_out, args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
