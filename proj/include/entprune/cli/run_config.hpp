#pragma once

// RunConfig: the strict YAML document driving the command-line harness.
// Unknown keys and ill-typed values are rejected with file:line:column.
// Seeds not given explicitly derive from the master seed.

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include "entprune/entprune.hpp"

namespace entprune::cli {

struct DataConfig {
    DataSpec spec;
    std::size_t n_train = 4096;
    std::size_t n_reference = 1024;
    std::size_t n_validation = 2048;
    Domain ced_source = Domain::source;
    std::uint64_t seed = 0;
};

struct SamplerSection {
    SamplerConfig sampler;
    std::size_t n_samples = 1024;
};

struct RunConfig {
    std::uint64_t master_seed = 0;
    BackboneConfig model;
    DataConfig data;
    TrainOptions train;
    PruneConfig prune;
    std::uint64_t prune_seed = 0;
    SamplerSection sampler;
    std::string output_dir = "runs/default";
    std::string source_path;
};

// SplitMix64 finalizer, used to derive per-purpose seeds from the master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace seed_tag {
inline constexpr std::uint64_t model = 1, data = 2, prune = 3, sampler = 4, probe = 5;
}

namespace detail {

class Reader {
  public:
    explicit Reader(std::string file) : file_(std::move(file)) {}

    [[noreturn]] void fail(const YAML::Mark& m, const std::string& msg) const {
        throw ConfigError(file_ + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1) + ": " + msg);
    }

    void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) const {
        if (!node.IsMap()) fail(node.Mark(), "section '" + section + "' must be a mapping");
        for (auto it = node.begin(); it != node.end(); ++it) {
            const auto key = it->first.as<std::string>();
            if (!allowed.contains(key)) fail(it->first.Mark(), "unknown key '" + key + "' in section '" + section + "'");
        }
    }

    template <class T>
    void get(const YAML::Node& node, const char* key, T& out) const {
        const YAML::Node v = node[key];
        if (!v) return;
        try {
            if constexpr (std::is_unsigned_v<T>) {
                const long long x = v.as<long long>();
                if (x < 0) fail(v.Mark(), std::string("'") + key + "' must be nonnegative");
                out = static_cast<T>(x);
            } else {
                out = v.as<T>();
            }
        } catch (const YAML::BadConversion&) {
            fail(v.Mark(), std::string("bad value for '") + key + "'");
        }
    }

    template <class F>
    void validate(const YAML::Node& at, F&& f) const {
        try {
            f();
        } catch (const PreconditionError& e) {
            fail(at.Mark(), e.what());
        }
    }

  private:
    std::string file_;
};

} // namespace detail

inline RunConfig parse_run_config(const YAML::Node& root, const std::string& file = "<config>") {
    detail::Reader r(file);
    RunConfig c;
    c.source_path = file;
    if (!root || root.IsNull()) return c;
    r.check_keys(root, "<root>", {"seed", "model", "data", "train", "prune", "sampler", "output_dir"});
    r.get(root, "seed", c.master_seed);
    r.get(root, "output_dir", c.output_dir);

    c.model.seed = derive_seed(c.master_seed, seed_tag::model);
    c.data.seed = derive_seed(c.master_seed, seed_tag::data);
    c.prune_seed = derive_seed(c.master_seed, seed_tag::prune);
    c.sampler.sampler.seed = derive_seed(c.master_seed, seed_tag::sampler);
    c.prune.ced_probe.seed = derive_seed(c.master_seed, seed_tag::probe);

    if (const auto m = root["model"]) {
        r.check_keys(m, "model", {"data_dim", "hidden_dim", "n_blocks", "n_heads", "n_classes", "n_tokens",
                                  "time_features", "mlp_ratio", "seed"});
        r.get(m, "data_dim", c.model.data_dim);
        r.get(m, "hidden_dim", c.model.hidden_dim);
        r.get(m, "n_blocks", c.model.n_blocks);
        r.get(m, "n_heads", c.model.n_heads);
        r.get(m, "n_classes", c.model.n_classes);
        r.get(m, "n_tokens", c.model.n_tokens);
        r.get(m, "time_features", c.model.time_features);
        r.get(m, "mlp_ratio", c.model.mlp_ratio);
        r.get(m, "seed", c.model.seed);
        r.validate(m, [&] { c.model.validate(); });
        if (c.model.data_dim != 2) r.fail(m["data_dim"] ? m["data_dim"].Mark() : m.Mark(), "toy datasets are 2-D; data_dim must be 2");
    }
    if (const auto d = root["data"]) {
        r.check_keys(d, "data", {"kind", "n_classes", "n_train", "n_reference", "n_validation", "radius", "component_std",
                                 "target_rotation", "target_shift_x", "target_shift_y", "ced_source", "seed"});
        std::string kind = to_string(c.data.spec.kind);
        r.get(d, "kind", kind);
        r.validate(d["kind"] ? d["kind"] : d, [&] { c.data.spec.kind = parse_dataset_kind(kind); });
        r.get(d, "n_classes", c.data.spec.n_classes);
        r.get(d, "n_train", c.data.n_train);
        r.get(d, "n_reference", c.data.n_reference);
        r.get(d, "n_validation", c.data.n_validation);
        r.get(d, "radius", c.data.spec.radius);
        r.get(d, "component_std", c.data.spec.component_std);
        r.get(d, "target_rotation", c.data.spec.target_rotation);
        r.get(d, "target_shift_x", c.data.spec.target_shift_x);
        r.get(d, "target_shift_y", c.data.spec.target_shift_y);
        std::string src = "source";
        r.get(d, "ced_source", src);
        if (src == "source")
            c.data.ced_source = Domain::source;
        else if (src == "target")
            c.data.ced_source = Domain::target;
        else
            r.fail(d["ced_source"].Mark(), "ced_source must be 'source' or 'target'");
        r.get(d, "seed", c.data.seed);
        if (c.data.n_train == 0 || c.data.n_reference == 0 || c.data.n_validation == 0)
            r.fail(d.Mark(), "dataset sizes must be positive");
    }
    if (c.data.spec.n_classes > c.model.n_classes)
        r.fail(root["data"] ? root["data"].Mark() : root.Mark(), "data.n_classes exceeds model.n_classes");
    if (const auto t = root["train"]) {
        r.check_keys(t, "train", {"steps", "lr", "batch", "momentum", "clip_norm"});
        r.get(t, "steps", c.train.steps);
        r.get(t, "lr", c.train.lr);
        r.get(t, "batch", c.train.batch);
        r.get(t, "momentum", c.train.momentum);
        r.get(t, "clip_norm", c.train.clip_norm);
        if (c.train.steps == 0) r.fail(t["steps"] ? t["steps"].Mark() : t.Mark(), "train.steps must be >= 1");
        if (!(c.train.lr > 0.0)) r.fail(t.Mark(), "train.lr must be positive");
        if (c.train.batch == 0) r.fail(t.Mark(), "train.batch must be positive");
    }
    c.prune.train = c.train;
    if (const auto p = root["prune"]) {
        r.check_keys(p, "prune", {"target_ratio", "stages", "total_steps", "gamma", "candidate_width", "order",
                                  "ntk_probe", "zico_batches", "zico_batch", "probe_points", "probe_t_grid",
                                  "entropy_mode", "lr", "batch", "seed"});
        r.get(p, "target_ratio", c.prune.target_ratio);
        r.get(p, "stages", c.prune.stages);
        r.get(p, "total_steps", c.prune.total_steps);
        r.get(p, "gamma", c.prune.gamma);
        r.get(p, "candidate_width", c.prune.candidate_width);
        std::string order = "lowest_ced_first";
        r.get(p, "order", order);
        if (order == "lowest_ced_first")
            c.prune.order = PruneOrder::lowest_ced_first;
        else if (order == "highest_ced_first")
            c.prune.order = PruneOrder::highest_ced_first;
        else
            r.fail(p["order"].Mark(), "order must be 'lowest_ced_first' or 'highest_ced_first'");
        r.get(p, "ntk_probe", c.prune.ntk_probe);
        r.get(p, "zico_batches", c.prune.zico_batches);
        r.get(p, "zico_batch", c.prune.zico_batch);
        r.get(p, "probe_points", c.prune.ced_probe.n_points);
        r.get(p, "probe_t_grid", c.prune.ced_probe.t_grid);
        std::string mode = "scalar";
        r.get(p, "entropy_mode", mode);
        if (mode == "scalar")
            c.prune.ced_probe.mode = EntropyMode::scalar;
        else if (mode == "per_dimension")
            c.prune.ced_probe.mode = EntropyMode::per_dimension;
        else
            r.fail(p["entropy_mode"].Mark(), "entropy_mode must be 'scalar' or 'per_dimension'");
        r.get(p, "lr", c.prune.train.lr);
        r.get(p, "batch", c.prune.train.batch);
        r.get(p, "seed", c.prune_seed);
        r.validate(p["total_steps"] ? p["total_steps"] : p, [&] { c.prune.validate(); });
    }
    c.prune.ced_probe.data_source = c.data.ced_source;
    if (const auto s = root["sampler"]) {
        r.check_keys(s, "sampler", {"kind", "steps", "sde_noise_scale", "n_samples", "seed"});
        std::string kind = "ode";
        r.get(s, "kind", kind);
        if (kind == "ode")
            c.sampler.sampler.kind = SamplerKind::ode;
        else if (kind == "sde")
            c.sampler.sampler.kind = SamplerKind::sde;
        else
            r.fail(s["kind"].Mark(), "sampler.kind must be 'ode' or 'sde'");
        r.get(s, "steps", c.sampler.sampler.steps);
        r.get(s, "sde_noise_scale", c.sampler.sampler.sde_noise_scale);
        r.get(s, "n_samples", c.sampler.n_samples);
        r.get(s, "seed", c.sampler.sampler.seed);
        r.validate(s, [&] { c.sampler.sampler.validate(); });
        if (c.sampler.n_samples == 0) r.fail(s.Mark(), "sampler.n_samples must be positive");
    }
    return c;
}

inline RunConfig parse_run_config_string(const std::string& text, const std::string& file = "<string>") {
    try {
        return parse_run_config(YAML::Load(text), file);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(file + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                          ": " + e.msg);
    }
}

inline RunConfig load_run_config(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
    try {
        return parse_run_config(YAML::LoadFile(path), path);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(path + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                          ": " + e.msg);
    } catch (const YAML::BadFile&) {
        throw ConfigError("cannot read config file: " + path);
    }
}

} // namespace entprune::cli
