#pragma once

// JSON checkpoint: config, block gates, active mask and every parameter
// tensor (name, shape, row-major values). Doubles are written in shortest
// round-trip form, so save -> load reproduces the model bit for bit.

#include <fstream>
#include <string>

#include "json.hpp"

#include "entprune/flow/backbone.hpp"

namespace entprune {

struct Checkpoint {
    VelocityModel model;
    SubnetMask mask;
};

inline nlohmann::json config_to_json(const BackboneConfig& c) {
    return {{"data_dim", c.data_dim},   {"hidden_dim", c.hidden_dim},       {"n_blocks", c.n_blocks},
            {"n_heads", c.n_heads},     {"n_classes", c.n_classes},         {"n_tokens", c.n_tokens},
            {"time_features", c.time_features}, {"mlp_ratio", c.mlp_ratio}, {"seed", c.seed}};
}

inline BackboneConfig config_from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.data_dim = j.at("data_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.n_blocks = j.at("n_blocks").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.n_tokens = j.at("n_tokens").get<std::size_t>();
    c.time_features = j.at("time_features").get<std::size_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline nlohmann::json checkpoint_to_json(const VelocityModel& model, const SubnetMask& mask) {
    model.check_mask(mask);
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const Tensor& t = model.params().value(i);
        params.push_back({{"name", model.params().name(i)}, {"shape", t.shape()}, {"data", t.values()}});
    }
    return {{"format", "entprune-checkpoint"},
            {"version", 1},
            {"config", config_to_json(model.config())},
            {"mask", mask.bits()},
            {"block_scales", model.block_scales()},
            {"parameters", std::move(params)}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "entprune-checkpoint") throw ConfigError("not an entprune checkpoint");
    if (j.value("version", 0) != 1) throw ConfigError("unsupported checkpoint version");
    BackboneConfig cfg = config_from_json(j.at("config"));
    ParamStore store;
    for (const auto& p : j.at("parameters"))
        store.add(p.at("name").get<std::string>(),
                  Tensor(p.at("shape").get<Shape>(), p.at("data").get<std::vector<double>>()));
    VelocityModel model(cfg, std::move(store), j.at("block_scales").get<std::vector<double>>());
    SubnetMask mask = SubnetMask::from_bits(j.at("mask").get<std::string>());
    model.check_mask(mask);
    return {std::move(model), std::move(mask)};
}

inline void save_checkpoint(const std::string& path, const VelocityModel& model, const SubnetMask& mask) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write checkpoint '" + path + "'");
    os << checkpoint_to_json(model, mask).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint '" + path + "': " + e.what());
    }
    try {
        return checkpoint_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint '" + path + "': " + e.what());
    }
}

} // namespace entprune
