#pragma once

// Subcommands of the `entprune` tool. Each writes into an output directory;
// numeric CSVs depend only on the config and seeds, so reruns are byte-identical.
// manifest.json additionally records wall-clock timings.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "entprune/cli/run_config.hpp"

namespace entprune::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommandOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string run_dir;
    std::string baseline;  // "" or "oneshot"
    std::string sampler;   // "" (config), "ode", "sde", "both"
};

// All datasets of a run, regenerated deterministically from data.seed.
struct RunData {
    Dataset source;
    Dataset target;
    Dataset reference; // held-out target samples for evaluation
    FmBatch validation; // fixed target-domain validation batch
    Dataset ced_data;
};

inline RunData make_run_data(const RunConfig& c) {
    auto stream = [&](std::uint64_t k) { return std::mt19937_64(derive_seed(c.data.seed, k)); };
    RunData d;
    auto r1 = stream(1), r2 = stream(2), r3 = stream(3), r4 = stream(4);
    d.source = make_dataset(c.data.spec, c.data.n_train, Domain::source, r1);
    d.target = make_dataset(c.data.spec, c.data.n_train, Domain::target, r2);
    d.reference = make_dataset(c.data.spec, c.data.n_reference, Domain::target, r3);
    Dataset val = make_dataset(c.data.spec, c.data.n_validation, Domain::target, r4);
    d.validation = make_validation_batch(val, c.data.n_validation, r4);
    d.ced_data = c.data.ced_source == Domain::source ? d.source : d.target;
    return d;
}

inline RunConfig resolve_config(const CommandOptions& o) {
    if (o.config_path.empty()) throw ConfigError("--config is required");
    if (!fs::exists(o.config_path)) throw ConfigError("config file not found: " + o.config_path);
    YAML::Node root;
    try {
        root = YAML::LoadFile(o.config_path);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(o.config_path + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (o.seed) {
        if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
        root["seed"] = *o.seed;
    }
    return parse_run_config(root, o.config_path);
}

inline fs::path output_dir(const CommandOptions& o, const RunConfig& c) {
    fs::path p = o.out.empty() ? fs::path(c.output_dir) : fs::path(o.out);
    fs::create_directories(p);
    return p;
}

inline void write_json(const fs::path& p, const json& j) {
    auto f = io::open_output(p.string());
    f << j.dump(2) << '\n';
}

inline json seeds_json(const RunConfig& c) {
    return {{"master", c.master_seed},     {"model", c.model.seed},
            {"data", c.data.seed},         {"prune", c.prune_seed},
            {"sampler", c.sampler.sampler.seed}, {"ced_probe", c.prune.ced_probe.seed}};
}

inline std::vector<std::size_t> sample_labels(const RunConfig& c) {
    std::vector<std::size_t> labels(c.sampler.n_samples);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % c.data.spec.n_classes;
    return labels;
}

inline double mac_ratio(const BackboneConfig& cfg, const SubnetMask& mask) {
    return static_cast<double>(analytic_macs(cfg, mask).total()) /
           static_cast<double>(analytic_macs(cfg, SubnetMask::full(cfg.n_blocks)).total());
}

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline int cmd_train(const CommandOptions& o, std::ostream& log) {
    const RunConfig c = resolve_config(o);
    const fs::path out = output_dir(o, c);
    Stopwatch sw;
    const RunData data = make_run_data(c);
    VelocityModel model(c.model);
    std::mt19937_64 rng(derive_seed(c.model.seed, 11));
    const TrainTrace trace = train(model, model.full_mask(), data.source, c.train, TimeSchedule{}, rng);
    save_checkpoint((out / "checkpoint.json").string(), model, model.full_mask());
    {
        auto f = io::open_output((out / "train_trace.csv").string());
        io::write_loss_trace(f, trace.loss);
    }
    const double val = fm_loss_value(model, model.full_mask(), data.validation, TimeSchedule{});
    write_json(out / "manifest.json", {{"command", "train"},
                                       {"config", c.source_path},
                                       {"seeds", seeds_json(c)},
                                       {"steps", c.train.steps},
                                       {"params", model.parameter_count(model.full_mask())},
                                       {"final_train_loss", trace.loss.back()},
                                       {"target_validation_loss", val},
                                       {"wall_seconds", sw.seconds()}});
    log << "trained " << c.train.steps << " steps; final loss " << trace.loss.back() << "; checkpoint "
        << (out / "checkpoint.json").string() << '\n';
    return 0;
}

inline int cmd_analyze(const CommandOptions& o, std::ostream& log) {
    const RunConfig c = resolve_config(o);
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required for analyze");
    const fs::path out = output_dir(o, c);
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const RunData data = make_run_data(c);
    const CedReport rep = compute_ced(ck.model, data.ced_data, c.prune.ced_probe, TimeSchedule{});
    {
        auto f = io::open_output((out / "ced.csv").string());
        write_ced_csv(f, rep);
    }
    {
        auto f = io::open_output((out / "signed_ced_plot.csv").string());
        f << "block_index,signed_ced\n";
        f.precision(17);
        for (std::size_t i = 0; i < rep.blocks.size(); ++i) f << i << ',' << rep.blocks[i].signed_ced << '\n';
    }
    // Loss increase of each single-block drop on a fixed batch from the CED data domain.
    std::mt19937_64 vr(derive_seed(c.data.seed, 21));
    const FmBatch vb = make_validation_batch(data.ced_data, c.data.n_validation, vr);
    const auto deltas = block_drop_loss_deltas(ck.model, vb, TimeSchedule{});
    {
        auto f = io::open_output((out / "block_loss_delta.csv").string());
        f << "block_index,loss_delta\n";
        f.precision(17);
        for (std::size_t i = 0; i < deltas.size(); ++i) f << i << ',' << deltas[i] << '\n';
    }
    std::vector<double> abs_ced;
    for (const auto& b : rep.blocks) abs_ced.push_back(b.abs_ced);
    const double rho = spearman(abs_ced, deltas);
    write_json(out / "analysis.json", {{"command", "analyze"},
                                       {"checkpoint", o.checkpoint},
                                       {"seeds", seeds_json(c)},
                                       {"probe_samples", c.prune.ced_probe.n_samples()},
                                       {"ced_source", c.data.ced_source == Domain::source ? "source" : "target"},
                                       {"base_entropy", rep.base_entropy.h},
                                       {"spearman_abs_ced_vs_loss_delta", rho}});
    log.precision(6);
    log << "spearman(abs_ced, loss_delta) = " << rho << '\n';
    return 0;
}

struct MethodResult {
    std::string method;
    PruningSchedule schedule;
    VelocityModel model;
    double val_loss = 0.0;
    double energy = 0.0;
};

inline double final_energy_distance(const RunConfig& c, const VelocityModel& m, const SubnetMask& mask,
                                    const RunData& d) {
    const Tensor gen = sample(m, mask, sample_labels(c), TimeSchedule{}, c.sampler.sampler);
    return energy_distance(gen, d.reference.x);
}

inline json schedule_json(const PruningSchedule& s) {
    json stages = json::array();
    for (const auto& st : s.stages) {
        stages.push_back({{"stage", st.stage},
                          {"target_params", st.target_params},
                          {"selected_mask", st.mask.bits()},
                          {"params_after", st.params_after},
                          {"candidates", st.proxy_scores.candidates.size()},
                          {"final_train_loss", st.trace.loss.back()},
                          {"notes", st.notes}});
    }
    return stages;
}

inline void write_schedule(const fs::path& dir, const MethodResult& r) {
    fs::create_directories(dir);
    for (const auto& st : r.schedule.stages) {
        const std::string tag = "stage_" + std::to_string(st.stage);
        {
            auto f = io::open_output((dir / (tag + "_candidates.csv")).string());
            write_proxy_csv(f, st.proxy_scores);
        }
        auto f = io::open_output((dir / (tag + "_trace.csv")).string());
        io::write_loss_trace(f, st.trace.loss);
    }
    save_checkpoint((dir / "final_checkpoint.json").string(), r.model, r.schedule.final_mask());
}

inline int cmd_prune(const CommandOptions& o, std::ostream& log) {
    const RunConfig c = resolve_config(o);
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required for prune");
    if (!o.baseline.empty() && o.baseline != "oneshot") throw ConfigError("--baseline must be 'oneshot'");
    const fs::path out = output_dir(o, c);
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const RunData data = make_run_data(c);
    Stopwatch sw;
    const CedReport ced = compute_ced(ck.model, data.ced_data, c.prune.ced_probe, TimeSchedule{});
    {
        auto f = io::open_output((out / "ced.csv").string());
        write_ced_csv(f, ced);
    }

    std::vector<MethodResult> results;
    json timings;
    auto run_method = [&](const std::string& name, bool progressive) {
        Stopwatch t;
        MethodResult r{name, {}, ck.model, 0.0, 0.0};
        std::mt19937_64 rng(c.prune_seed);
        r.schedule = progressive ? run_progressive(r.model, ced, c.prune, data.target, TimeSchedule{}, rng)
                                 : run_oneshot(r.model, ced, c.prune, data.target, TimeSchedule{}, rng);
        r.val_loss = fm_loss_value(r.model, r.schedule.final_mask(), data.validation, TimeSchedule{});
        r.energy = final_energy_distance(c, r.model, r.schedule.final_mask(), data);
        write_schedule(out / name, r);
        timings[name] = t.seconds();
        results.push_back(std::move(r));
    };
    run_method("progressive", true);
    if (o.baseline == "oneshot") run_method("oneshot", false);

    {
        auto f = io::open_output((out / "comparison.csv").string());
        f << "seed,method,final_params,active_blocks,mac_ratio,val_loss,energy_distance\n";
        f.precision(17);
        for (const auto& r : results) {
            const SubnetMask& m = r.schedule.final_mask();
            f << c.master_seed << ',' << r.method << ',' << r.schedule.final_params() << ',' << m.n_active() << ','
              << mac_ratio(c.model, m) << ',' << r.val_loss << ',' << r.energy << '\n';
        }
    }
    json methods = json::object();
    for (const auto& r : results)
        methods[r.method] = {{"final_mask", r.schedule.final_mask().bits()},
                             {"final_params", r.schedule.final_params()},
                             {"full_params", r.schedule.full_params},
                             {"val_loss", r.val_loss},
                             {"energy_distance", r.energy},
                             {"stages", schedule_json(r.schedule)}};
    const bool nothing = results.front().schedule.final_mask() == ck.model.full_mask();
    timings["total"] = sw.seconds();
    write_json(out / "manifest.json",
               {{"command", "prune"},
                {"config", c.source_path},
                {"checkpoint", o.checkpoint},
                {"seeds", seeds_json(c)},
                {"target_ratio", c.prune.target_ratio},
                {"stages", c.prune.stages},
                {"total_steps", c.prune.total_steps},
                {"gamma", c.prune.gamma},
                {"order", c.prune.order == PruneOrder::lowest_ced_first ? "lowest_ced_first" : "highest_ced_first"},
                {"ced_ranking", ced.ranking},
                {"pruning", nothing ? "no pruning performed" : "pruned"},
                {"methods", methods},
                {"wall_seconds", timings}});
    for (const auto& r : results)
        log << r.method << ": mask " << r.schedule.final_mask().bits() << ", params " << r.schedule.final_params()
            << ", energy distance " << r.energy << '\n';
    if (nothing) log << "no pruning performed\n";
    return 0;
}

inline int cmd_eval(const CommandOptions& o, std::ostream& log) {
    const RunConfig c = resolve_config(o);
    std::string ckpt = o.checkpoint;
    if (ckpt.empty()) {
        if (o.run_dir.empty()) throw ConfigError("eval needs --checkpoint or --run");
        ckpt = (fs::path(o.run_dir) / "progressive" / "final_checkpoint.json").string();
    }
    const fs::path out = output_dir(o, c);
    const Checkpoint ck = load_checkpoint(ckpt);
    const RunData data = make_run_data(c);
    std::vector<SamplerKind> kinds;
    const std::string mode = o.sampler.empty() ? (c.sampler.sampler.kind == SamplerKind::ode ? "ode" : "sde") : o.sampler;
    if (mode == "ode" || mode == "both") kinds.push_back(SamplerKind::ode);
    if (mode == "sde" || mode == "both") kinds.push_back(SamplerKind::sde);
    if (kinds.empty()) throw ConfigError("--sampler must be ode, sde or both");

    const auto labels = sample_labels(c);
    const std::size_t params = ck.model.parameter_count(ck.mask);
    const double macs = mac_ratio(ck.model.config(), ck.mask);
    auto summary = io::open_output((out / "eval.csv").string());
    summary << "sampler,params,active_blocks,mac_ratio,energy_distance,per_class_mean_error,sample_entropy,n_generated\n";
    summary.precision(17);
    for (SamplerKind k : kinds) {
        SamplerConfig sc = c.sampler.sampler;
        sc.kind = k;
        const Tensor gen = sample(ck.model, ck.mask, labels, TimeSchedule{}, sc);
        const EvalReport r = evaluate(gen, labels, data.reference.x, data.reference.labels);
        const std::string name = k == SamplerKind::ode ? "ode" : "sde";
        {
            auto f = io::open_output((out / ("samples_" + name + ".csv")).string());
            io::write_samples(f, gen, labels);
        }
        summary << name << ',' << params << ',' << ck.mask.n_active() << ',' << macs << ',' << r.energy_distance << ','
                << r.per_class_mean_error << ',' << r.sample_entropy.h << ',' << r.n_generated << '\n';
        log << name << ": energy distance " << r.energy_distance << ", per-class mean error " << r.per_class_mean_error
            << ", params " << params << ", active blocks " << ck.mask.n_active() << ", MAC ratio " << macs << '\n';
    }
    return 0;
}

// Summarizes a prune run directory into report.csv (one row per method and stage).
inline int cmd_report(const CommandOptions& o, std::ostream& log) {
    if (o.run_dir.empty()) throw ConfigError("report needs --run");
    const fs::path run(o.run_dir);
    std::ifstream in(run / "manifest.json");
    if (!in) throw ConfigError("no manifest.json in run directory: " + o.run_dir);
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw ConfigError("malformed manifest.json: " + std::string(e.what()));
    }
    if (m.value("command", "") != "prune") throw ConfigError("report expects a prune run directory");
    auto f = io::open_output((run / "report.csv").string());
    f << "method,stage,target_params,selected_mask,params_after,final_train_loss\n";
    f.precision(17);
    for (const auto& [name, meth] : m.at("methods").items()) {
        for (const auto& st : meth.at("stages"))
            f << name << ',' << st.at("stage").get<std::size_t>() << ',' << st.at("target_params").get<double>() << ','
              << st.at("selected_mask").get<std::string>() << ',' << st.at("params_after").get<std::size_t>() << ','
              << st.at("final_train_loss").get<double>() << '\n';
        log << name << ": final mask " << meth.at("final_mask").get<std::string>() << ", params "
            << meth.at("final_params").get<std::size_t>() << "/" << meth.at("full_params").get<std::size_t>()
            << ", val loss " << meth.at("val_loss").get<double>() << ", energy distance "
            << meth.at("energy_distance").get<double>() << '\n';
    }
    log << "pruning: " << m.at("pruning").get<std::string>() << '\n';
    return 0;
}

// Runs one subcommand and maps failures to exit codes:
// 2 config error, 3 numeric failure, 4 precondition violation.
inline int dispatch(const std::string& command, const CommandOptions& o, std::ostream& log, std::ostream& err) {
    try {
        if (command == "train") return cmd_train(o, log);
        if (command == "analyze") return cmd_analyze(o, log);
        if (command == "prune") return cmd_prune(o, log);
        if (command == "eval") return cmd_eval(o, log);
        if (command == "report") return cmd_report(o, log);
        err << "unknown command: " << command << '\n';
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const PreconditionError& e) {
        err << "precondition violated: " << e.what() << '\n';
        return 4;
    }
}

} // namespace entprune::cli
