// entprune: train, analyze, prune, eval, report.

#include <iostream>

#include "CLI11.hpp"

#include "entprune/cli/commands.hpp"

int main(int argc, char** argv) {
    using entprune::cli::CommandOptions;
    CLI::App app{"Entropy-guided progressive block pruning of flow-matching models"};
    app.require_subcommand(1);

    CommandOptions o;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "run configuration (YAML)")->required();
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--out", o.out, "output directory (default: output_dir from the config)");
    };
    auto* train = app.add_subcommand("train", "pretrain the full model on source data");
    add_common(train);
    auto* analyze = app.add_subcommand("analyze", "per-block CED report and signed-CED plot data");
    add_common(analyze);
    analyze->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
    auto* prune = app.add_subcommand("prune", "progressive pruning (optionally with a one-shot baseline)");
    add_common(prune);
    prune->add_option("--checkpoint", o.checkpoint, "pretrained checkpoint")->required();
    prune->add_option("--baseline", o.baseline, "also run a baseline")->check(CLI::IsMember({"oneshot"}));
    auto* eval = app.add_subcommand("eval", "sample and evaluate against held-out reference data");
    add_common(eval);
    eval->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    eval->add_option("--run", o.run_dir, "prune run directory (uses its progressive final checkpoint)");
    eval->add_option("--sampler", o.sampler, "sampler")->check(CLI::IsMember({"ode", "sde", "both"}));
    auto* report = app.add_subcommand("report", "summarize a prune run directory");
    report->add_option("--run", o.run_dir, "prune run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    for (auto* sub : {train, analyze, prune, eval})
        if (sub->parsed() && sub->count("--seed")) o.seed = seed;
    const std::string command = app.get_subcommands().front()->get_name();
    return entprune::cli::dispatch(command, o, std::cout, std::cerr);
}
