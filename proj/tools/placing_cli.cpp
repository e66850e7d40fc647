// placing: command-line front end of the placement pipeline.

#include "placing/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Common {
    std::string config_path;
    std::optional<std::string> outdir;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> workers;
};

placing::PipelineConfig load(const Common &c) {
    placing::PipelineConfig cfg = c.config_path.empty() ? placing::default_config() : placing::load_config(c.config_path);
    if (c.outdir)
        cfg.outdir = *c.outdir;
    if (c.seed_override)
        cfg.seeds.dataset = *c.seed_override;
    if (c.workers)
        cfg.workers = *c.workers;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Learn to place objects: dataset generation, training, evaluation and ranking"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "JSON configuration (defaults to the built-in corpus)")
        ->check(CLI::ExistingFile);
    app.add_option("--outdir", common.outdir, "Override the output directory");
    app.add_option("--seed-override", common.seed_override, "Override the candidate sampling seed");
    app.add_option("--workers", common.workers, "Worker threads (0: all processors)")->check(CLI::NonNegativeNumber);

    auto *show = app.add_subcommand("config", "Print the effective configuration as JSON");
    auto *gen = app.add_subcommand("gen", "Generate and label the candidate datasets");

    std::string method = "shared";
    auto *train = app.add_subcommand("train", "Train models on every task's training split");
    train->add_option("--method", method, "joint, independent or shared")
        ->check(CLI::IsMember({"joint", "independent", "shared"}));

    std::vector<std::string> scenarios;
    std::string eval_method = "all";
    auto *eval = app.add_subcommand("eval", "Evaluate methods under train/test scenarios");
    eval->add_option("--scenario", scenarios, "SESO, SENO, NESO or NENO (repeatable; default: config list)")
        ->check(CLI::IsMember({"SESO", "SENO", "NESO", "NENO"}));
    eval->add_option("--method", eval_method,
                     "joint, independent, shared, chance, flat_upright, lowest_point, all or ablation")
        ->check(CLI::IsMember(
            {"joint", "independent", "shared", "chance", "flat_upright", "lowest_point", "all", "ablation"}));

    int task = -1, top_k = 5;
    std::string rank_method = "shared";
    auto *rank = app.add_subcommand("rank", "Rank a task's test candidates and verify the top k by simulation");
    rank->add_option("--task", task, "Task id")->required();
    rank->add_option("--top-k", top_k, "Number of candidates to verify")->check(CLI::PositiveNumber);
    rank->add_option("--method", rank_method, "Trained method to load")
        ->check(CLI::IsMember({"joint", "independent", "shared"}));

    int sim_task = -1, candidate = -1;
    auto *simulate = app.add_subcommand("simulate", "Settle one test candidate and dump its trajectory");
    simulate->add_option("--task", sim_task, "Task id")->required();
    simulate->add_option("--candidate", candidate, "Candidate id")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const placing::PipelineConfig cfg = load(common);
        if (*show) {
            std::cout << nlohmann::json(cfg).dump(2) << '\n';
        } else if (*gen) {
            placing::cmd_gen(cfg);
        } else if (*train) {
            placing::cmd_train(cfg, method);
        } else if (*eval) {
            const auto rep = placing::cmd_eval(cfg, scenarios.empty() ? cfg.scenarios : scenarios, eval_method);
            rep.write_table(std::cout);
        } else if (*rank) {
            for (const auto &c : placing::cmd_rank(cfg, rank_method, task, top_k))
                std::cout << c.rank << "  candidate " << c.stored.placement.candidate_id << "  score " << c.score
                          << "  " << (c.verified_valid ? "valid" : c.verified_stable ? "stable" : "unstable") << '\n';
        } else if (*simulate) {
            const auto res = placing::cmd_simulate(cfg, sim_task, candidate);
            std::cout << "steps " << res.steps << (res.converged ? " converged" : " not converged") << '\n';
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
