#include "placing/pipeline.hpp"

#include "catch_amalgamated.hpp"

#include <fstream>
#include <map>
#include <sstream>

using namespace placing;

namespace {

PipelineConfig small_config(const std::string &dir, int workers) {
    PipelineConfig c = default_config();
    c.objects = {{ObjectClass::plate, {}, 10000.0}, {ObjectClass::bowl, {}, 10000.0}};
    c.environments = {{EnvClass::flat, {}, 40000.0}, {EnvClass::rack_slots, {}, 40000.0}};
    c.mask = {{true, true}, {true, false}};
    c.dataset.n_loc = 8;
    c.hyper.c_grid = {0.1, 10.0};
    c.outdir = (std::filesystem::temp_directory_path() / dir).string();
    c.workers = workers;
    std::filesystem::remove_all(c.outdir);
    return c;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Every regular file under root, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path &root) {
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

void run_all(const PipelineConfig &cfg) {
    std::ostringstream log;
    cmd_gen(cfg, log);
    for (const auto &m : learned_methods())
        cmd_train(cfg, m, log);
    cmd_eval(cfg, cfg.scenarios, "all", log);
}

} // namespace

TEST_CASE("commands need their inputs") {
    const auto cfg = small_config("placing_pipeline_empty", 1);
    std::ostringstream log;
    REQUIRE_THROWS_WITH(load_corpus(cfg), Catch::Matchers::EndsWith("run gen first"));
    REQUIRE_THROWS_WITH(load_models(fs::path(cfg.outdir) / "models" / "independent"),
                        Catch::Matchers::EndsWith("run train first"));
    REQUIRE_THROWS(cmd_train(cfg, "nope", log));
}

TEST_CASE("gen, train, eval, rank and simulate on a small corpus") {
    const auto cfg = small_config("placing_pipeline_a", 1);
    run_all(cfg);
    const OutputPaths out{cfg.outdir};
    const auto manifest = read_json(out.manifest());
    REQUIRE(manifest.at("tasks").size() == 3);
    for (const auto &t : manifest.at("tasks")) {
        const auto &c = t.at("train").at("counts");
        REQUIRE(c.at("candidates").get<int>() == 8 * 18);
        REQUIRE(c.at("preferred").get<int>() <= c.at("stable").get<int>());
        REQUIRE(c.at("stable").get<int>() <= c.at("collision_free").get<int>());
    }
    REQUIRE(fs::exists(out.models() / "shared" / "index.json"));
    REQUIRE(fs::exists(out.models() / "joint" / "model.json"));
    REQUIRE(fs::exists(out.reports() / "all_SESO_SENO_NESO_NENO.csv"));

    const auto in = load_corpus(cfg);
    REQUIRE(in.tasks.size() == 3);
    REQUIRE(in.envs.size() == 2);

    std::ostringstream log;
    const auto ranked = cmd_rank(cfg, "independent", 0, 3, log);
    REQUIRE(ranked.size() == 3);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        REQUIRE(ranked[i].rank == static_cast<int>(i) + 1);
        // Re-simulation reproduces the stored label.
        REQUIRE(ranked[i].verified_stable == ranked[i].stored.stable);
        REQUIRE(ranked[i].verified_valid == ranked[i].stored.preferred);
        if (i > 0)
            REQUIRE(ranked[i - 1].score >= ranked[i].score);
    }
    REQUIRE_THROWS(cmd_rank(cfg, "independent", 99, 3, log));

    const int cand = ranked[0].stored.placement.candidate_id;
    const auto res = cmd_simulate(cfg, 0, cand, log);
    REQUIRE(label_validity(ranked[0].stored.placement, res, cfg.sim.validity_delta) == ranked[0].stored.stable);
    REQUIRE(fs::exists(out.reports() / ("simulate_task_0_c" + std::to_string(cand) + ".csv")));
    REQUIRE_THROWS(cmd_simulate(cfg, 0, -5, log));
}

TEST_CASE("outputs do not depend on the worker count") {
    const auto a = small_config("placing_pipeline_w1", 1);
    const auto b = small_config("placing_pipeline_w3", 3);
    run_all(a);
    run_all(b);
    const auto ta = tree(a.outdir), tb = tree(b.outdir);
    REQUIRE(ta.size() == tb.size());
    for (const auto &[name, body] : ta) {
        INFO(name);
        REQUIRE(tb.count(name) == 1);
        REQUIRE(tb.at(name) == body);
    }
}
