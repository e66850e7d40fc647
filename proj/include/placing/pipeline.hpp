#pragma once

// End-to-end commands behind the CLI: gen, train, eval, rank, simulate. Every
// file is written to a temporary path and renamed into place.

#include "placing/config.hpp"
#include "placing/dataset.hpp"
#include "placing/eval.hpp"
#include "placing/learn.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace placing {

namespace fs = std::filesystem;

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kManifestVersion = 1;

/// Writes through `fill` into path.tmp, then renames over `path`.
inline void write_atomic(const fs::path &path, const std::function<void(std::ostream &)> &fill) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        fill(out);
        out.flush();
        if (!out)
            throw std::runtime_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_json_atomic(const fs::path &path, const nlohmann::json &j) {
    write_atomic(path, [&](std::ostream &o) { o << j.dump(2) << '\n'; });
}

inline nlohmann::json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

struct OutputPaths {
    fs::path root;
    fs::path datasets() const { return root / "datasets"; }
    fs::path models() const { return root / "models"; }
    fs::path reports() const { return root / "reports"; }
    fs::path manifest() const { return datasets() / "manifest.json"; }
    fs::path split_file(int task_id, const std::string &split, const std::string &kind) const {
        return datasets() / ("task_" + std::to_string(task_id) + "_" + split + "_" + kind + ".csv");
    }
};

/// Object and environment clouds of a configuration, indexed like the config lists.
struct SceneClouds {
    std::vector<PointCloud> objects;
    std::vector<PointCloud> envs;
};

inline SceneClouds build_clouds(const PipelineConfig &cfg) {
    SceneClouds c;
    for (std::size_t o = 0; o < cfg.objects.size(); ++o)
        c.objects.push_back(generate_object(cfg.objects[o], object_seed(cfg.seeds.scene, static_cast<int>(o))));
    for (std::size_t e = 0; e < cfg.environments.size(); ++e)
        c.envs.push_back(generate_env(cfg.environments[e], env_seed(cfg.seeds.scene, static_cast<int>(e))));
    return c;
}

// ---------------------------------------------------------------------------
// gen

/// Generates and labels every task of the corpus. Returns the manifest.
inline nlohmann::json cmd_gen(const PipelineConfig &cfg, std::ostream &log = std::cerr) {
    cfg.validate();
    const OutputPaths out{cfg.outdir};
    const SceneClouds clouds = build_clouds(cfg);
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto &t : cfg.tasks()) {
        const TaskScene scene{t, clouds.objects[static_cast<std::size_t>(t.object_index)],
                              clouds.envs[static_cast<std::size_t>(t.env_index)]};
        const TaskDataset ds = build_task_dataset(scene, cfg.seeds.dataset, cfg.dataset, cfg.sim, cfg.features,
                                                  cfg.rules, cfg.effective_workers());
        for (const auto &msg : ds.log)
            log << msg << '\n';
        nlohmann::json entry = {{"task_id", t.task_id},
                                {"env", to_string(t.env.cls)},
                                {"object", to_string(t.object.cls)},
                                {"env_index", t.env_index},
                                {"object_index", t.object_index},
                                {"log", ds.log}};
        for (const TaskSplit *s : {&ds.train, &ds.test}) {
            const auto features = out.split_file(t.task_id, s->split, "features");
            const auto labels = out.split_file(t.task_id, s->split, "labels");
            write_atomic(features, [&](std::ostream &o) { write_features_csv(o, *s); });
            write_atomic(labels, [&](std::ostream &o) { write_labels_csv(o, *s); });
            entry[s->split] = {{"seed", s->seed},
                               {"regenerations", s->regenerations},
                               {"counts", counts_json(s->counts)},
                               {"features", features.filename().string()},
                               {"labels", labels.filename().string()}};
        }
        log << "task " << t.task_id << " (" << entry["env"].get<std::string>() << " / "
            << entry["object"].get<std::string>() << "): train " << ds.train.items.size() << " candidates, "
            << ds.train.counts.preferred << " preferred; test " << ds.test.items.size() << " candidates, "
            << ds.test.counts.preferred << " preferred\n";
        tasks.push_back(std::move(entry));
    }
    // Run-local settings stay out so the manifest only reflects the data.
    nlohmann::json config = cfg;
    config.erase("workers");
    config.erase("outdir");
    nlohmann::json manifest = {{"manifest_version", kManifestVersion}, {"config", config}, {"tasks", tasks}};
    write_json_atomic(out.manifest(), manifest);
    return manifest;
}

/// Tasks and splits as written by gen.
inline BenchmarkInput load_corpus(const PipelineConfig &cfg, bool with_envs = true) {
    const OutputPaths out{cfg.outdir};
    if (!fs::exists(out.manifest()))
        throw std::runtime_error("no dataset at " + out.datasets().string() + ": run gen first");
    const nlohmann::json manifest = read_json(out.manifest());
    BenchmarkInput in;
    std::map<int, PlacingTask> by_id;
    for (const auto &t : cfg.tasks())
        by_id[t.task_id] = t;
    for (const auto &entry : manifest.at("tasks")) {
        const int id = entry.at("task_id").get<int>();
        if (!by_id.count(id))
            throw std::runtime_error("manifest task " + std::to_string(id) + " is not in the config; rerun gen");
        in.tasks.push_back(by_id.at(id));
        TaskDataset ds;
        ds.task_id = id;
        ds.train = read_split((out.datasets() / entry.at("train").at("features").get<std::string>()).string(),
                              (out.datasets() / entry.at("train").at("labels").get<std::string>()).string(), id);
        ds.train.split = "train";
        ds.test = read_split((out.datasets() / entry.at("test").at("features").get<std::string>()).string(),
                             (out.datasets() / entry.at("test").at("labels").get<std::string>()).string(), id);
        ds.test.split = "test";
        in.data.push_back(std::move(ds));
    }
    if (with_envs)
        in.envs = build_clouds(cfg).envs;
    return in;
}

// ---------------------------------------------------------------------------
// Model files

inline nlohmann::json model_json(const std::string &method, const TaskModel &m, const TrainedModels &tm,
                                 const HyperParams &hp) {
    auto vec = [](const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"format_version", kModelFormatVersion},
            {"method", method},
            {"task_id", m.task_id},
            {"S", vec(m.S)},
            {"B", vec(m.B)},
            {"b", m.b},
            {"hyper", hp},
            {"columns", tm.columns},
            {"standardizer", {{"mean", vec(tm.standardizer.mean)}, {"stdev", vec(tm.standardizer.stdev)}}}};
}

/// Reads the model files of one method back into a TrainedModels.
inline TrainedModels load_models(const fs::path &dir) {
    if (!fs::exists(dir / "index.json"))
        throw std::runtime_error("no models at " + dir.string() + ": run train first");
    const nlohmann::json index = read_json(dir / "index.json");
    auto vec = [](const nlohmann::json &j) {
        const auto v = j.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    TrainedModels tm;
    for (const auto &name : index.at("files")) {
        const fs::path p = dir / name.get<std::string>();
        const nlohmann::json j = read_json(p);
        if (j.value("format_version", 0) != kModelFormatVersion)
            throw std::runtime_error(p.string() + ": unsupported model format_version");
        tm.models.push_back(
            TaskModel::from_parts(vec(j.at("S")), vec(j.at("B")), j.at("b").get<double>(), j.at("task_id").get<int>()));
        tm.columns = j.at("columns").get<std::vector<int>>();
        tm.standardizer.mean = vec(j.at("standardizer").at("mean"));
        tm.standardizer.stdev = vec(j.at("standardizer").at("stdev"));
    }
    if (tm.models.empty())
        throw std::runtime_error(dir.string() + ": empty model index");
    return tm;
}

// ---------------------------------------------------------------------------
// train

/// Trains one method on the training splits of every task and writes one model
/// file per task (a single file for joint) plus a training log.
inline TrainedModels cmd_train(const PipelineConfig &cfg, const std::string &method, std::ostream &log = std::cerr) {
    if (!is_learned(method))
        throw std::invalid_argument("unknown method '" + method + "'");
    const BenchmarkInput in = load_corpus(cfg, false);
    std::vector<TaskData> data;
    for (std::size_t i = 0; i < in.data.size(); ++i) {
        if (in.data[i].train.counts.preferred == 0 ||
            in.data[i].train.counts.preferred == static_cast<int>(in.data[i].train.items.size())) {
            log << "task " << in.tasks[i].task_id << ": single-class training split, skipped\n";
            continue;
        }
        data.push_back(in.data[i].train.to_task_data());
    }
    const TrainedModels tm = train_method(method, data, cfg.hyper, cfg.shared, feature_columns(7u));
    const fs::path dir = OutputPaths{cfg.outdir}.models() / method;
    std::vector<std::string> files;
    for (const auto &m : tm.models) {
        const std::string name = method == "joint" ? "model.json" : "task_" + std::to_string(m.task_id) + ".json";
        write_json_atomic(dir / name, model_json(method, m, tm, tm.hyper));
        files.push_back(name);
    }
    nlohmann::json train_log = {{"method", method}, {"tasks", data.size()}, {"C", tm.hyper.C}};
    if (tm.trace) {
        train_log["objective"] = tm.trace->objective;
        train_log["iterations"] = tm.trace->iterations;
        train_log["converged"] = tm.trace->converged;
        if (!tm.trace->converged)
            log << "warning: shared solver stopped at the iteration limit before converging\n";
    } else {
        std::vector<double> obj;
        for (std::size_t i = 0; i < tm.models.size(); ++i) {
            const TaskData t = tm.standardizer.apply(method == "joint" ? pool_tasks(data) : data[i]);
            obj.push_back(svm_objective(t, tm.models[i].w, tm.models[i].b, tm.hyper.C));
        }
        train_log["objective"] = obj;
    }
    write_json_atomic(dir / "train_log.json", train_log);
    write_json_atomic(dir / "index.json", {{"method", method}, {"files", files}});
    log << "trained " << method << ": " << files.size() << " model file(s) in " << dir.string() << '\n';
    return tm;
}

// ---------------------------------------------------------------------------
// eval

/// Methods named by an eval request; "all" expands to the learners and baselines.
inline std::vector<std::string> expand_methods(const std::string &method) {
    if (method == "all") {
        auto m = learned_methods();
        m.insert(m.end(), baseline_methods().begin(), baseline_methods().end());
        return m;
    }
    if (!is_learned(method) && !is_baseline(method) && method != "ablation")
        throw std::invalid_argument("unknown method '" + method + "'");
    return {method};
}

inline BenchmarkOptions benchmark_options(const PipelineConfig &cfg) {
    BenchmarkOptions o;
    o.hyper = cfg.hyper;
    o.shared = cfg.shared;
    o.n = cfg.metric_n;
    o.baseline_seed = cfg.seeds.baseline;
    o.workers = cfg.effective_workers();
    return o;
}

/// Runs the protocol for the given scenarios and method(s) and writes
/// reports/<name>.csv and reports/<name>.txt. "ablation" runs the SESO
/// feature-family comparison together with the chance baseline.
inline BenchmarkReport cmd_eval(const PipelineConfig &cfg, const std::vector<std::string> &scenarios,
                                const std::string &method, std::ostream &log = std::cerr) {
    std::vector<Scenario> sc;
    for (const auto &s : scenarios)
        sc.push_back(parse_scenario(s));
    const auto methods = expand_methods(method);
    const BenchmarkInput in = load_corpus(cfg);
    BenchmarkOptions opt = benchmark_options(cfg);
    BenchmarkReport rep;
    std::string name;
    if (method == "ablation") {
        rep = ablate_features(in, {1u, 2u, 4u, 7u}, opt);
        opt.methods = {"chance"};
        const BenchmarkReport chance = run_benchmark(in, opt);
        rep.rows.insert(rep.rows.end(), chance.rows.begin(), chance.rows.end());
        rep.finalize();
        name = "ablation";
    } else {
        opt.scenarios = sc;
        opt.methods = methods;
        rep = run_benchmark(in, opt);
        name = method;
        for (const auto &s : scenarios)
            name += "_" + s;
    }
    const OutputPaths out{cfg.outdir};
    write_atomic(out.reports() / (name + ".csv"), [&](std::ostream &o) { rep.write_csv(o); });
    write_atomic(out.reports() / (name + ".txt"), [&](std::ostream &o) { rep.write_table(o); });
    log << "wrote " << (out.reports() / (name + ".csv")).string() << '\n';
    return rep;
}

// ---------------------------------------------------------------------------
// rank

struct RankedCandidate {
    int rank = 0;
    LabeledPlacement stored;
    double score = 0.0;
    bool verified_stable = false;
    bool verified_valid = false; // stable and preferred by the rule
};

/// Scores the test candidates of one task with trained models, keeps the top k
/// and re-verifies each by simulation. The first verified placement is marked in
/// the report.
inline std::vector<RankedCandidate> cmd_rank(const PipelineConfig &cfg, const std::string &method, int task_id,
                                             int top_k, std::ostream &log = std::cerr) {
    if (!is_learned(method))
        throw std::invalid_argument("unknown method '" + method + "'");
    if (top_k < 1)
        throw std::invalid_argument("top-k must be >= 1");
    const BenchmarkInput in = load_corpus(cfg, false);
    const auto it =
        std::find_if(in.tasks.begin(), in.tasks.end(), [&](const PlacingTask &t) { return t.task_id == task_id; });
    if (it == in.tasks.end())
        throw std::invalid_argument("task " + std::to_string(task_id) + " is not in the dataset");
    const std::size_t idx = static_cast<std::size_t>(it - in.tasks.begin());
    const TaskSplit &test = in.data[idx].test;
    const TrainedModels tm = load_models(OutputPaths{cfg.outdir}.models() / method);
    const auto scores = score_split(tm, test);
    const auto order = order_by_scores(scores, candidate_ids(test));
    if (static_cast<std::size_t>(top_k) > order.size()) {
        log << "warning: top-k " << top_k << " exceeds the " << order.size() << " candidates; clamped\n";
        top_k = static_cast<int>(order.size());
    }
    const SceneClouds clouds = build_clouds(cfg);
    const auto &object = clouds.objects[static_cast<std::size_t>(it->object_index)];
    const ContactField field(clouds.envs[static_cast<std::size_t>(it->env_index)], cfg.sim.voxel,
                             cfg.sim.surface_radius);
    const SettleModel model(object, field, cfg.sim);
    std::vector<RankedCandidate> out(static_cast<std::size_t>(top_k));
    parallel_for(out.size(), cfg.effective_workers(), [&](std::size_t r) {
        RankedCandidate &c = out[r];
        c.rank = static_cast<int>(r) + 1;
        c.stored = test.items[static_cast<std::size_t>(order[r])];
        c.score = scores[static_cast<std::size_t>(order[r])];
        const SettleResult res = model.settle(c.stored.placement);
        c.verified_stable = label_validity(c.stored.placement, res, cfg.sim.validity_delta);
        c.verified_valid = preference_label(cfg.rules, *it, c.stored.placement, c.verified_stable);
    });
    int first = 0;
    for (const auto &c : out)
        if (c.verified_valid) {
            first = c.rank;
            break;
        }
    const fs::path path =
        OutputPaths{cfg.outdir}.reports() / ("rank_task_" + std::to_string(task_id) + "_" + method + ".csv");
    write_atomic(path, [&](std::ostream &o) {
        o << "rank,candidate_id,score,Tx,Ty,Tz,qw,qx,qy,qz,stored_stable,stored_preferred,verified_stable,"
             "verified_valid,first_valid\n";
        for (const auto &c : out) {
            const auto &p = c.stored.placement;
            const auto &q = p.orientation.quaternion();
            o << c.rank << ',' << p.candidate_id << ',' << format_real(c.score) << ',' << format_real(p.location.x())
              << ',' << format_real(p.location.y()) << ',' << format_real(p.location.z()) << ',' << format_real(q.w())
              << ',' << format_real(q.x()) << ',' << format_real(q.y()) << ',' << format_real(q.z()) << ','
              << c.stored.stable << ',' << c.stored.preferred << ',' << c.verified_stable << ','
              << c.verified_valid << ',' << (c.rank == first ? 1 : 0) << '\n';
        }
    });
    if (first > 0)
        log << "first verified valid placement at rank " << first << '\n';
    else
        log << "no verified valid placement in the top " << top_k << '\n';
    return out;
}

// ---------------------------------------------------------------------------
// simulate

/// Settles one stored test candidate of a task and dumps its trajectory.
inline SettleResult cmd_simulate(const PipelineConfig &cfg, int task_id, int candidate_id,
                                 std::ostream &log = std::cerr) {
    const BenchmarkInput in = load_corpus(cfg, false);
    const auto it =
        std::find_if(in.tasks.begin(), in.tasks.end(), [&](const PlacingTask &t) { return t.task_id == task_id; });
    if (it == in.tasks.end())
        throw std::invalid_argument("task " + std::to_string(task_id) + " is not in the dataset");
    const TaskSplit &test = in.data[static_cast<std::size_t>(it - in.tasks.begin())].test;
    const auto lp = std::find_if(test.items.begin(), test.items.end(), [&](const LabeledPlacement &l) {
        return l.placement.candidate_id == candidate_id;
    });
    if (lp == test.items.end())
        throw std::invalid_argument("candidate " + std::to_string(candidate_id) + " is not a test candidate of task " +
                                    std::to_string(task_id));
    const SceneClouds clouds = build_clouds(cfg);
    SettleResult res;
    const fs::path path = OutputPaths{cfg.outdir}.reports() /
                          ("simulate_task_" + std::to_string(task_id) + "_c" + std::to_string(candidate_id) + ".csv");
    write_atomic(path, [&](std::ostream &o) {
        o << kTrajectoryHeader;
        res = settle(clouds.objects[static_cast<std::size_t>(it->object_index)], lp->placement,
                     clouds.envs[static_cast<std::size_t>(it->env_index)], cfg.sim, &o);
    });
    const bool stable = label_validity(lp->placement, res, cfg.sim.validity_delta);
    log << "candidate " << candidate_id << ": " << (stable ? "stable" : "unstable") << " (stored label "
        << (lp->stable ? "stable" : "unstable") << "), trajectory in " << path.string() << '\n';
    return res;
}

} // namespace placing
