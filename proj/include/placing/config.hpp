#pragma once

// Pipeline configuration: one JSON document holds the corpus, seeds and every
// tunable parameter. Missing keys take the defaults below.

#include "placing/dataset.hpp"
#include "placing/features.hpp"
#include "placing/learn.hpp"
#include "placing/physics.hpp"
#include "placing/scenes.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <thread>
#include <vector>

namespace placing {

inline constexpr int kConfigSchemaVersion = 1;

struct Seeds {
    std::uint64_t scene = 1;   // object and environment clouds
    std::uint64_t dataset = 2; // candidate sampling
    std::uint64_t baseline = 3;
};

struct PipelineConfig {
    int schema_version = kConfigSchemaVersion;
    Seeds seeds;
    std::vector<ObjectSpec> objects;
    std::vector<EnvSpec> environments;
    /// mask[e][o]: whether object o is placed in environment e.
    std::vector<std::vector<bool>> mask;
    std::vector<PreferenceRule> rules = default_preference_rules();
    DatasetParams dataset;
    SimParams sim;
    FeatureConfig features;
    HyperParams hyper;
    SharedOptions shared;
    std::vector<std::string> scenarios = {"SESO", "SENO", "NESO", "NENO"};
    int metric_n = 5;
    std::string outdir = "out";
    int workers = 0; // 0: all available processors

    int effective_workers() const {
        if (workers > 0)
            return workers;
        return std::max(1u, std::thread::hardware_concurrency());
    }

    /// Every compatible (environment, object) pair, ordered by task id.
    std::vector<PlacingTask> tasks() const {
        std::vector<PlacingTask> out;
        const int m = static_cast<int>(objects.size());
        for (int e = 0; e < static_cast<int>(environments.size()); ++e)
            for (int o = 0; o < m; ++o)
                if (mask[static_cast<std::size_t>(e)][static_cast<std::size_t>(o)])
                    out.push_back({objects[static_cast<std::size_t>(o)], environments[static_cast<std::size_t>(e)], o, e,
                                   m * e + o});
        return out;
    }

    void validate() const {
        if (schema_version != kConfigSchemaVersion)
            throw std::invalid_argument("unsupported config schema_version " + std::to_string(schema_version));
        if (objects.empty() || environments.empty())
            throw std::invalid_argument("config: corpus needs at least one object and one environment");
        if (mask.size() != environments.size())
            throw std::invalid_argument("config: mask needs one row per environment");
        for (const auto &row : mask)
            if (row.size() != objects.size())
                throw std::invalid_argument("config: mask rows need one entry per object");
        for (const auto &t : tasks())
            find_rule(rules, t.object.cls, t.env.cls);
        if (dataset.n_loc < 1 || dataset.clearance < 0.0 || dataset.min_height < 0.0)
            throw std::invalid_argument("config: invalid dataset parameters");
        if (metric_n < 1)
            throw std::invalid_argument("config: metric_n must be >= 1");
        sim.validate();
        hyper.validate();
    }
};

/// 5 environments x 6 objects with a sparse compatibility mask.
inline PipelineConfig default_config() {
    PipelineConfig c;
    using O = ObjectClass;
    using E = EnvClass;
    c.objects = {{O::plate, {}, 10000.0},  {O::bowl, {}, 10000.0},     {O::mug, {}, 10000.0},
                 {O::martini, {}, 20000.0}, {O::rod, {}, 50000.0},     {O::hook_item, {}, 50000.0}};
    c.environments = {{E::flat, {}, 40000.0},
                      {E::rack_slots, {}, 40000.0},
                      {E::pen_holder, {}, 40000.0},
                      {E::hook_bar, {}, 40000.0},
                      {E::stemware_holder, {}, 40000.0}};
    //            plate  bowl   mug    martini rod    hook
    c.mask = {{true, true, true, true, true, true},
              {true, false, false, false, false, false},
              {false, false, false, false, true, false},
              {false, false, false, false, false, true},
              {false, false, false, true, false, false}};
    c.sim.abort_factor = 4.0;
    c.hyper.c_grid = {0.01, 0.1, 1.0, 10.0, 100.0};
    return c;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json &j, const Seeds &s) {
    j = {{"scene", s.scene}, {"dataset", s.dataset}, {"baseline", s.baseline}};
}
inline void from_json(const nlohmann::json &j, Seeds &s) {
    const Seeds d;
    s.scene = j.value("scene", d.scene);
    s.dataset = j.value("dataset", d.dataset);
    s.baseline = j.value("baseline", d.baseline);
}

inline void to_json(nlohmann::json &j, const DatasetParams &p) {
    j = {{"n_loc", p.n_loc},
         {"min_height", p.min_height},
         {"clearance", p.clearance},
         {"max_regenerations", p.max_regenerations}};
}
inline void from_json(const nlohmann::json &j, DatasetParams &p) {
    const DatasetParams d;
    p.n_loc = j.value("n_loc", d.n_loc);
    p.min_height = j.value("min_height", d.min_height);
    p.clearance = j.value("clearance", d.clearance);
    p.max_regenerations = j.value("max_regenerations", d.max_regenerations);
}

inline void to_json(nlohmann::json &j, const SimParams &p) {
    j = {{"timestep", p.timestep},       {"energy_delta", p.energy_delta},
         {"validity_delta", p.validity_delta}, {"max_steps", p.max_steps},
         {"stiffness", p.stiffness},     {"damping", p.damping},
         {"friction", p.friction},       {"drag", p.drag},
         {"gravity", p.gravity},
         {"mass", p.mass},               {"quiet_steps", p.quiet_steps},
         {"skin", p.skin},               {"surface_radius", p.surface_radius},
         {"voxel", p.voxel},             {"contact_points", p.contact_points},
         {"escape_depth", p.escape_depth}, {"abort_factor", p.abort_factor}};
}
inline void from_json(const nlohmann::json &j, SimParams &p) {
    const SimParams d;
    p.timestep = j.value("timestep", d.timestep);
    p.energy_delta = j.value("energy_delta", d.energy_delta);
    p.validity_delta = j.value("validity_delta", d.validity_delta);
    p.max_steps = j.value("max_steps", d.max_steps);
    p.stiffness = j.value("stiffness", d.stiffness);
    p.damping = j.value("damping", d.damping);
    p.friction = j.value("friction", d.friction);
    p.drag = j.value("drag", d.drag);
    p.gravity = j.value("gravity", d.gravity);
    p.mass = j.value("mass", d.mass);
    p.quiet_steps = j.value("quiet_steps", d.quiet_steps);
    p.skin = j.value("skin", d.skin);
    p.surface_radius = j.value("surface_radius", d.surface_radius);
    p.voxel = j.value("voxel", d.voxel);
    p.contact_points = j.value("contact_points", d.contact_points);
    p.escape_depth = j.value("escape_depth", d.escape_depth);
    p.abort_factor = j.value("abort_factor", d.abort_factor);
}

inline void to_json(nlohmann::json &j, const FeatureConfig &f) {
    j = {{"k", f.k}, {"cap", f.cap}, {"support_radius", f.support_radius}};
}
inline void from_json(const nlohmann::json &j, FeatureConfig &f) {
    const FeatureConfig d;
    f.k = j.value("k", d.k);
    f.cap = j.value("cap", d.cap);
    f.support_radius = j.value("support_radius", d.support_radius);
}

inline void to_json(nlohmann::json &j, const HyperParams &h) {
    j = {{"C", h.C}, {"lambda_s", h.lambda_s}, {"lambda_b", h.lambda_b}, {"tol", h.tol}, {"max_iter", h.max_iter},
         {"C_grid", h.c_grid}, {"cv_folds", h.cv_folds}};
}
inline void from_json(const nlohmann::json &j, HyperParams &h) {
    const HyperParams d;
    h.C = j.value("C", d.C);
    h.lambda_s = j.value("lambda_s", d.lambda_s);
    h.lambda_b = j.value("lambda_b", d.lambda_b);
    h.tol = j.value("tol", d.tol);
    h.max_iter = j.value("max_iter", d.max_iter);
    h.c_grid = j.value("C_grid", d.c_grid);
    h.cv_folds = j.value("cv_folds", d.cv_folds);
}

inline void to_json(nlohmann::json &j, const SharedOptions &s) {
    j = {{"mu_start", s.mu_start}, {"mu_min", s.mu_min}, {"mu_period", s.mu_period}, {"window", s.window}};
}
inline void from_json(const nlohmann::json &j, SharedOptions &s) {
    const SharedOptions d;
    s.mu_start = j.value("mu_start", d.mu_start);
    s.mu_min = j.value("mu_min", d.mu_min);
    s.mu_period = j.value("mu_period", d.mu_period);
    s.window = j.value("window", d.window);
}

inline void to_json(nlohmann::json &j, const PipelineConfig &c) {
    j = {{"schema_version", c.schema_version},
         {"seeds", c.seeds},
         {"objects", c.objects},
         {"environments", c.environments},
         {"mask", c.mask},
         {"rules", c.rules},
         {"dataset", c.dataset},
         {"sim", c.sim},
         {"features", c.features},
         {"hyper", c.hyper},
         {"shared", c.shared},
         {"scenarios", c.scenarios},
         {"metric_n", c.metric_n},
         {"outdir", c.outdir},
         {"workers", c.workers}};
}

/// Keys absent from `j` keep the values of the default configuration.
inline void from_json(const nlohmann::json &j, PipelineConfig &c) {
    c = default_config();
    c.schema_version = j.value("schema_version", 0);
    if (j.contains("seeds"))
        c.seeds = j.at("seeds").get<Seeds>();
    if (j.contains("objects"))
        c.objects = j.at("objects").get<std::vector<ObjectSpec>>();
    if (j.contains("environments"))
        c.environments = j.at("environments").get<std::vector<EnvSpec>>();
    if (j.contains("mask"))
        c.mask = j.at("mask").get<std::vector<std::vector<bool>>>();
    if (j.contains("rules"))
        c.rules = j.at("rules").get<std::vector<PreferenceRule>>();
    if (j.contains("dataset"))
        c.dataset = j.at("dataset").get<DatasetParams>();
    if (j.contains("sim"))
        c.sim = j.at("sim").get<SimParams>();
    if (j.contains("features"))
        c.features = j.at("features").get<FeatureConfig>();
    if (j.contains("hyper"))
        c.hyper = j.at("hyper").get<HyperParams>();
    if (j.contains("shared"))
        c.shared = j.at("shared").get<SharedOptions>();
    if (j.contains("scenarios"))
        c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
    c.metric_n = j.value("metric_n", c.metric_n);
    c.outdir = j.value("outdir", c.outdir);
    c.workers = j.value("workers", c.workers);
}

inline PipelineConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    PipelineConfig c = j.get<PipelineConfig>();
    c.validate();
    return c;
}

} // namespace placing
