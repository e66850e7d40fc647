#pragma once

// Labeled candidate datasets: sample, collision-filter, settle, label, featurize.

#include "placing/features.hpp"
#include "placing/learn.hpp"
#include "placing/physics.hpp"
#include "placing/scenes.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace placing {

/// Runs fn(i) for i in [0, n) on `workers` threads. Each index owns its own
/// output slot, so results do not depend on the worker count.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)> &fn) {
    const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < w; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!err)
                        err = std::current_exception();
                }
            }
        });
    for (auto &th : pool)
        th.join();
    if (err)
        std::rethrow_exception(err);
}

struct LabeledPlacement {
    Placement placement;
    FeatureVector features{};
    bool stable = false;
    bool preferred = false;
    int y() const { return preferred ? 1 : -1; }
};

struct DatasetParams {
    int n_loc = 100;
    /// Minimum height of the sampling box.
    double min_height = 0.1;
    /// Minimum object-environment distance for a collision-free candidate.
    double clearance = 0.003;
    /// Attempts with fresh seeds when a training split has no positives.
    int max_regenerations = 5;
};

struct SplitCounts {
    int candidates = 0;
    int collision_free = 0;
    int stable = 0;
    int preferred = 0;
};

struct TaskSplit {
    int task_id = 0;
    std::string split; // "train" or "test"
    std::uint64_t seed = 0;
    int regenerations = 0;
    SplitCounts counts;
    std::vector<LabeledPlacement> items;

    TaskData to_task_data() const {
        TaskData d;
        d.task_id = task_id;
        d.X.resize(static_cast<Eigen::Index>(kFeatureCount), static_cast<Eigen::Index>(items.size()));
        d.y.resize(static_cast<Eigen::Index>(items.size()));
        for (std::size_t i = 0; i < items.size(); ++i) {
            for (std::size_t j = 0; j < kFeatureCount; ++j)
                d.X(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = items[i].features[j];
            d.y[static_cast<Eigen::Index>(i)] = items[i].y();
        }
        return d;
    }
};

/// Everything needed to label candidates of one task.
struct TaskScene {
    PlacingTask task;
    PointCloud object;
    PointCloud env;
};

inline std::uint64_t object_seed(std::uint64_t base, int object_index) {
    return mix_seed(base, 0x0b1ec7000ull + static_cast<std::uint64_t>(object_index));
}
inline std::uint64_t env_seed(std::uint64_t base, int env_index) {
    return mix_seed(base, 0xe2f000ull + static_cast<std::uint64_t>(env_index));
}
inline std::uint64_t split_seed(std::uint64_t base, int task_id, bool train, int attempt) {
    return mix_seed(mix_seed(base, 0x5a11ull + static_cast<std::uint64_t>(task_id)),
                    (train ? 0u : 1u) + 2u * static_cast<std::uint64_t>(attempt));
}

/// One labeled split from one candidate seed.
inline TaskSplit label_split(const TaskScene &scene, std::uint64_t seed, const DatasetParams &dp,
                             const SimParams &sim, const FeatureConfig &fc, const std::vector<PreferenceRule> &rules,
                             int workers) {
    TaskSplit out;
    out.task_id = scene.task.task_id;
    out.seed = seed;
    const auto candidates = sample_candidates(scene.env, dp.n_loc, standard_orientations(), seed, dp.min_height);
    const auto free = collision_filter(scene.object, scene.env, candidates, dp.clearance);
    out.counts.candidates = static_cast<int>(candidates.size());
    out.counts.collision_free = static_cast<int>(free.size());

    const ContactField field(scene.env, sim.voxel, sim.surface_radius);
    const SettleModel model(scene.object, field, sim);
    const EnvIndex index(scene.env);
    out.items.resize(free.size());
    parallel_for(free.size(), workers, [&](std::size_t i) {
        LabeledPlacement &lp = out.items[i];
        lp.placement = free[i];
        const SettleResult r = model.settle(free[i]);
        lp.stable = label_validity(free[i], r, sim.validity_delta);
        lp.preferred = preference_label(rules, scene.task, free[i], lp.stable);
        lp.features = extract(scene.object, index, free[i], fc);
    });
    for (const auto &lp : out.items) {
        out.counts.stable += lp.stable ? 1 : 0;
        out.counts.preferred += lp.preferred ? 1 : 0;
    }
    return out;
}

struct TaskDataset {
    int task_id = 0;
    TaskSplit train;
    TaskSplit test;
    std::vector<std::string> log;
};

/// Train and test splits from independent candidate seeds. A training split
/// without positives (or without negatives) is regenerated with the next seed,
/// and the retry is logged.
inline TaskDataset build_task_dataset(const TaskScene &scene, std::uint64_t base_seed, const DatasetParams &dp,
                                      const SimParams &sim, const FeatureConfig &fc,
                                      const std::vector<PreferenceRule> &rules, int workers) {
    find_rule(rules, scene.task.object.cls, scene.task.env.cls);
    TaskDataset ds;
    ds.task_id = scene.task.task_id;
    for (int attempt = 0;; ++attempt) {
        ds.train = label_split(scene, split_seed(base_seed, ds.task_id, true, attempt), dp, sim, fc, rules, workers);
        ds.train.split = "train";
        ds.train.regenerations = attempt;
        const bool has_neg = ds.train.counts.preferred < static_cast<int>(ds.train.items.size());
        if (ds.train.counts.preferred > 0 && has_neg)
            break;
        std::ostringstream msg;
        msg << "task " << ds.task_id << ": training split has no " << (has_neg ? "positives" : "negatives")
            << " (seed " << ds.train.seed << ")";
        if (attempt + 1 > dp.max_regenerations) {
            msg << ", giving up";
            ds.log.push_back(msg.str());
            break;
        }
        msg << ", regenerating";
        ds.log.push_back(msg.str());
    }
    ds.test = label_split(scene, split_seed(base_seed, ds.task_id, false, 0), dp, sim, fc, rules, workers);
    ds.test.split = "test";
    if (ds.test.items.empty())
        ds.log.push_back("task " + std::to_string(ds.task_id) + ": no collision-free test candidates");
    return ds;
}

// ---------------------------------------------------------------------------
// CSV I/O

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_features_csv(std::ostream &out, const TaskSplit &s) {
    const auto names = feature_names();
    out << "candidate_id";
    for (const auto &n : names)
        out << ',' << n;
    out << '\n';
    for (const auto &lp : s.items) {
        out << lp.placement.candidate_id;
        for (double v : lp.features)
            out << ',' << format_real(v);
        out << '\n';
    }
}

inline constexpr const char *kLabelsHeader = "candidate_id,Tx,Ty,Tz,qw,qx,qy,qz,stable,preferred,y";

inline void write_labels_csv(std::ostream &out, const TaskSplit &s) {
    out << kLabelsHeader << '\n';
    for (const auto &lp : s.items) {
        const auto &p = lp.placement;
        const auto &q = p.orientation.quaternion();
        out << p.candidate_id << ',' << format_real(p.location.x()) << ',' << format_real(p.location.y()) << ','
            << format_real(p.location.z()) << ',' << format_real(q.w()) << ',' << format_real(q.x()) << ','
            << format_real(q.y()) << ',' << format_real(q.z()) << ',' << (lp.stable ? 1 : 0) << ','
            << (lp.preferred ? 1 : 0) << ',' << lp.y() << '\n';
    }
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string &line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}
inline double parse_real(const std::string &s, const std::string &where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception &) {
        throw std::runtime_error(where + ": bad number '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v))
        throw std::runtime_error(where + ": bad number '" + s + "'");
    return v;
}
} // namespace detail

/// Reads a split back from its feature and label CSVs.
inline TaskSplit read_split(const std::string &features_path, const std::string &labels_path, int task_id) {
    std::ifstream fin(features_path), lin(labels_path);
    if (!fin)
        throw std::runtime_error("cannot open " + features_path);
    if (!lin)
        throw std::runtime_error("cannot open " + labels_path);
    TaskSplit s;
    s.task_id = task_id;
    std::string fl, ll;
    std::getline(fin, fl);
    std::getline(lin, ll);
    if (detail::split_csv(fl).size() != kFeatureCount + 1)
        throw std::runtime_error(features_path + ": expected " + std::to_string(kFeatureCount) + " feature columns");
    if (ll != kLabelsHeader)
        throw std::runtime_error(labels_path + ": unexpected header");
    int line = 1;
    while (std::getline(lin, ll)) {
        ++line;
        if (!std::getline(fin, fl))
            throw std::runtime_error(features_path + ": fewer rows than " + labels_path);
        const std::string where_l = labels_path + ":" + std::to_string(line);
        const std::string where_f = features_path + ":" + std::to_string(line);
        const auto lc = detail::split_csv(ll);
        const auto fc = detail::split_csv(fl);
        if (lc.size() != 11)
            throw std::runtime_error(where_l + ": expected 11 columns");
        if (fc.size() != kFeatureCount + 1)
            throw std::runtime_error(where_f + ": wrong column count");
        if (fc[0] != lc[0])
            throw std::runtime_error(where_f + ": candidate id differs from labels");
        LabeledPlacement lp;
        lp.placement.candidate_id = std::stoi(lc[0]);
        lp.placement.location = {detail::parse_real(lc[1], where_l), detail::parse_real(lc[2], where_l),
                                 detail::parse_real(lc[3], where_l)};
        lp.placement.orientation =
            Rotation::normalized(Eigen::Quaterniond(detail::parse_real(lc[4], where_l), detail::parse_real(lc[5], where_l),
                                                    detail::parse_real(lc[6], where_l),
                                                    detail::parse_real(lc[7], where_l)));
        lp.stable = lc[8] == "1";
        lp.preferred = lc[9] == "1";
        if (lp.preferred && !lp.stable)
            throw std::runtime_error(where_l + ": preferred placement marked unstable");
        for (std::size_t j = 0; j < kFeatureCount; ++j)
            lp.features[j] = detail::parse_real(fc[j + 1], where_f);
        s.items.push_back(lp);
        s.counts.stable += lp.stable;
        s.counts.preferred += lp.preferred;
    }
    s.counts.collision_free = static_cast<int>(s.items.size());
    return s;
}

inline nlohmann::json counts_json(const SplitCounts &c) {
    return {{"candidates", c.candidates},
            {"collision_free", c.collision_free},
            {"stable", c.stable},
            {"preferred", c.preferred}};
}

} // namespace placing
