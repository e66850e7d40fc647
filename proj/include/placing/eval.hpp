#pragma once

// Train/test scenarios and ranking metrics, plus the baselines and report tables.

#include "placing/dataset.hpp"
#include "placing/features.hpp"
#include "placing/learn.hpp"
#include "placing/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace placing {

/// Same/New Environment, Same/New Object.
enum class Scenario { SESO, SENO, NESO, NENO };

inline std::string to_string(Scenario s) {
    switch (s) {
    case Scenario::SESO:
        return "SESO";
    case Scenario::SENO:
        return "SENO";
    case Scenario::NESO:
        return "NESO";
    case Scenario::NENO:
        return "NENO";
    }
    return "?";
}

inline Scenario parse_scenario(const std::string &s) {
    for (Scenario v : {Scenario::SESO, Scenario::SENO, Scenario::NESO, Scenario::NENO})
        if (to_string(v) == s)
            return v;
    throw std::invalid_argument("unknown scenario '" + s + "'");
}

/// Learners followed by the three baselines.
inline const std::vector<std::string> &learned_methods() {
    static const std::vector<std::string> m = {"joint", "independent", "shared"};
    return m;
}
inline const std::vector<std::string> &baseline_methods() {
    static const std::vector<std::string> m = {"chance", "flat_upright", "lowest_point"};
    return m;
}
inline bool is_learned(const std::string &m) {
    const auto &l = learned_methods();
    return std::find(l.begin(), l.end(), m) != l.end();
}
inline bool is_baseline(const std::string &m) {
    const auto &b = baseline_methods();
    return std::find(b.begin(), b.end(), m) != b.end();
}

/// Task ids used to train for `test_task_id`. SESO uses the task itself (its own
/// training split); the other scenarios keep or drop the test environment and
/// object.
inline std::vector<int> make_split(const std::vector<PlacingTask> &tasks, int test_task_id, Scenario s) {
    const auto it = std::find_if(tasks.begin(), tasks.end(), [&](const PlacingTask &t) { return t.task_id == test_task_id; });
    if (it == tasks.end())
        throw std::invalid_argument("make_split: task " + std::to_string(test_task_id) + " not in corpus");
    if (s == Scenario::SESO)
        return {test_task_id};
    std::vector<int> out;
    for (const auto &t : tasks) {
        const bool same_env = t.env_index == it->env_index;
        const bool same_obj = t.object_index == it->object_index;
        bool keep = false;
        switch (s) {
        case Scenario::SENO:
            keep = same_env && !same_obj;
            break;
        case Scenario::NESO:
            keep = !same_env && same_obj;
            break;
        case Scenario::NENO:
            keep = !same_env && !same_obj;
            break;
        case Scenario::SESO:
            break;
        }
        if (keep)
            out.push_back(t.task_id);
    }
    if (out.empty())
        throw std::invalid_argument("empty split: no training tasks for task " + std::to_string(test_task_id) + " under " +
                                    to_string(s));
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct RankingResult {
    std::vector<int> order; // candidate indices, best first
    int r0 = 1;
    bool no_valid = false; // r0 is then candidate count + 1
    int n = 5;
    double prec_at_n = 0.0;
    double stable_prec_at_n = 0.0;
};

/// Metrics of an ordering against per-candidate labels.
inline RankingResult rank_metrics(std::vector<int> order, const std::vector<bool> &valid,
                                  const std::vector<bool> &stable, int n) {
    if (n < 1)
        throw std::invalid_argument("rank_metrics: n must be >= 1");
    if (valid.size() != order.size() || stable.size() != order.size())
        throw std::invalid_argument("rank_metrics: label count differs from candidate count");
    RankingResult r;
    r.n = n;
    r.order = std::move(order);
    r.no_valid = true;
    r.r0 = static_cast<int>(r.order.size()) + 1;
    for (std::size_t i = 0; i < r.order.size(); ++i)
        if (valid[static_cast<std::size_t>(r.order[i])]) {
            r.r0 = static_cast<int>(i) + 1;
            r.no_valid = false;
            break;
        }
    int hits = 0, stable_hits = 0;
    for (std::size_t i = 0; i < r.order.size() && i < static_cast<std::size_t>(n); ++i) {
        hits += valid[static_cast<std::size_t>(r.order[i])] ? 1 : 0;
        stable_hits += stable[static_cast<std::size_t>(r.order[i])] ? 1 : 0;
    }
    r.prec_at_n = hits / static_cast<double>(n);
    r.stable_prec_at_n = stable_hits / static_cast<double>(n);
    return r;
}

/// Descending score order; equal scores keep candidate_id order.
inline std::vector<int> order_by_scores(const std::vector<double> &scores, const std::vector<int> &candidate_ids) {
    if (scores.size() != candidate_ids.size())
        throw std::invalid_argument("order_by_scores: size mismatch");
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
        if (scores[ua] != scores[ub])
            return scores[ua] > scores[ub];
        return candidate_ids[ua] < candidate_ids[ub];
    });
    return idx;
}

/// Mean precision at each positive in a descending score ranking; 0 without positives.
inline double average_precision(const std::vector<double> &scores, const Eigen::VectorXd &y) {
    if (static_cast<Eigen::Index>(scores.size()) != y.size())
        throw std::invalid_argument("average_precision: size mismatch");
    std::vector<int> ids(scores.size());
    std::iota(ids.begin(), ids.end(), 0);
    const auto order = order_by_scores(scores, ids);
    double hits = 0.0, sum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k)
        if (y[order[k]] > 0.0) {
            hits += 1.0;
            sum += hits / static_cast<double>(k + 1);
        }
    return hits > 0.0 ? sum / hits : 0.0;
}

inline std::vector<bool> valid_labels(const TaskSplit &s) {
    std::vector<bool> v;
    for (const auto &lp : s.items)
        v.push_back(lp.preferred);
    return v;
}
inline std::vector<bool> stable_labels(const TaskSplit &s) {
    std::vector<bool> v;
    for (const auto &lp : s.items)
        v.push_back(lp.stable);
    return v;
}
inline std::vector<int> candidate_ids(const TaskSplit &s) {
    std::vector<int> v;
    for (const auto &lp : s.items)
        v.push_back(lp.placement.candidate_id);
    return v;
}
inline std::vector<Placement> placements_of(const TaskSplit &s) {
    std::vector<Placement> v;
    for (const auto &lp : s.items)
        v.push_back(lp.placement);
    return v;
}

// ---------------------------------------------------------------------------
// Baselines. They see placements only, never labels.

/// Uniform random permutation (Fisher-Yates).
inline std::vector<int> chance_order(std::size_t count, std::uint64_t seed) {
    std::vector<int> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t i = count; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

/// Ascending location height, ties by candidate_id.
inline std::vector<int> lowest_point_order(const std::vector<Placement> &cands) {
    std::vector<int> idx(cands.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const auto &pa = cands[static_cast<std::size_t>(a)], &pb = cands[static_cast<std::size_t>(b)];
        if (pa.location.z() != pb.location.z())
            return pa.location.z() < pb.location.z();
        return pa.candidate_id < pb.candidate_id;
    });
    return idx;
}

struct FlatPatchParams {
    double radius = 0.05;     // neighborhood radius in the horizontal plane
    double max_stdev = 0.003; // z spread of a flat patch
    double band = 0.01;       // points this far below the top surface belong to it
    double cell = 0.005;      // occupancy grid cell
    double min_occupancy = 0.6;
    double upright_deg = 20.0;
};

/// Whether the environment directly below `at` is a flat, well-covered patch:
/// the top surface beneath the point (within `band`) must have a z spread below
/// `max_stdev` and cover at least `min_occupancy` of the disc's grid cells.
inline bool flat_patch_below(const PointCloud &env, const Point3 &at, const FlatPatchParams &fp = {}) {
    const double r2 = fp.radius * fp.radius;
    double top = -std::numeric_limits<double>::infinity();
    for (const auto &p : env.points)
        if (p.z() <= at.z() && (p.head<2>() - at.head<2>()).squaredNorm() <= r2)
            top = std::max(top, p.z());
    if (!std::isfinite(top))
        return false;
    const int span = static_cast<int>(std::ceil(fp.radius / fp.cell));
    std::set<std::pair<int, int>> occupied;
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (const auto &p : env.points) {
        if (p.z() > at.z() || p.z() < top - fp.band || (p.head<2>() - at.head<2>()).squaredNorm() > r2)
            continue;
        sum += p.z();
        sum2 += p.z() * p.z();
        ++n;
        occupied.insert({static_cast<int>(std::floor((p.x() - at.x()) / fp.cell)),
                         static_cast<int>(std::floor((p.y() - at.y()) / fp.cell))});
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    if (std::sqrt(var) >= fp.max_stdev)
        return false;
    int disc_cells = 0;
    for (int i = -span; i < span; ++i)
        for (int j = -span; j < span; ++j) {
            const double cx = (i + 0.5) * fp.cell, cy = (j + 0.5) * fp.cell;
            disc_cells += cx * cx + cy * cy <= r2 ? 1 : 0;
        }
    return static_cast<double>(occupied.size()) >= fp.min_occupancy * disc_cells;
}

/// Upright placements over flat patches first (lowest first), then everything
/// else in random order. Without any flat patch this is a chance ordering.
inline std::vector<int> flat_upright_order(const std::vector<Placement> &cands, const PointCloud &env,
                                           std::uint64_t seed, const FlatPatchParams &fp = {}) {
    std::vector<int> first, rest;
    const double cos_cone = std::cos(deg2rad(fp.upright_deg));
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const auto &p = cands[i];
        const bool upright = p.orientation.apply(Point3::UnitZ()).z() >= cos_cone;
        if (upright && flat_patch_below(env, p.location, fp))
            first.push_back(static_cast<int>(i));
        else
            rest.push_back(static_cast<int>(i));
    }
    std::sort(first.begin(), first.end(), [&](int a, int b) {
        const auto &pa = cands[static_cast<std::size_t>(a)], &pb = cands[static_cast<std::size_t>(b)];
        if (pa.location.z() != pb.location.z())
            return pa.location.z() < pb.location.z();
        return pa.candidate_id < pb.candidate_id;
    });
    const auto perm = chance_order(rest.size(), seed);
    for (int k : perm)
        first.push_back(rest[static_cast<std::size_t>(k)]);
    return first;
}

inline std::uint64_t chance_seed(std::uint64_t base, int task_id) {
    return mix_seed(base, 0xc4a9ce000ull + static_cast<std::uint64_t>(task_id));
}
inline std::uint64_t flat_seed(std::uint64_t base, int task_id) {
    return mix_seed(base, 0xf1a7000ull + static_cast<std::uint64_t>(task_id));
}

// ---------------------------------------------------------------------------
// Model evaluation

/// A trained method: its models plus the standardization they expect.
struct TrainedModels {
    std::vector<TaskModel> models;
    Standardizer standardizer;
    std::vector<int> columns; // feature columns in use, ascending
    std::optional<SolverTrace> trace;
    HyperParams hyper; // as trained, with C resolved
};

inline TaskData select_columns(const TaskData &t, const std::vector<int> &cols) {
    TaskData out;
    out.task_id = t.task_id;
    out.y = t.y;
    out.X.resize(static_cast<Eigen::Index>(cols.size()), t.X.cols());
    for (std::size_t c = 0; c < cols.size(); ++c)
        out.X.row(static_cast<Eigen::Index>(c)) = t.X.row(cols[c]);
    return out;
}

/// Samples [begin, end) of a task, or everything else when inside is false.
inline TaskData slice_samples(const TaskData &t, Eigen::Index begin, Eigen::Index end, bool inside) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < t.samples(); ++i)
        if ((i >= begin && i < end) == inside)
            keep.push_back(i);
    TaskData out;
    out.task_id = t.task_id;
    out.X.resize(t.X.rows(), static_cast<Eigen::Index>(keep.size()));
    out.y.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.X.col(static_cast<Eigen::Index>(k)) = t.X.col(keep[k]);
        out.y[static_cast<Eigen::Index>(k)] = t.y[keep[k]];
    }
    return out;
}

/// Picks C from hp.c_grid by k-fold cross-validation of per-task SVMs, scored by
/// held-out average precision. Folds are contiguous runs of samples, so the
/// orientations sharing a location stay together. Ties keep the earlier grid value.
inline double select_c(std::span<const TaskData> tasks, const HyperParams &hp) {
    if (hp.c_grid.empty())
        return hp.C;
    double best = -1.0, best_c = hp.C;
    for (double c : hp.c_grid) {
        double total = 0.0;
        int folds = 0;
        for (const auto &t : tasks)
            for (int f = 0; f < hp.cv_folds; ++f) {
                const Eigen::Index a = t.samples() * f / hp.cv_folds, b = t.samples() * (f + 1) / hp.cv_folds;
                const TaskData fit = slice_samples(t, a, b, false), held = slice_samples(t, a, b, true);
                if (held.y.size() == 0 || held.y.maxCoeff() < 0.0 || fit.y.maxCoeff() < 0.0 || fit.y.minCoeff() > 0.0)
                    continue;
                const SvmSolution sol = solve_svm(fit, c, hp.max_iter);
                const Eigen::VectorXd s = held.X.transpose() * sol.w;
                std::vector<double> scores(s.data(), s.data() + s.size());
                total += average_precision(scores, held.y);
                ++folds;
            }
        const double mean = folds > 0 ? total / folds : 0.0;
        if (mean > best) {
            best = mean;
            best_c = c;
        }
    }
    return best_c;
}

inline TrainedModels train_method(const std::string &method, std::span<const TaskData> raw, const HyperParams &hp,
                                  const SharedOptions &opt, const std::vector<int> &columns) {
    if (columns.empty())
        throw std::invalid_argument("empty feature set");
    if (raw.empty())
        throw std::invalid_argument("train_method: no training tasks");
    std::vector<TaskData> sel;
    for (const auto &t : raw)
        sel.push_back(select_columns(t, columns));
    TrainedModels tm;
    tm.columns = columns;
    tm.standardizer = Standardizer::fit(sel);
    std::vector<TaskData> std_tasks;
    for (const auto &t : sel)
        std_tasks.push_back(tm.standardizer.apply(t));
    tm.hyper = hp;
    tm.hyper.C = select_c(std_tasks, hp);
    tm.hyper.c_grid.clear();
    if (method == "independent") {
        tm.models = train_independent(std_tasks, tm.hyper);
    } else if (method == "joint") {
        tm.models = {train_joint(std_tasks, tm.hyper)};
    } else if (method == "shared") {
        SharedResult r = train_shared(std_tasks, tm.hyper, opt);
        tm.models = std::move(r.models);
        tm.trace = std::move(r.trace);
    } else {
        throw std::invalid_argument("unknown method '" + method + "'");
    }
    return tm;
}

/// Scores a split: the test task's own model when one was trained for it,
/// otherwise the mean score over all models.
inline std::vector<double> score_split(const TrainedModels &tm, const TaskSplit &test) {
    std::vector<double> out;
    out.reserve(test.items.size());
    const TaskModel *own = nullptr;
    for (const auto &m : tm.models)
        if (m.task_id == test.task_id)
            own = &m;
    Eigen::VectorXd v(static_cast<Eigen::Index>(tm.columns.size()));
    for (const auto &lp : test.items) {
        for (std::size_t c = 0; c < tm.columns.size(); ++c)
            v[static_cast<Eigen::Index>(c)] = lp.features[static_cast<std::size_t>(tm.columns[c])];
        const Eigen::VectorXd z = tm.standardizer.apply_vector(v);
        out.push_back(own ? score(*own, z) : score_voting(tm.models, z));
    }
    return out;
}

inline RankingResult evaluate(const TrainedModels &tm, const TaskSplit &test, int n) {
    if (test.items.empty())
        throw std::invalid_argument("evaluate: empty test split");
    return rank_metrics(order_by_scores(score_split(tm, test), candidate_ids(test)), valid_labels(test),
                        stable_labels(test), n);
}

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
    int task_id = 0;
    std::string env;
    std::string object;
    std::string scenario; // "-" for baselines, which ignore training data
    std::string method;
    std::string features = "all";
    int candidates = 0;
    int positives = 0;
    int r0 = 0;
    bool r0_flagged = false;
    double prec_at_n = 0.0;
    double stable_prec_at_n = 0.0;
    bool excluded = false;
    std::string note;
};

struct ReportAverage {
    std::string group; // "environment", "object" or "all"
    std::string key;
    std::string scenario;
    std::string method;
    std::string features;
    int count = 0;
    double r0 = 0.0;
    double prec_at_n = 0.0;
};

struct BenchmarkReport {
    int n = 5;
    std::vector<ReportRow> rows;
    std::vector<ReportAverage> averages;

    /// Means over included rows per environment and per object, plus the overall mean.
    static std::vector<ReportAverage> average_rows(const std::vector<ReportRow> &rows) {
        using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
        std::map<Key, ReportAverage> acc;
        std::vector<Key> order;
        auto add = [&](const std::string &group, const std::string &key, const ReportRow &r) {
            const Key k{r.scenario, r.method, r.features, group, key};
            auto [it, fresh] = acc.try_emplace(k);
            if (fresh) {
                order.push_back(k);
                it->second = {group, key, r.scenario, r.method, r.features, 0, 0.0, 0.0};
            }
            it->second.count += 1;
            it->second.r0 += r.r0;
            it->second.prec_at_n += r.prec_at_n;
        };
        for (const auto &r : rows) {
            if (r.excluded)
                continue;
            add("environment", r.env, r);
            add("object", r.object, r);
            add("all", "all", r);
        }
        std::sort(order.begin(), order.end());
        std::vector<ReportAverage> out;
        for (const auto &k : order) {
            ReportAverage a = acc.at(k);
            a.r0 /= a.count;
            a.prec_at_n /= a.count;
            out.push_back(a);
        }
        return out;
    }

    void finalize() { averages = average_rows(rows); }

    /// Stored averages agree with a fresh recomputation from the rows.
    bool averages_consistent(double tol = 1e-9) const {
        const auto fresh = average_rows(rows);
        if (fresh.size() != averages.size())
            return false;
        for (std::size_t i = 0; i < fresh.size(); ++i)
            if (fresh[i].key != averages[i].key || fresh[i].count != averages[i].count ||
                std::abs(fresh[i].r0 - averages[i].r0) > tol ||
                std::abs(fresh[i].prec_at_n - averages[i].prec_at_n) > tol)
                return false;
        return true;
    }

    const ReportAverage *find_average(const std::string &scenario, const std::string &method,
                                      const std::string &features = "all", const std::string &group = "all",
                                      const std::string &key = "all") const {
        for (const auto &a : averages)
            if (a.scenario == scenario && a.method == method && a.features == features && a.group == group &&
                a.key == key)
                return &a;
        return nullptr;
    }

    void write_csv(std::ostream &out) const {
        out << "kind,task_id,env,object,scenario,method,features,candidates,positives,R0,R0_flagged,prec_at_" << n
            << ",stable_prec_at_" << n << ",excluded,note,count\n";
        for (const auto &r : rows)
            out << "row," << r.task_id << ',' << r.env << ',' << r.object << ',' << r.scenario << ',' << r.method
                << ',' << r.features << ',' << r.candidates << ',' << r.positives << ',' << r.r0 << ','
                << (r.r0_flagged ? 1 : 0) << ',' << format_real(r.prec_at_n) << ','
                << format_real(r.stable_prec_at_n) << ',' << (r.excluded ? 1 : 0) << ',' << r.note << ",\n";
        for (const auto &a : averages)
            out << "avg_" << a.group << ",," << (a.group == "environment" ? a.key : "") << ','
                << (a.group == "object" ? a.key : "") << ',' << a.scenario << ',' << a.method << ',' << a.features
                << ",,," << format_real(a.r0) << ",," << format_real(a.prec_at_n) << ",,,," << a.count << '\n';
    }

    /// Per-task rows, then environment-wise and object-wise blocks.
    void write_table(std::ostream &out) const {
        auto line = [&](const std::string &a, const std::string &b, const std::string &c, const std::string &d,
                        const std::string &e, const std::string &f, const std::string &g) {
            out << std::left << std::setw(8) << a << std::setw(18) << b << std::setw(12) << c << std::setw(10) << d
                << std::setw(24) << e << std::setw(10) << f << std::setw(10) << g << '\n';
        };
        auto fixed = [](double v, int digits) {
            std::ostringstream s;
            s << std::fixed << std::setprecision(digits) << v;
            return s.str();
        };
        const std::string pn = "Pre@" + std::to_string(n);
        out << "Per task\n";
        line("task", "env", "object", "scenario", "method", "R0", pn);
        for (const auto &r : rows) {
            std::string r0 = r.excluded ? "-" : std::to_string(r.r0) + (r.r0_flagged ? "*" : "");
            std::string p = r.excluded ? "-" : fixed(r.prec_at_n, 2);
            line(std::to_string(r.task_id), r.env, r.object, r.scenario,
                 r.method + (r.features == "all" ? "" : "/" + r.features), r0, p);
        }
        for (const std::string group : {"environment", "object", "all"}) {
            out << "\nAveraged by " << group << "\n";
            line("", group, "", "scenario", "method", "R0", pn);
            for (const auto &a : averages)
                if (a.group == group)
                    line("", a.key, "", a.scenario, a.method + (a.features == "all" ? "" : "/" + a.features),
                         fixed(a.r0, 2), fixed(a.prec_at_n, 3));
        }
        bool notes = false;
        for (const auto &r : rows)
            if (r.excluded) {
                if (!notes)
                    out << "\nExcluded from averages\n";
                notes = true;
                out << "  task " << r.task_id << ' ' << r.scenario << ' ' << r.method << ": " << r.note << '\n';
            }
        out << "\n* no valid candidate; R0 is the candidate count + 1\n";
    }
};

inline std::string family_name(unsigned mask) {
    switch (mask) {
    case 1u:
        return "contact";
    case 2u:
        return "caging";
    case 4u:
        return "signature";
    case 7u:
        return "all";
    default: {
        std::string s;
        if (mask & 1u)
            s += "contact+";
        if (mask & 2u)
            s += "caging+";
        if (mask & 4u)
            s += "signature+";
        if (s.empty())
            throw std::invalid_argument("empty feature set");
        s.pop_back();
        return s;
    }
    }
}

/// Tasks with their labeled splits. The environment clouds, indexed by
/// environment index, feed the flat-surface baseline.
struct BenchmarkInput {
    std::vector<PlacingTask> tasks;
    std::vector<TaskDataset> data; // aligned with tasks
    std::vector<PointCloud> envs;
};

struct BenchmarkOptions {
    std::vector<Scenario> scenarios = {Scenario::SESO};
    std::vector<std::string> methods = {"independent"};
    std::vector<unsigned> family_masks = {7u};
    HyperParams hyper;
    SharedOptions shared;
    int n = 5;
    std::uint64_t baseline_seed = 3;
    int workers = 1;
};

namespace detail {
inline ReportRow base_row(const PlacingTask &t, const TaskSplit &test) {
    ReportRow r;
    r.task_id = t.task_id;
    r.env = to_string(t.env.cls);
    r.object = to_string(t.object.cls);
    r.candidates = static_cast<int>(test.items.size());
    r.positives = test.counts.preferred;
    if (r.positives == 0) {
        r.excluded = true;
        r.note = "no positive test candidates";
    }
    return r;
}
inline void fill_metrics(ReportRow &r, const RankingResult &m) {
    r.r0 = m.r0;
    r.r0_flagged = m.no_valid;
    r.prec_at_n = m.prec_at_n;
    r.stable_prec_at_n = m.stable_prec_at_n;
}
} // namespace detail

/// Runs every (task, scenario, method, feature family) cell. Each distinct
/// training set is fitted once; cells run in parallel and are assembled in a
/// fixed order, so the report does not depend on the worker count.
inline BenchmarkReport run_benchmark(const BenchmarkInput &in, const BenchmarkOptions &opt) {
    if (in.tasks.size() != in.data.size())
        throw std::invalid_argument("run_benchmark: tasks and datasets differ in length");
    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < in.tasks.size(); ++i)
        pos[in.tasks[i].task_id] = i;

    struct Job {
        std::string method;
        unsigned mask = 7u;
        std::vector<int> train;
    };
    struct Cell {
        std::size_t task;
        std::string scenario;
        std::string method;
        unsigned mask = 7u;
        int job = -1; // -1: baseline or undefined split
        std::string error;
    };
    std::vector<Job> jobs;
    std::map<std::tuple<std::string, unsigned, std::vector<int>>, int> job_index;
    std::vector<Cell> cells;

    for (unsigned mask : opt.family_masks)
        for (const auto &method : opt.methods) {
            if (is_baseline(method)) {
                if (mask != opt.family_masks.front())
                    continue;
                for (std::size_t t = 0; t < in.tasks.size(); ++t)
                    cells.push_back({t, "-", method, 7u, -1, {}});
                continue;
            }
            if (!is_learned(method))
                throw std::invalid_argument("unknown method '" + method + "'");
            for (Scenario s : opt.scenarios)
                for (std::size_t t = 0; t < in.tasks.size(); ++t) {
                    Cell c{t, to_string(s), method, mask, -1, {}};
                    try {
                        auto train = make_split(in.tasks, in.tasks[t].task_id, s);
                        const auto key = std::make_tuple(method, mask, train);
                        auto [it, fresh] = job_index.try_emplace(key, static_cast<int>(jobs.size()));
                        if (fresh)
                            jobs.push_back({method, mask, std::move(train)});
                        c.job = it->second;
                    } catch (const std::invalid_argument &e) {
                        c.error = "undefined split";
                    }
                    cells.push_back(std::move(c));
                }
        }

    std::vector<TrainedModels> trained(jobs.size());
    std::vector<std::string> job_errors(jobs.size());
    parallel_for(jobs.size(), opt.workers, [&](std::size_t j) {
        std::vector<TaskData> data;
        for (int id : jobs[j].train)
            data.push_back(in.data[pos.at(id)].train.to_task_data());
        try {
            trained[j] = train_method(jobs[j].method, data, opt.hyper, opt.shared, feature_columns(jobs[j].mask));
        } catch (const std::invalid_argument &e) {
            job_errors[j] = e.what();
        }
    });

    BenchmarkReport rep;
    rep.n = opt.n;
    rep.rows.resize(cells.size());
    parallel_for(cells.size(), opt.workers, [&](std::size_t i) {
        const Cell &c = cells[i];
        const PlacingTask &task = in.tasks[c.task];
        const TaskSplit &test = in.data[c.task].test;
        ReportRow r = detail::base_row(task, test);
        r.scenario = c.scenario;
        r.method = c.method;
        r.features = family_name(c.mask);
        if (test.items.empty()) {
            r.excluded = true;
            r.note = "no test candidates";
        } else if (is_baseline(c.method)) {
            const auto cands = placements_of(test);
            std::vector<int> order;
            if (c.method == "chance")
                order = chance_order(cands.size(), chance_seed(opt.baseline_seed, task.task_id));
            else if (c.method == "lowest_point")
                order = lowest_point_order(cands);
            else
                order = flat_upright_order(cands, in.envs.at(static_cast<std::size_t>(task.env_index)),
                                           flat_seed(opt.baseline_seed, task.task_id));
            detail::fill_metrics(r, rank_metrics(std::move(order), valid_labels(test), stable_labels(test), opt.n));
        } else if (c.job < 0) {
            r.excluded = true;
            r.note = c.error;
        } else if (!job_errors[static_cast<std::size_t>(c.job)].empty()) {
            r.excluded = true;
            r.note = job_errors[static_cast<std::size_t>(c.job)];
        } else {
            detail::fill_metrics(r, evaluate(trained[static_cast<std::size_t>(c.job)], test, opt.n));
        }
        rep.rows[i] = std::move(r);
    });
    rep.finalize();
    return rep;
}

/// SESO independent SVMs restricted to one feature family per mask.
inline BenchmarkReport ablate_features(const BenchmarkInput &in, const std::vector<unsigned> &masks,
                                       BenchmarkOptions opt) {
    for (unsigned m : masks)
        if ((m & 7u) == 0u)
            throw std::invalid_argument("empty feature set");
    opt.scenarios = {Scenario::SESO};
    opt.methods = {"independent"};
    opt.family_masks = masks;
    return run_benchmark(in, opt);
}

} // namespace placing
