// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Usage: acceptance <work-dir>

#include "placing/pipeline.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

using namespace placing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string &what) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

std::string fmt(const char *f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// 1 -------------------------------------------------------------------------

void feature_layout() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(2024);
    int count_mismatch = 0;
    double worst = 0.0;
    for (int s = 0; s < 1000; ++s) {
        const auto sc = oracle::random_scene(gen);
        const auto got = extract(PointCloud{sc.object, Frame::object_local}, PointCloud{sc.env, Frame::world},
                                 sc.placement, FeatureConfig{});
        const auto want = oracle::features(sc.object, sc.env, sc.placement);
        for (int i = 0; i < 120; ++i) {
            if (i >= 24 && i < 88)
                count_mismatch += got[static_cast<std::size_t>(i)] != want[static_cast<std::size_t>(i)] ? 1 : 0;
            else
                worst = std::max(worst, std::abs(got[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]));
        }
    }
    const double secs = seconds_since(t0);
    const bool layout = kContactFeatures == 3 && kCagingFeatures == 21 && kSignatureFeatures == 96 &&
                        kFeatureCount == 120;
    report(1, layout && count_mismatch == 0 && worst <= 1e-9 && secs < 60.0,
           fmt("layout 3|21|96; 1000 scenes, %.0f count mismatches, max distance error %.2e, %.1f s", count_mismatch,
               worst, secs));
}

// 2, 3, 4, 8 --------------------------------------------------------------

PipelineConfig corpus_config(const fs::path &dir, int workers) {
    PipelineConfig c = default_config();
    c.outdir = dir.string();
    c.workers = workers;
    fs::remove_all(dir);
    return c;
}

struct RunTimes {
    double seso = 0.0; // gen + independent training + SESO evaluation
};

RunTimes full_run(const PipelineConfig &cfg, std::ostream &log) {
    RunTimes t;
    const auto t0 = Clock::now();
    cmd_gen(cfg, log);
    cmd_train(cfg, "independent", log);
    cmd_eval(cfg, {"SESO"}, "independent", log);
    t.seso = seconds_since(t0);
    cmd_train(cfg, "joint", log);
    cmd_train(cfg, "shared", log);
    cmd_eval(cfg, {"SESO", "SENO", "NESO", "NENO"}, "all", log);
    cmd_eval(cfg, {"SESO"}, "ablation", log);
    return t;
}

double pre(const BenchmarkReport &r, const std::string &sc, const std::string &m, const std::string &f = "all") {
    const auto *a = r.find_average(sc, m, f);
    return a ? a->prec_at_n : -1.0;
}
double r0(const BenchmarkReport &r, const std::string &sc, const std::string &m, const std::string &f = "all") {
    const auto *a = r.find_average(sc, m, f);
    return a ? a->r0 : 1e9;
}

void corpus_criteria(const fs::path &work, std::ostream &log) {
    const auto cfg = corpus_config(work / "run1", 1);
    const RunTimes t = full_run(cfg, log);

    const BenchmarkInput in = load_corpus(cfg);
    BenchmarkOptions opt = benchmark_options(cfg);
    opt.scenarios = {Scenario::SESO, Scenario::NENO};
    opt.methods = {"independent", "joint", "shared", "chance"};
    const BenchmarkReport main = run_benchmark(in, opt);
    const BenchmarkReport abl = ablate_features(in, {1u, 2u, 4u, 7u}, opt);

    const double seso_r0 = r0(main, "SESO", "independent"), seso_pre = pre(main, "SESO", "independent");
    report(2, seso_r0 <= 1.5 && seso_pre >= 0.85 && t.seso <= 600.0,
           fmt("SESO independent R0 %.2f (<= 1.5), Pre@5 %.3f (>= 0.85), %.0f s end-to-end (<= 600)", seso_r0,
               seso_pre, t.seso));

    const double ch = pre(main, "-", "chance"), con = pre(abl, "SESO", "independent", "contact"),
                 cag = pre(abl, "SESO", "independent", "caging"), sig = pre(abl, "SESO", "independent", "signature"),
                 all = pre(abl, "SESO", "independent", "all");
    report(3, ch < con && con < all && sig > con && cag > ch,
           fmt("Pre@5 chance %.3f, contact %.3f, caging %.3f, signature %.3f", ch, con, cag, sig) +
               fmt(", all %.3f", all));

    const double ps = pre(main, "NENO", "shared"), pi = pre(main, "NENO", "independent"),
                 pj = pre(main, "NENO", "joint");
    const double rs = r0(main, "NENO", "shared"), ri = r0(main, "NENO", "independent");
    report(4, ps >= pi - 0.02 && pi >= pj - 0.02 && rs <= ri + 0.5,
           fmt("NENO Pre@5 shared %.3f, independent %.3f, joint %.3f", ps, pi, pj) +
               fmt("; R0 shared %.2f, independent %.2f", rs, ri));

}

// A second run with a different worker count, compared byte for byte.
void reproducibility(const fs::path &work, std::ostream &log) {
    const fs::path first = work / "run1";
    const auto cfg2 = corpus_config(work / "run2", 2);
    full_run(cfg2, log);
    int compared = 0, differing = 0;
    for (const char *sub : {"datasets", "models", "reports"}) {
        const fs::path a = first / sub, b = fs::path(cfg2.outdir) / sub;
        std::map<std::string, bool> seen;
        for (const auto &e : fs::recursive_directory_iterator(a)) {
            if (!e.is_regular_file())
                continue;
            const auto rel = fs::relative(e.path(), a);
            auto read = [](const fs::path &p) {
                std::ifstream f(p, std::ios::binary);
                std::ostringstream s;
                s << f.rdbuf();
                return s.str();
            };
            ++compared;
            if (!fs::exists(b / rel) || read(e.path()) != read(b / rel))
                ++differing;
            seen[rel.string()] = true;
        }
        for (const auto &e : fs::recursive_directory_iterator(b))
            if (e.is_regular_file() && !seen.count(fs::relative(e.path(), b).string()))
                ++differing;
    }
    report(8, compared > 0 && differing == 0,
           fmt("%.0f files compared across 1 and 2 workers, %.0f differ", compared, differing));
}

// 5 -------------------------------------------------------------------------

void solver_criteria() {
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
        const auto toy = oracle::toy(k);
        const auto grid = oracle::svm_grid(toy.X, toy.y, toy.C);
        const auto s = solve_svm({toy.X, toy.y, 0}, toy.C);
        worst = std::max(worst, std::abs(s.objective - grid.objective) / std::abs(grid.objective));
    }
    const bool a = worst <= 1e-6;

    const auto pl = oracle::planted(7);
    const std::vector<TaskData> one{{pl.X[0], pl.y[0], 0}};
    HyperParams free;
    free.C = 0.1;
    free.lambda_s = 0.0;
    free.lambda_b = 0.0;
    const auto sh = train_shared(one, free);
    const double ind = solve_svm(one[0], free.C).objective;
    const double got = svm_objective(one[0], sh.models[0].w, sh.models[0].b, free.C);
    const double rel = std::abs(got - ind) / ind;
    const bool b = rel <= 1e-4;

    const auto planted = oracle::planted(1);
    std::vector<TaskData> tasks;
    for (int i = 0; i < 3; ++i)
        tasks.push_back({planted.X[static_cast<std::size_t>(i)], planted.y[static_cast<std::size_t>(i)], i});
    HyperParams hp;
    hp.C = 0.1;
    hp.lambda_s = 0.3;
    hp.lambda_b = 0.5;
    const auto r = train_shared(tasks, hp);
    Eigen::MatrixXd B(10, 3), S(10, 3);
    for (int i = 0; i < 3; ++i) {
        B.col(i) = r.models[static_cast<std::size_t>(i)].B;
        S.col(i) = r.models[static_cast<std::size_t>(i)].S;
    }
    const Eigen::VectorXd rows = B.cwiseAbs().rowwise().maxCoeff();
    bool c = true;
    for (int j = 0; j < 10; ++j)
        c = c && (rows[j] > 0.1 * rows.maxCoeff()) == (j < 3);
    for (int i = 0; i < 3; ++i) {
        Eigen::Index top = 0;
        S.col(i).cwiseAbs().maxCoeff(&top);
        c = c && top == 3 + i;
    }
    report(5, a && b && c,
           fmt("toy objectives vs grid max rel error %.2e; r = 1 shared vs independent rel %.2e; planted support ",
               worst, rel) +
               (c ? "recovered" : "not recovered"));
}

// 6 -------------------------------------------------------------------------

struct PhysicsOutcome {
    bool rest_valid = false, float_invalid = false, incline_invalid = false, resettle_ok = false;
    std::vector<double> signature; // final poses, for the determinism comparison
};

PhysicsOutcome physics_once() {
    PhysicsOutcome o;
    const SimParams sp;
    const PointCloud cube = generate_object({ObjectClass::box, {}, 40000.0}, 1);
    const PointCloud plane = generate_env({EnvClass::flat, {}, 40000.0}, 2);
    double bottom = 1.0;
    for (const auto &p : cube.points)
        bottom = std::min(bottom, p.z());
    auto keep = [&](const SettleResult &r) {
        o.signature.insert(o.signature.end(), {r.final.position.x(), r.final.position.y(), r.final.position.z(),
                                               r.final.orientation.w(), static_cast<double>(r.steps)});
    };

    const Placement rest{Point3(0, 0, -bottom), Rotation(), 0};
    const auto r1 = settle(cube, rest, plane, sp);
    o.rest_valid = label_validity(rest, r1, sp.validity_delta);
    keep(r1);

    const Placement floating{Point3(0, 0, -bottom + 0.1), Rotation(), 0};
    const auto r2 = settle(cube, floating, plane, sp);
    o.float_invalid = !label_validity(floating, r2, sp.validity_delta);
    keep(r2);

    SimParams slick = sp;
    slick.friction = 0.0;
    const PointCloud ball = generate_object({ObjectClass::sphere, {}, 40000.0}, 3);
    const PointCloud ramp = generate_env({EnvClass::incline, {}, 40000.0}, 4);
    const double a = deg2rad(20);
    const Placement on_ramp{0.031 * Point3(-std::sin(a), 0, std::cos(a)), Rotation(), 0};
    const auto r3 = settle(ball, on_ramp, ramp, slick);
    o.incline_invalid = !label_validity(on_ramp, r3, slick.validity_delta);
    keep(r3);

    const Placement tilted{Point3(0, 0, -bottom + 0.02), Rotation::axis_angle(Point3(0, 1, 0), 0.05), 0};
    const auto r4 = settle(cube, tilted, plane, sp);
    const Placement again{r4.final.position, r4.final.orientation, 0};
    const auto r5 = settle(cube, again, plane, sp);
    o.resettle_ok = r4.converged && r5.converged && pose_displacement2(again, r5.final) <= 2.0 * sp.energy_delta;
    keep(r4);
    keep(r5);
    return o;
}

void physics_criteria() {
    const auto a = physics_once();
    const auto b = physics_once();
    const bool det = a.signature == b.signature;
    report(6, a.rest_valid && a.float_invalid && a.incline_invalid && a.resettle_ok && det,
           std::string("cube at rest ") + (a.rest_valid ? "valid" : "INVALID") + ", floating cube " +
               (a.float_invalid ? "invalid" : "VALID") + ", frictionless sphere on incline " +
               (a.incline_invalid ? "invalid" : "VALID") + ", re-settle " + (a.resettle_ok ? "within" : "OUTSIDE") +
               " 2x tolerance, " + (det ? "deterministic" : "NOT deterministic"));
}

// 7 -------------------------------------------------------------------------

void chance_criterion() {
    const int v = 200;
    std::vector<bool> valid(static_cast<std::size_t>(v), false), stable(static_cast<std::size_t>(v), false);
    valid[57] = true;
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 10000; ++s)
        sum += rank_metrics(chance_order(static_cast<std::size_t>(v), mix_seed(99, s)), valid, stable, 5).r0;
    const double mean = sum / 10000.0, expect = (v + 1) / 2.0;
    report(7, std::abs(mean - expect) <= 0.05 * expect,
           fmt("chance mean R0 %.2f vs (V+1)/2 = %.1f over 10000 seeds, V = %.0f", mean, expect, v));
}

} // namespace

int main(int argc, char **argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <work-dir>\n");
        return 2;
    }
    const fs::path work = argv[1];
    fs::create_directories(work);
    std::ofstream log(work / "pipeline.log");
    feature_layout();
    corpus_criteria(work, log);
    solver_criteria();
    physics_criteria();
    chance_criterion();
    reproducibility(work, log);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
