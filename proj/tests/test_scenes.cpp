#include "placing/config.hpp"
#include "placing/scenes.hpp"

#include "catch_amalgamated.hpp"

#include <fstream>

using namespace placing;

namespace {

const ObjectClass kObjects[] = {ObjectClass::plate, ObjectClass::bowl,      ObjectClass::mug,  ObjectClass::martini,
                                ObjectClass::rod,   ObjectClass::hook_item, ObjectClass::disc, ObjectClass::fork,
                                ObjectClass::box,   ObjectClass::sphere};
const EnvClass kEnvs[] = {EnvClass::flat,     EnvClass::rack_slots,      EnvClass::pen_holder,
                          EnvClass::hook_bar, EnvClass::stemware_holder, EnvClass::incline};

} // namespace

TEST_CASE("every object class generates a centered local cloud") {
    for (auto c : kObjects) {
        INFO(to_string(c));
        const auto cloud = generate_object({c, {}, 50000.0}, 7);
        REQUIRE(cloud.frame == Frame::object_local);
        REQUIRE(cloud.size() >= 200);
        Point3 mean = Point3::Zero();
        for (const auto &p : cloud.points) {
            REQUIRE(p.allFinite());
            mean += p;
        }
        REQUIRE((mean / static_cast<double>(cloud.size())).norm() < 1e-12);
    }
}

TEST_CASE("every environment class generates a world cloud") {
    for (auto e : kEnvs) {
        INFO(to_string(e));
        const auto cloud = generate_env({e, {}, 40000.0}, 7);
        REQUIRE(cloud.frame == Frame::world);
        REQUIRE(cloud.size() >= 500);
    }
}

TEST_CASE("generation is deterministic per seed") {
    const auto a = generate_object({ObjectClass::mug, {}, 10000.0}, 3);
    const auto b = generate_object({ObjectClass::mug, {}, 10000.0}, 3);
    const auto c = generate_object({ObjectClass::mug, {}, 10000.0}, 4);
    REQUIRE(a.points == b.points);
    REQUIRE(a.points != c.points);
}

TEST_CASE("flat table is a plane at z = 0") {
    const auto env = generate_env({EnvClass::flat, {}, 40000.0}, 1);
    for (const auto &p : env.points) {
        REQUIRE(std::abs(p.z()) < 1e-3);
        REQUIRE(std::abs(p.x()) <= 0.25 + 1e-12);
    }
}

TEST_CASE("plate points lie within its radius and thickness") {
    const ObjectSpec spec{ObjectClass::plate, {}, 10000.0};
    const auto cloud = generate_object(spec, 2);
    for (const auto &p : cloud.points) {
        REQUIRE(std::hypot(p.x(), p.y()) <= spec.dim("radius") + 1e-9);
        REQUIRE(std::abs(p.z()) <= 0.5 * spec.dim("thickness") + 1e-9);
    }
}

TEST_CASE("rod bounding box matches its dimensions") {
    const ObjectSpec spec{ObjectClass::rod, {{"length", 0.2}}, 50000.0};
    const Aabb box = Aabb::of(generate_object(spec, 5));
    REQUIRE(std::abs(box.extents().z() - 0.2) < 1e-9);
    REQUIRE(box.extents().x() <= 2 * spec.dim("radius") + 1e-9);
    REQUIRE(box.extents().x() > 1.5 * spec.dim("radius"));
}

TEST_CASE("bad dimensions are rejected") {
    REQUIRE_THROWS_WITH(generate_object({ObjectClass::rod, {{"radius", 0.0}}, 50000.0}, 1),
                        "degenerate dimension 'radius'");
    REQUIRE_THROWS_WITH(generate_object({ObjectClass::disc, {{"hole_radius", 0.2}}, 50000.0}, 1),
                        "degenerate dimension 'hole_radius'");
    REQUIRE_THROWS(generate_object({ObjectClass::plate, {}, 100.0}, 1));
    REQUIRE_THROWS(ObjectSpec{ObjectClass::plate, {}, 1.0}.dim("nope"));
}

TEST_CASE("preference rules") {
    const auto rules = default_preference_rules();
    PlacingTask t;
    t.object.cls = ObjectClass::plate;
    t.env.cls = EnvClass::flat;
    Placement upright{Point3(0, 0, 0.01), Rotation(), 0};
    Placement flipped{Point3(0, 0, 0.01), Rotation::axis_angle(Point3::UnitX(), std::numbers::pi), 0};
    REQUIRE(preference_label(rules, t, upright, true));
    REQUIRE_FALSE(preference_label(rules, t, upright, false));
    REQUIRE_FALSE(preference_label(rules, t, flipped, true));

    // Within and beyond the 20 degree cone.
    Placement tilt15{Point3::Zero(), Rotation::axis_angle(Point3::UnitY(), deg2rad(15)), 0};
    Placement tilt25{Point3::Zero(), Rotation::axis_angle(Point3::UnitY(), deg2rad(25)), 0};
    REQUIRE(preference_label(rules, t, tilt15, true));
    REQUIRE_FALSE(preference_label(rules, t, tilt25, true));

    t.object.cls = ObjectClass::rod;
    t.env.cls = EnvClass::pen_holder;
    Placement deep{Point3(0, 0, 0.05), Rotation(), 0};
    Placement high{Point3(0, 0, 0.3), Rotation(), 0};
    REQUIRE(preference_label(rules, t, deep, true));
    REQUIRE_FALSE(preference_label(rules, t, high, true));

    t.object.cls = ObjectClass::box;
    REQUIRE_THROWS_WITH(preference_label(rules, t, deep, true), "no preference rule");
}

TEST_CASE("default corpus") {
    const auto cfg = default_config();
    REQUIRE_NOTHROW(cfg.validate());
    REQUIRE(cfg.objects.size() == 6);
    REQUIRE(cfg.environments.size() == 5);
    const auto tasks = cfg.tasks();
    REQUIRE(tasks.size() == 10);
    for (std::size_t i = 1; i < tasks.size(); ++i)
        REQUIRE(tasks[i - 1].task_id < tasks[i].task_id);
    for (const auto &t : tasks)
        REQUIRE(t.task_id == 6 * t.env_index + t.object_index);
}

TEST_CASE("config JSON round trip and validation") {
    const auto cfg = default_config();
    const nlohmann::json j = cfg;
    const PipelineConfig back = j.get<PipelineConfig>();
    REQUIRE(nlohmann::json(back) == j);

    auto bad = cfg;
    bad.mask.pop_back();
    REQUIRE_THROWS(bad.validate());
    bad = cfg;
    bad.schema_version = 99;
    REQUIRE_THROWS(bad.validate());
    bad = cfg;
    bad.hyper.C = -1.0;
    REQUIRE_THROWS(bad.validate());
}

TEST_CASE("shipped default config matches the built-in one") {
    std::ifstream in(std::string(PLACING_CONFIG_DIR) + "/default.json");
    REQUIRE(in.good());
    const auto shipped = nlohmann::json::parse(in).get<PipelineConfig>();
    REQUIRE_NOTHROW(shipped.validate());
    REQUIRE(nlohmann::json(shipped) == nlohmann::json(default_config()));
}
