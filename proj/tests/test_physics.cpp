#include "placing/physics.hpp"
#include "placing/scenes.hpp"

#include "catch_amalgamated.hpp"

#include <sstream>

using namespace placing;
using Catch::Matchers::WithinAbs;

namespace {

const PointCloud &cube() {
    static const PointCloud c = generate_object({ObjectClass::box, {}, 40000.0}, 1);
    return c;
}
const PointCloud &floor_plane() {
    static const PointCloud p = generate_env({EnvClass::flat, {}, 40000.0}, 2);
    return p;
}
double cube_bottom() {
    double z = 1.0;
    for (const auto &p : cube().points)
        z = std::min(z, p.z());
    return z;
}

} // namespace

TEST_CASE("kinetic energy") {
    RigidState s;
    REQUIRE(kinetic_energy(s, 1.0, Matrix3::Identity()) == 0.0);
    s.linear_velocity = Point3(1, 0, 0);
    REQUIRE_THAT(kinetic_energy(s, 2.0, Matrix3::Identity()), WithinAbs(1.0, 1e-15));
    s.linear_velocity = Point3(1, 1, 0);
    s.angular_velocity = Point3(0, 0, 2);
    // 1/2 * 1 * 2 + 1/2 * 0.1 * 4
    REQUIRE_THAT(kinetic_energy(s, 1.0, 0.1 * Matrix3::Identity()), WithinAbs(1.2, 1e-15));
    REQUIRE_THROWS(kinetic_energy(s, 1.0, -Matrix3::Identity()));
}

TEST_CASE("label validity thresholds") {
    Placement start{Point3(0, 0, 0.1), Rotation(), 0};
    SettleResult r;
    r.converged = true;
    r.final.position = start.location;
    REQUIRE(label_validity(start, r, 0.01));
    r.final.position = start.location + Point3(std::sqrt(0.01) * 1.1, 0, 0);
    REQUIRE_FALSE(label_validity(start, r, 0.01));
    // 0.02^2 + (10 deg)^2 = 0.0309
    r.final.position = start.location + Point3(0.02, 0, 0);
    r.final.orientation = Rotation::axis_angle(Point3::UnitX(), deg2rad(10));
    const double d2 = 0.02 * 0.02 + deg2rad(10) * deg2rad(10);
    REQUIRE_THAT(pose_displacement2(start, r.final), WithinAbs(d2, 1e-12));
    REQUIRE_FALSE(label_validity(start, r, 0.01));
    REQUIRE(label_validity(start, r, 0.04));
    r.converged = false;
    REQUIRE_FALSE(label_validity(start, r, 0.04));
}

TEST_CASE("degenerate objects are rejected") {
    PointCloud line;
    for (int i = 0; i < 10; ++i)
        line.points.emplace_back(0.01 * i, 0, 0);
    REQUIRE_THROWS_WITH(settle(line, {}, floor_plane(), SimParams{}), "degenerate inertia");
    REQUIRE_THROWS(settle(PointCloud{}, {}, floor_plane(), SimParams{}));
    SimParams bad;
    bad.timestep = 0.0;
    REQUIRE_THROWS(settle(cube(), {}, floor_plane(), bad));
}

TEST_CASE("cube released at rest on a plane stays put") {
    SimParams sp;
    Placement start{Point3(0, 0, -cube_bottom()), Rotation(), 0};
    const auto r = settle(cube(), start, floor_plane(), sp);
    REQUIRE(r.converged);
    REQUIRE((r.final.position - start.location).norm() < 1e-3);
    REQUIRE(start.orientation.angle_to(r.final.orientation) < deg2rad(1));
    REQUIRE(label_validity(start, r, sp.validity_delta));
    REQUIRE(r.energy_trace.size() == static_cast<std::size_t>(r.steps));
    REQUIRE(r.energy_trace.back() < sp.energy_delta);
}

TEST_CASE("cube dropped from 5 mm comes to rest on the plane") {
    SimParams sp;
    Placement start{Point3(0, 0, -cube_bottom() + 0.005), Rotation(), 0};
    const auto r = settle(cube(), start, floor_plane(), sp);
    REQUIRE(r.converged);
    // Resting height: the plane at z = 0 plus a sub-millimetre contact compression.
    REQUIRE_THAT(r.final.position.z(), WithinAbs(-cube_bottom(), 1e-3));
    REQUIRE(std::hypot(r.final.position.x(), r.final.position.y()) < 2e-3);
}

TEST_CASE("settle is deterministic and writes a trajectory") {
    SimParams sp;
    Placement start{Point3(0.01, 0, -cube_bottom() + 0.01), Rotation::axis_angle(Point3(1, 1, 0), 0.1), 0};
    std::ostringstream t1, t2;
    const auto a = settle(cube(), start, floor_plane(), sp, &t1);
    const auto b = settle(cube(), start, floor_plane(), sp, &t2);
    REQUIRE(a.steps == b.steps);
    REQUIRE(a.energy_trace == b.energy_trace);
    REQUIRE(a.final.position == b.final.position);
    REQUIRE(t1.str() == t2.str());
    std::size_t lines = 0;
    for (char c : t1.str())
        lines += c == '\n';
    REQUIRE(lines == static_cast<std::size_t>(a.steps));
}

TEST_CASE("frictionless sphere rolls off a 20 degree incline") {
    SimParams sp;
    sp.friction = 0.0;
    const PointCloud ball = generate_object({ObjectClass::sphere, {}, 40000.0}, 3);
    const PointCloud ramp = generate_env({EnvClass::incline, {}, 40000.0}, 4);
    const double a = deg2rad(20), radius = 0.03;
    Placement start{(radius + 0.001) * Point3(-std::sin(a), 0, std::cos(a)), Rotation(), 0};
    const auto r = settle(ball, start, ramp, sp);
    REQUIRE_FALSE(label_validity(start, r, sp.validity_delta));
    REQUIRE(pose_displacement2(start, r.final) > sp.validity_delta);
}

TEST_CASE("a converged pose is a fixed point") {
    SimParams sp;
    Placement start{Point3(0, 0, -cube_bottom() + 0.02), Rotation::axis_angle(Point3(0, 1, 0), 0.05), 0};
    const auto r = settle(cube(), start, floor_plane(), sp);
    REQUIRE(r.converged);
    Placement again{r.final.position, r.final.orientation, 0};
    const auto r2 = settle(cube(), again, floor_plane(), sp);
    REQUIRE(r2.converged);
    REQUIRE(pose_displacement2(again, r2.final) < 2.0 * 1e-6);
}

TEST_CASE("farthest point subsample is spread out and stable") {
    const auto &pts = cube().points;
    const auto a = farthest_point_subsample(pts, 64);
    const auto b = farthest_point_subsample(pts, 64);
    REQUIRE(a.size() == 64);
    REQUIRE(a == b);
    REQUIRE(farthest_point_subsample(pts, pts.size() + 10).size() == pts.size());
}
