#include "placing/geom.hpp"
#include "placing/shapes.hpp"

#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace placing;
using Catch::Matchers::WithinAbs;

TEST_CASE("rotation construction rejects non-unit quaternions") {
    REQUIRE_NOTHROW(Rotation::from_wxyz(1, 0, 0, 0));
    REQUIRE_THROWS_WITH(Rotation::from_wxyz(2, 0, 0, 0), "invalid rotation");
    REQUIRE_THROWS_WITH(Rotation::from_wxyz(std::nan(""), 0, 0, 0), "invalid rotation");
}

TEST_CASE("rotation angle respects the double cover") {
    const Rotation a = Rotation::axis_angle(Point3::UnitZ(), deg2rad(30));
    const Eigen::Quaterniond neg(-a.w(), -a.x(), -a.y(), -a.z());
    REQUIRE_THAT(a.angle_to(Rotation::normalized(neg)), WithinAbs(0.0, 1e-7));
    REQUIRE_THAT(a.angle_to(Rotation()), WithinAbs(deg2rad(30), 1e-12));
}

TEST_CASE("apply_placement rotates then translates") {
    PointCloud obj{{Point3(1, 0, 0)}, Frame::object_local};
    Placement p{Point3(0, 0, 1), Rotation::axis_angle(Point3::UnitZ(), std::numbers::pi / 2), 0};
    const auto posed = apply_placement(obj, p);
    REQUIRE(posed.frame == Frame::world);
    REQUIRE_THAT(posed.points[0].x(), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(posed.points[0].y(), WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(posed.points[0].z(), WithinAbs(1.0, 1e-12));
    REQUIRE_THROWS(apply_placement(PointCloud{}, p));
}

TEST_CASE("standard orientations cover six up directions and three yaws") {
    const auto rs = standard_orientations();
    REQUIRE(rs.size() == 18);
    std::set<std::array<long, 3>> ups;
    for (const auto &r : rs) {
        // The object axis that ends up pointing at world +z.
        const Point3 up = r.inverse().apply(Point3::UnitZ());
        ups.insert({std::lround(up.x()), std::lround(up.y()), std::lround(up.z())});
    }
    REQUIRE(ups.size() == 6);
    for (std::size_t i = 0; i < rs.size(); ++i)
        for (std::size_t j = i + 1; j < rs.size(); ++j)
            REQUIRE(rs[i].angle_to(rs[j]) > 1e-3);
}

TEST_CASE("sample_candidates: count, ids, bounds and determinism") {
    Rng rng(5);
    PointCloud env;
    shapes::rect(env.points, -0.2, 0.2, -0.1, 0.1, 0.0, 0.01, rng);
    const auto orients = standard_orientations();
    const auto a = sample_candidates(env, 100, orients, 42, 0.1);
    REQUIRE(a.size() == 1800);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].candidate_id == static_cast<int>(i));
        REQUIRE(a[i].location.x() >= -0.2);
        REQUIRE(a[i].location.x() <= 0.2);
        REQUIRE(a[i].location.z() >= 0.0);
        REQUIRE(a[i].location.z() <= 0.1);
    }
    // Locations are shared across each block of orientations.
    REQUIRE(a[0].location == a[17].location);
    REQUIRE(a[17].location != a[18].location);
    const auto b = sample_candidates(env, 100, orients, 42, 0.1);
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(a[i].location == b[i].location);
    REQUIRE_THROWS(sample_candidates(PointCloud{}, 10, orients, 1));
    REQUIRE_THROWS(sample_candidates(env, 0, orients, 1));
}

TEST_CASE("collision filter keeps an ordered subsequence") {
    PointCloud obj{{Point3::Zero(), Point3(0.01, 0, 0)}, Frame::object_local};
    PointCloud env{{Point3(0, 0, 0)}, Frame::world};
    std::vector<Placement> cands;
    for (int i = 0; i < 5; ++i)
        cands.push_back({Point3(0.1 * i, 0, 0), Rotation(), i});
    const auto kept = collision_filter(obj, env, cands, 0.003);
    // The coincident candidate goes; the rest survive in order.
    REQUIRE(kept.size() == 4);
    for (std::size_t i = 0; i < kept.size(); ++i)
        REQUIRE(kept[i].candidate_id == static_cast<int>(i + 1));
    REQUIRE_THROWS(collision_filter(obj, env, cands, 0.0));
}

TEST_CASE("collision filter agrees with a brute-force distance check") {
    Rng rng(11);
    PointCloud obj, env;
    shapes::sphere(obj.points, 0.03, 0.006, rng);
    shapes::rect(env.points, -0.1, 0.1, -0.1, 0.1, 0.0, 0.005, rng);
    std::vector<Placement> cands;
    for (int i = 0; i < 200; ++i)
        cands.push_back({Point3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.0, 0.06)), Rotation(), i});
    const double clearance = 0.004;
    const auto kept = collision_filter(obj, env, cands, clearance);
    std::vector<int> expect;
    for (const auto &c : cands) {
        bool hit = false;
        for (const auto &p : obj.points)
            for (const auto &e : env.points)
                if ((p + c.location - e).norm() < clearance)
                    hit = true;
        if (!hit)
            expect.push_back(c.candidate_id);
    }
    std::vector<int> got;
    for (const auto &k : kept)
        got.push_back(k.candidate_id);
    REQUIRE(got == expect);
}

TEST_CASE("voxel grid radius queries match brute force") {
    Rng rng(3);
    std::vector<Point3> pts;
    for (int i = 0; i < 500; ++i)
        pts.emplace_back(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0, 0.05));
    const VoxelGrid grid(pts, 0.01);
    for (int t = 0; t < 200; ++t) {
        const Point3 q(rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12), rng.uniform(-0.02, 0.07));
        bool any = false;
        for (const auto &p : pts)
            any = any || (p - q).norm() < 0.008;
        REQUIRE(grid.any_within(q, 0.008) == any);
    }
}

TEST_CASE("Rng streams are reproducible and below() stays in range") {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i)
        REQUIRE(a.next() == b.next());
    Rng c(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(c.below(7) < 7);
    }
    REQUIRE(mix_seed(1, 2) != mix_seed(1, 3));
    REQUIRE(mix_seed(1, 2) == mix_seed(1, 2));
}

TEST_CASE("point cloud text round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "placing_test_geom";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "cloud.xyz").string();
    PointCloud c{{Point3(0.1, -0.2, 0.3), Point3(1e-3, 2e-3, 3e-3)}, Frame::world};
    {
        std::ofstream out(path);
        write_point_cloud(out, c);
    }
    const auto back = load_point_cloud(path);
    REQUIRE(back.size() == 2);
    REQUIRE(back.points[0] == c.points[0]);
    REQUIRE(back.points[1] == c.points[1]);
    {
        std::ofstream out(path);
        out << "1 2\n";
    }
    REQUIRE_THROWS(load_point_cloud(path));
    REQUIRE_THROWS(load_point_cloud((dir / "missing.xyz").string()));
}
