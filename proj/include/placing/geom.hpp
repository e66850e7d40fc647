#pragma once

// Point clouds and rigid transforms; candidate sampling with a collision filter.
// World frame: z is vertical, gravity points along -z. Units are meters.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace placing {

using Point3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

enum class Frame { object_local, world };

struct PointCloud {
    std::vector<Point3> points;
    Frame frame = Frame::world;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Unit quaternion, canonicalized so that w >= 0.
class Rotation {
  public:
    Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}

    /// Throws std::invalid_argument("invalid rotation") unless |q| = 1 within 1e-9.
    static Rotation from_wxyz(double w, double x, double y, double z) {
        Eigen::Quaterniond q(w, x, y, z);
        if (!std::isfinite(q.norm()) || std::abs(q.norm() - 1.0) > 1e-9)
            throw std::invalid_argument("invalid rotation");
        return Rotation(q);
    }

    /// Normalizes its input; use for quaternions produced by integration.
    static Rotation normalized(const Eigen::Quaterniond &q) {
        const double n = q.norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw std::invalid_argument("invalid rotation");
        return Rotation(Eigen::Quaterniond(q.coeffs() / n));
    }

    static Rotation axis_angle(const Point3 &axis, double angle) {
        return normalized(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
    }

    static Rotation from_matrix(const Matrix3 &m) { return normalized(Eigen::Quaterniond(m)); }

    double w() const noexcept { return q_.w(); }
    double x() const noexcept { return q_.x(); }
    double y() const noexcept { return q_.y(); }
    double z() const noexcept { return q_.z(); }

    const Eigen::Quaterniond &quaternion() const noexcept { return q_; }
    Matrix3 matrix() const { return q_.toRotationMatrix(); }
    Point3 apply(const Point3 &p) const { return q_ * p; }

    Rotation operator*(const Rotation &rhs) const { return normalized(q_ * rhs.q_); }
    Rotation inverse() const { return Rotation(q_.conjugate()); }

    /// Geodesic angle in radians, aware of the q / -q double cover.
    double angle_to(const Rotation &other) const {
        const double d = std::min(1.0, std::abs(q_.dot(other.q_)));
        return 2.0 * std::acos(d);
    }

  private:
    explicit Rotation(const Eigen::Quaterniond &q) : q_(q) {
        if (q_.w() < 0.0)
            q_.coeffs() *= -1.0;
    }
    Eigen::Quaterniond q_;
};

struct Placement {
    Point3 location = Point3::Zero();
    Rotation orientation;
    int candidate_id = 0;
};

struct Aabb {
    Point3 min = Point3::Zero();
    Point3 max = Point3::Zero();

    static Aabb of(const std::vector<Point3> &pts) {
        if (pts.empty())
            throw std::invalid_argument("bounding box of an empty point cloud");
        Aabb box{pts.front(), pts.front()};
        for (const auto &p : pts) {
            box.min = box.min.cwiseMin(p);
            box.max = box.max.cwiseMax(p);
        }
        return box;
    }
    static Aabb of(const PointCloud &cloud) { return of(cloud.points); }

    Point3 center() const { return 0.5 * (min + max); }
    Point3 extents() const { return max - min; }

    /// Box scaled by `factor` about its center.
    Aabb scaled(double factor) const {
        const Point3 c = center();
        const Point3 h = 0.5 * factor * extents();
        return {c - h, c + h};
    }
    bool contains(const Point3 &p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
};

inline bool all_finite(const Point3 &p) { return p.allFinite(); }

/// Poses an object-local cloud: each point becomes R0 * p + T0, order preserved.
inline PointCloud apply_placement(const PointCloud &object, const Placement &p) {
    if (object.empty())
        throw std::invalid_argument("apply_placement: empty object cloud");
    const auto &q = p.orientation.quaternion();
    if (std::abs(q.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("invalid rotation");
    const Matrix3 r = p.orientation.matrix();
    PointCloud out;
    out.frame = Frame::world;
    out.points.reserve(object.size());
    for (const auto &pt : object.points)
        out.points.push_back(r * pt + p.location);
    return out;
}

/// The 18 sampling orientations: six "up" directions of the object (+z, -z, +x,
/// -x, +y, -y mapped onto world +z), each followed by a yaw of 0, 60 or 120 degrees.
inline std::vector<Rotation> standard_orientations() {
    const std::array<Point3, 6> ups = {Point3::UnitZ(),  Point3(0, 0, -1), Point3::UnitX(),
                                       Point3(-1, 0, 0), Point3::UnitY(),  Point3(0, -1, 0)};
    std::vector<Rotation> out;
    out.reserve(18);
    for (const auto &up : ups) {
        const Rotation tilt =
            Rotation::normalized(Eigen::Quaterniond::FromTwoVectors(up, Point3::UnitZ()));
        for (const double yaw_deg : {0.0, 60.0, 120.0})
            out.push_back(Rotation::axis_angle(Point3::UnitZ(), deg2rad(yaw_deg)) * tilt);
    }
    return out;
}

/// SplitMix64; the only random source, so sequences are identical on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) noexcept {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

  private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a label.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    Rng r(base ^ (salt * 0xD1B54A32D192ED03ull));
    r.next();
    return r.next();
}

/// n_loc locations drawn uniformly in the environment's bounding box, each paired
/// with every orientation. A box shorter than `min_height` is raised to that
/// height so that thin supports (a table top) still leave room above them. Candidate
/// ids run location-major: id = loc * |orientations| + orientation index.
inline std::vector<Placement> sample_candidates(const PointCloud &env, int n_loc,
                                                const std::vector<Rotation> &orientations,
                                                std::uint64_t rng_seed, double min_height = 0.0) {
    if (env.empty())
        throw std::invalid_argument("sample_candidates: empty environment cloud");
    if (n_loc < 1)
        throw std::invalid_argument("sample_candidates: n_loc must be >= 1");
    if (orientations.empty())
        throw std::invalid_argument("sample_candidates: no orientations");
    Aabb box = Aabb::of(env);
    box.max.z() = std::max(box.max.z(), box.min.z() + min_height);
    Rng rng(rng_seed);
    std::vector<Placement> out;
    out.reserve(static_cast<std::size_t>(n_loc) * orientations.size());
    int id = 0;
    for (int i = 0; i < n_loc; ++i) {
        Point3 loc;
        for (int a = 0; a < 3; ++a)
            loc[a] = rng.uniform(box.min[a], box.max[a]);
        for (const auto &r : orientations)
            out.push_back({loc, r, id++});
    }
    return out;
}

/// Uniform voxel grid over a point set, stored as compressed cell lists.
class VoxelGrid {
  public:
    VoxelGrid() = default;

    VoxelGrid(const std::vector<Point3> &pts, double cell) : pts_(&pts), cell_(cell) {
        if (!(cell > 0.0))
            throw std::invalid_argument("VoxelGrid: cell size must be positive");
        if (pts.empty())
            return;
        const Aabb box = Aabb::of(pts);
        origin_ = box.min;
        for (int a = 0; a < 3; ++a)
            dims_[a] = static_cast<int>(std::floor(box.extents()[a] / cell_)) + 1;
        const std::size_t ncell = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
        start_.assign(ncell + 1, 0);
        std::vector<std::uint32_t> cell_of(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            cell_of[i] = static_cast<std::uint32_t>(flat(index_of(pts[i])));
            ++start_[cell_of[i] + 1];
        }
        for (std::size_t c = 0; c < ncell; ++c)
            start_[c + 1] += start_[c];
        items_.resize(pts.size());
        std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
        for (std::size_t i = 0; i < pts.size(); ++i)
            items_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
    }

    bool empty() const noexcept { return items_.empty(); }
    double cell() const noexcept { return cell_; }

    /// Calls fn(index) for every point whose cell overlaps the box [lo, hi].
    template <class Fn> void for_each_in_box(const Point3 &lo, const Point3 &hi, Fn &&fn) const {
        if (items_.empty())
            return;
        std::array<int, 3> a{}, b{};
        for (int k = 0; k < 3; ++k) {
            a[k] = std::max(0, static_cast<int>(std::floor((lo[k] - origin_[k]) / cell_)));
            b[k] = std::min(dims_[k] - 1, static_cast<int>(std::floor((hi[k] - origin_[k]) / cell_)));
            if (a[k] > b[k])
                return;
        }
        for (int z = a[2]; z <= b[2]; ++z)
            for (int y = a[1]; y <= b[1]; ++y)
                for (int x = a[0]; x <= b[0]; ++x) {
                    const std::size_t c = flat({x, y, z});
                    for (std::uint32_t j = start_[c]; j < start_[c + 1]; ++j)
                        fn(static_cast<std::size_t>(items_[j]));
                }
    }

    /// True iff some indexed point lies strictly closer than r to q.
    bool any_within(const Point3 &q, double r) const {
        const Point3 d = Point3::Constant(r);
        bool hit = false;
        const double r2 = r * r;
        for_each_in_box(q - d, q + d, [&](std::size_t i) {
            if (!hit && ((*pts_)[i] - q).squaredNorm() < r2)
                hit = true;
        });
        return hit;
    }

  private:
    std::array<int, 3> index_of(const Point3 &p) const {
        std::array<int, 3> idx{};
        for (int k = 0; k < 3; ++k)
            idx[k] = std::clamp(static_cast<int>(std::floor((p[k] - origin_[k]) / cell_)), 0,
                                dims_[k] - 1);
        return idx;
    }
    std::size_t flat(const std::array<int, 3> &i) const {
        return (static_cast<std::size_t>(i[2]) * dims_[1] + i[1]) * dims_[0] + i[0];
    }

    const std::vector<Point3> *pts_ = nullptr;
    double cell_ = 1.0;
    Point3 origin_ = Point3::Zero();
    std::array<int, 3> dims_{0, 0, 0};
    std::vector<std::uint32_t> start_;
    std::vector<std::uint32_t> items_;
};

/// Keeps candidates whose posed object has no point within `clearance` of an
/// environment point. Output is an order-preserving subsequence of the input.
inline std::vector<Placement> collision_filter(const PointCloud &object, const PointCloud &env,
                                               const std::vector<Placement> &candidates,
                                               double clearance) {
    if (!(clearance > 0.0))
        throw std::invalid_argument("collision_filter: clearance must be positive");
    if (env.empty())
        return candidates;
    const VoxelGrid grid(env.points, std::max(clearance, 0.005));
    const Aabb env_box = Aabb::of(env);
    std::vector<Placement> kept;
    for (const auto &c : candidates) {
        const PointCloud posed = apply_placement(object, c);
        const Aabb ob = Aabb::of(posed);
        const bool overlap = (ob.min.array() - clearance <= env_box.max.array()).all() &&
                             (ob.max.array() + clearance >= env_box.min.array()).all();
        bool hit = false;
        if (overlap) {
            for (const auto &p : posed.points)
                if (grid.any_within(p, clearance)) {
                    hit = true;
                    break;
                }
        }
        if (!hit)
            kept.push_back(c);
    }
    return kept;
}

/// Plain-text cloud: one "x y z" triple per line, '#' starts a comment.
inline PointCloud load_point_cloud(const std::string &path, Frame frame = Frame::world) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open point cloud file: " + path);
    PointCloud cloud;
    cloud.frame = frame;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        std::string tok[3];
        if (!(ls >> tok[0] >> tok[1] >> tok[2]))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected x y z");
        Point3 p;
        for (int k = 0; k < 3; ++k) {
            try {
                p[k] = std::stod(tok[k]);
            } catch (const std::exception &) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number");
            }
        }
        if (!p.allFinite())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-finite coordinate");
        cloud.points.push_back(p);
    }
    return cloud;
}

inline void write_point_cloud(std::ostream &out, const PointCloud &cloud) {
    out << "# x y z (meters)\n";
    char buf[96];
    for (const auto &p : cloud.points) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        out << buf;
    }
}

} // namespace placing
