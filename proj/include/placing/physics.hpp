#pragma once

// Rigid-body settling of one object against a static point-cloud environment,
// with penalty (spring-damper) contacts and Coulomb-capped tangential springs.

#include "placing/geom.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace placing {

struct RigidState {
    Point3 position = Point3::Zero(); // T, origin of the object-local frame
    Rotation orientation;             // R
    Point3 linear_velocity = Point3::Zero();
    Point3 angular_velocity = Point3::Zero(); // world frame
};

struct SimParams {
    double timestep = 1e-3;
    double energy_delta = 1e-6;   // J
    double validity_delta = 0.01; // m^2 + rad^2
    int max_steps = 20000;
    // Whole-body contact spring and damper, split evenly over the active contacts.
    double stiffness = 5e3; // N/m
    double damping = 50.0;  // N s/m
    double friction = 0.5;
    /// Velocity-proportional drag (1/s) on both linear and angular motion, so that
    /// objects swinging on a rolling contact come to rest.
    double drag = 2.0;
    double gravity = 9.81;
    double mass = 0.2;
    /// Consecutive quiet steps required before declaring convergence.
    int quiet_steps = 50;
    /// Contact band around thin features, whose local centroid lies inside them.
    /// Planar patches push back only once penetrated.
    double skin = 0.003;
    /// Kernel radius of the local surface estimate.
    double surface_radius = 0.01;
    /// Voxel size of the static contact structure.
    double voxel = 0.005;
    /// Object points used for contact (farthest-point subsample).
    int contact_points = 256;
    /// Stop (not converged) once the center of mass is this far below the
    /// environment's lowest point.
    double escape_depth = 0.1;
    /// When > 0, stop (not converged) once the squared pose displacement exceeds
    /// this multiple of validity_delta. 0 disables the early exit.
    double abort_factor = 0.0;

    void validate() const {
        if (!(timestep > 0.0) || !(energy_delta > 0.0) || !(validity_delta > 0.0) || max_steps < 1 ||
            !(mass > 0.0) || stiffness < 0.0 || damping < 0.0 || drag < 0.0 || friction < 0.0 || quiet_steps < 1 ||
            contact_points < 3)
            throw std::invalid_argument("invalid simulation parameters");
    }
};

struct SettleResult {
    RigidState final;
    std::vector<double> energy_trace; // kinetic energy after each step
    bool converged = false;
    bool escaped = false; // fell away from the environment
    bool aborted = false; // displacement early exit
    int steps = 0;
};

/// 1/2 m |v|^2 + 1/2 w^T I w, with I the world-frame inertia.
inline double kinetic_energy(const RigidState &s, double mass, const Matrix3 &inertia) {
    if (!(mass > 0.0))
        throw std::invalid_argument("kinetic_energy: mass must be positive");
    if (!inertia.isApprox(inertia.transpose(), 1e-12) || Eigen::LLT<Matrix3>(inertia).info() != Eigen::Success)
        throw std::invalid_argument("kinetic_energy: inertia must be symmetric positive-definite");
    return 0.5 * mass * s.linear_velocity.squaredNorm() +
           0.5 * s.angular_velocity.dot(inertia * s.angular_velocity);
}

inline double pose_displacement2(const Placement &start, const RigidState &final) {
    const double ang = start.orientation.angle_to(final.orientation);
    return (final.position - start.location).squaredNorm() + ang * ang;
}

/// Valid iff settled and |T_s - T0|^2 + angle(R_s, R0)^2 < delta_s.
inline bool label_validity(const Placement &start, const SettleResult &result, double validity_delta) {
    return result.converged && pose_displacement2(start, result.final) < validity_delta;
}

/// Deterministic farthest-point subsample starting from the point farthest from
/// the centroid.
inline std::vector<Point3> farthest_point_subsample(const std::vector<Point3> &pts, std::size_t count) {
    if (pts.size() <= count)
        return pts;
    Point3 c = Point3::Zero();
    for (const auto &p : pts)
        c += p;
    c /= static_cast<double>(pts.size());
    std::size_t first = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if ((pts[i] - c).squaredNorm() > (pts[first] - c).squaredNorm())
            first = i;
    std::vector<double> dist(pts.size(), std::numeric_limits<double>::infinity());
    std::vector<Point3> out;
    out.reserve(count);
    std::size_t cur = first;
    for (std::size_t n = 0; n < count; ++n) {
        out.push_back(pts[cur]);
        std::size_t next = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            dist[i] = std::min(dist[i], (pts[i] - pts[cur]).squaredNorm());
            if (dist[i] > best) {
                best = dist[i];
                next = i;
            }
        }
        cur = next;
    }
    return out;
}

/// Mass properties of a cloud treated as equal point masses.
struct MassProperties {
    double mass = 0.0;
    Point3 center = Point3::Zero(); // object-local
    Matrix3 inertia = Matrix3::Zero(); // about the center, object-local axes

    static MassProperties of(const std::vector<Point3> &pts, double mass) {
        if (pts.size() < 3)
            throw std::invalid_argument("degenerate inertia");
        MassProperties mp;
        mp.mass = mass;
        for (const auto &p : pts)
            mp.center += p;
        mp.center /= static_cast<double>(pts.size());
        const double m = mass / static_cast<double>(pts.size());
        for (const auto &p : pts) {
            const Point3 r = p - mp.center;
            mp.inertia += m * (r.squaredNorm() * Matrix3::Identity() - r * r.transpose());
        }
        const Eigen::SelfAdjointEigenSolver<Matrix3> es(mp.inertia);
        const double top = es.eigenvalues().maxCoeff();
        if (!(top > 0.0) || es.eigenvalues().minCoeff() <= 1e-9 * top)
            throw std::invalid_argument("degenerate inertia");
        return mp;
    }
};

/// Static contact structure for an environment: each 5 mm voxel lists the
/// environment points that can lie within the kernel radius of any point in it.
/// The local surface at q is the kernel-weighted centroid of nearby points.
class ContactField {
  public:
    ContactField() = default;

    ContactField(const PointCloud &env, double voxel, double radius) : voxel_(voxel), radius_(radius) {
        if (env.empty())
            return;
        pts_ = env.points;
        const Aabb box = Aabb::of(pts_);
        origin_ = box.min - Point3::Constant(radius_);
        for (int a = 0; a < 3; ++a)
            dims_[a] = static_cast<int>(std::floor((box.extents()[a] + 2.0 * radius_) / voxel_)) + 1;
        min_z_ = box.min.z();
        const std::size_t ncell = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
        const double reach = radius_ + 0.5 * std::sqrt(3.0) * voxel_;
        std::vector<std::vector<std::uint32_t>> lists(ncell);
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            const Point3 &p = pts_[i];
            int lo[3], hi[3];
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::max(0, static_cast<int>(std::floor((p[a] - reach - origin_[a]) / voxel_)));
                hi[a] = std::min(dims_[a] - 1, static_cast<int>(std::floor((p[a] + reach - origin_[a]) / voxel_)));
            }
            for (int z = lo[2]; z <= hi[2]; ++z)
                for (int y = lo[1]; y <= hi[1]; ++y)
                    for (int x = lo[0]; x <= hi[0]; ++x) {
                        const Point3 cc = origin_ + voxel_ * Point3(x + 0.5, y + 0.5, z + 0.5);
                        if ((cc - p).norm() <= reach)
                            lists[flat(x, y, z)].push_back(static_cast<std::uint32_t>(i));
                    }
        }
        start_.assign(ncell + 1, 0);
        for (std::size_t c = 0; c < ncell; ++c)
            start_[c + 1] = start_[c] + static_cast<std::uint32_t>(lists[c].size());
        items_.reserve(start_.back());
        for (auto &l : lists)
            items_.insert(items_.end(), l.begin(), l.end());
    }

    bool empty() const noexcept { return pts_.empty(); }
    double min_z() const noexcept { return min_z_; }

    /// Local surface point near q; false if no environment point is within the radius.
    bool surface(const Point3 &q, Point3 &centroid) const {
        Point3 n;
        bool planar;
        return surface(q, centroid, n, planar);
    }

    /// As above, plus the local surface normal (unsigned) and whether the
    /// neighbourhood is a planar patch rather than a thin or curved feature.
    bool surface(const Point3 &q, Point3 &centroid, Point3 &normal, bool &planar) const {
        if (pts_.empty())
            return false;
        int idx[3];
        for (int a = 0; a < 3; ++a) {
            idx[a] = static_cast<int>(std::floor((q[a] - origin_[a]) / voxel_));
            if (idx[a] < 0 || idx[a] >= dims_[a])
                return false;
        }
        const std::size_t c = flat(idx[0], idx[1], idx[2]);
        if (start_[c] == start_[c + 1])
            return false;
        const double r2 = radius_ * radius_;
        double wsum = 0.0;
        Point3 acc = Point3::Zero();
        for (std::uint32_t j = start_[c]; j < start_[c + 1]; ++j) {
            const Point3 &x = pts_[items_[j]];
            const double d2 = (x - q).squaredNorm();
            if (d2 >= r2)
                continue;
            const double t = 1.0 - d2 / r2;
            const double w = t * t * t;
            wsum += w;
            acc += w * x;
        }
        if (wsum <= 0.0)
            return false;
        centroid = acc / wsum;
        Matrix3 cov = Matrix3::Zero();
        for (std::uint32_t j = start_[c]; j < start_[c + 1]; ++j) {
            const Point3 &x = pts_[items_[j]];
            const double d2 = (x - q).squaredNorm();
            if (d2 >= r2)
                continue;
            const double t = 1.0 - d2 / r2;
            const Point3 e = x - centroid;
            cov += (t * t * t) * (e * e.transpose());
        }
        Eigen::SelfAdjointEigenSolver<Matrix3> es;
        es.computeDirect(cov / wsum);
        const auto &ev = es.eigenvalues();
        normal = es.eigenvectors().col(0);
        const double spread = 0.1 * radius_;
        planar = ev[1] >= spread * spread && ev[0] <= kPlanarRatio * ev[1] && ev[1] >= kSpreadRatio * ev[2];
        return true;
    }

    static constexpr double kPlanarRatio = 0.05;
    static constexpr double kSpreadRatio = 0.2;

  private:
    std::size_t flat(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
    }

    std::vector<Point3> pts_;
    double voxel_ = 0.005;
    double radius_ = 0.01;
    double min_z_ = 0.0;
    Point3 origin_ = Point3::Zero();
    int dims_[3] = {0, 0, 0};
    std::vector<std::uint32_t> start_;
    std::vector<std::uint32_t> items_;
};

/// An object prepared for simulation against one environment.
class SettleModel {
  public:
    SettleModel(const PointCloud &object, const ContactField &field, const SimParams &params)
        : field_(&field), params_(params) {
        params_.validate();
        if (object.empty())
            throw std::invalid_argument("settle: empty object");
        mp_ = MassProperties::of(object.points, params_.mass);
        contact_ = farthest_point_subsample(object.points, static_cast<std::size_t>(params_.contact_points));
        inertia_inv_ = mp_.inertia.inverse();
    }

    const MassProperties &mass_properties() const noexcept { return mp_; }
    const SimParams &params() const noexcept { return params_; }

    SettleResult settle(const Placement &start, std::ostream *trajectory = nullptr) const;

  private:
    const ContactField *field_;
    SimParams params_;
    MassProperties mp_;
    Matrix3 inertia_inv_;
    std::vector<Point3> contact_;
};

inline SettleResult SettleModel::settle(const Placement &start, std::ostream *trajectory) const {
    const SimParams &sp = params_;
    const double dt = sp.timestep;
    const std::size_t nc = contact_.size();

    // Integrated state: center of mass position / velocity, orientation, world angular velocity.
    Eigen::Quaterniond q = start.orientation.quaternion();
    Point3 x = start.location + q * mp_.center;
    Point3 v = Point3::Zero();
    Point3 w = Point3::Zero();

    std::vector<Point3> normal(nc, Point3::Zero());
    std::vector<Point3> spring(nc, Point3::Zero());
    std::vector<char> near(nc, 0);
    std::vector<Point3> arm(nc), pos(nc);
    std::vector<double> pen(nc);
    std::vector<char> touching(nc);

    SettleResult res;
    res.energy_trace.reserve(1024);
    double prev_e = 0.0;
    int quiet = 0;

    auto make_state = [&](RigidState &s) {
        s.orientation = Rotation::normalized(q);
        s.position = x - (q * mp_.center);
        s.linear_velocity = v;
        s.angular_velocity = w;
    };

    for (int step = 1; step <= sp.max_steps; ++step) {
        const Matrix3 rot = q.toRotationMatrix();
        Point3 force(0.0, 0.0, -sp.gravity * mp_.mass);
        Point3 torque = Point3::Zero();

        int active = 0;
        for (std::size_t i = 0; i < nc; ++i) {
            arm[i] = rot * (contact_[i] - mp_.center);
            pos[i] = x + arm[i];
            touching[i] = 0;
            Point3 c, pn;
            bool planar = false;
            if (!field_->surface(pos[i], c, pn, planar)) {
                near[i] = 0;
                spring[i].setZero();
                continue;
            }
            const Point3 d = pos[i] - c;
            const double len = d.norm();
            Point3 n;
            if (planar) {
                // The centroid lies on the patch, so the spring rests on the surface.
                // The normal keeps its previous side; a fresh contact faces the
                // center of mass.
                n = pn;
                if (near[i] && std::abs(n.dot(normal[i])) > 0.5)
                    n = n.dot(normal[i]) < 0.0 ? Point3(-n) : n;
                else
                    n = n.dot(x - c) < 0.0 ? Point3(-n) : n;
            } else {
                // Thin features (tines, bars): the centroid sits near the axis, so
                // the skin stands in for the feature radius.
                n = len > 1e-12 ? Point3(d / len) : (near[i] ? normal[i] : Point3::UnitZ());
                if (near[i] && n.dot(normal[i]) < 0.0)
                    n = -n;
            }
            normal[i] = n;
            near[i] = 1;
            const double s = d.dot(n);
            const double p_i = planar ? -s : sp.skin - s;
            if (p_i > 0.0) {
                pen[i] = p_i;
                touching[i] = 1;
                ++active;
            } else {
                spring[i].setZero();
            }
        }

        if (active > 0) {
            const double k_share = sp.stiffness / active;
            const double c_share = sp.damping / active;
            for (std::size_t i = 0; i < nc; ++i) {
                if (!touching[i])
                    continue;
                const Point3 &n = normal[i];
                const Point3 vp = v + w.cross(arm[i]);
                const double vn = vp.dot(n);
                const double fn = std::max(0.0, k_share * pen[i] - c_share * vn);
                const Point3 vt = vp - vn * n;
                Point3 &u = spring[i];
                u -= u.dot(n) * n;
                u += vt * dt;
                Point3 ft = -k_share * u - c_share * vt;
                const double cap = sp.friction * fn;
                const double ftn = ft.norm();
                if (ftn > cap) {
                    ft *= (ftn > 0.0 ? cap / ftn : 0.0);
                    if (k_share > 0.0)
                        u = -(ft + c_share * vt) / k_share;
                    if (cap == 0.0)
                        u.setZero();
                }
                const Point3 f = fn * n + ft;
                force += f;
                torque += arm[i].cross(f);
            }
        }

        // Semi-implicit Euler.
        const Matrix3 iw = rot * mp_.inertia * rot.transpose();
        force -= sp.drag * mp_.mass * v;
        torque -= sp.drag * (iw * w);
        v += dt * force / mp_.mass;
        const Matrix3 iw_inv = rot * inertia_inv_ * rot.transpose();
        w += dt * (iw_inv * (torque - w.cross(iw * w)));
        x += dt * v;
        const Eigen::Quaterniond dq(0.0, w.x(), w.y(), w.z());
        q.coeffs() += 0.5 * dt * (dq * q).coeffs();
        q.normalize();

        const double e = 0.5 * mp_.mass * v.squaredNorm() + 0.5 * w.dot(iw * w);
        res.energy_trace.push_back(e);
        res.steps = step;

        if (trajectory) {
            RigidState s;
            make_state(s);
            char buf[256];
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", step, e,
                          s.position.x(), s.position.y(), s.position.z(), s.orientation.w(),
                          s.orientation.x(), s.orientation.y(), s.orientation.z());
            *trajectory << buf;
        }

        if (std::abs(e - prev_e) < sp.energy_delta && e < sp.energy_delta)
            ++quiet;
        else
            quiet = 0;
        prev_e = e;
        if (quiet >= sp.quiet_steps) {
            res.converged = true;
            break;
        }
        if (x.z() < field_->min_z() - sp.escape_depth) {
            res.escaped = true;
            break;
        }
        if (sp.abort_factor > 0.0) {
            RigidState s;
            make_state(s);
            if (pose_displacement2(start, s) > sp.abort_factor * sp.validity_delta) {
                res.aborted = true;
                break;
            }
        }
    }
    make_state(res.final);
    return res;
}

inline SettleResult settle(const PointCloud &object, const Placement &start, const PointCloud &env,
                           const SimParams &params, std::ostream *trajectory = nullptr) {
    const ContactField field(env, params.voxel, params.surface_radius);
    return SettleModel(object, field, params).settle(start, trajectory);
}

inline constexpr const char *kTrajectoryHeader = "step,E_n,Tx,Ty,Tz,qw,qx,qy,qz\n";

} // namespace placing
