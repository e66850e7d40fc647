#pragma once

// The 120-dimensional placement descriptor: supporting contacts (3), caging (21)
// and spherical signatures of geometry (96), concatenated in that order.

#include "placing/geom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace placing {

inline constexpr std::size_t kContactFeatures = 3;
inline constexpr std::size_t kCagingFeatures = 21;
inline constexpr std::size_t kSignatureFeatures = 96;
inline constexpr std::size_t kFeatureCount = kContactFeatures + kCagingFeatures + kSignatureFeatures;
inline constexpr std::size_t kContactOffset = 0;
inline constexpr std::size_t kCagingOffset = kContactOffset + kContactFeatures;
inline constexpr std::size_t kSignatureOffset = kCagingOffset + kCagingFeatures;

/// Sentinel for caging and ratio features whose region holds no points.
inline constexpr double kEmptyRegion = -1.0;

using FeatureVector = std::array<double, kFeatureCount>;

struct FeatureConfig {
    /// Number of smallest vertical gaps summarized; 0 selects max(10, ceil(0.05 n)).
    int k = 0;
    /// Gap assigned to object points with no environment beneath them.
    double cap = 1.0;
    /// Horizontal radius for "environment beneath an object point".
    double support_radius = 0.005;

    int effective_k(std::size_t n) const {
        if (k > 0)
            return k;
        return std::max(10, static_cast<int>(std::ceil(0.05 * static_cast<double>(n))));
    }
};

/// Spatial index over a static environment, reused across candidates.
class EnvIndex {
  public:
    explicit EnvIndex(const PointCloud &env, double cell = 0.01)
        : points_(env.points), grid_(points_, cell) {}

    const std::vector<Point3> &points() const noexcept { return points_; }
    const VoxelGrid &grid() const noexcept { return grid_; }
    bool empty() const noexcept { return points_.empty(); }

  private:
    std::vector<Point3> points_;
    VoxelGrid grid_;
};

// ---------------------------------------------------------------------------
// Supporting contacts

/// Vertical gap from each object point down to the highest environment point within
/// the support radius (horizontally) and not above it; `cap` if there is none.
inline std::vector<double> vertical_gaps(const PointCloud &object, const EnvIndex &env,
                                         const FeatureConfig &cfg) {
    std::vector<double> gaps;
    gaps.reserve(object.size());
    const double r = cfg.support_radius;
    const double r2 = r * r;
    const auto &ep = env.points();
    for (const auto &p : object.points) {
        double best = -std::numeric_limits<double>::infinity();
        env.grid().for_each_in_box(Point3(p.x() - r, p.y() - r, -std::numeric_limits<double>::max()),
                                   Point3(p.x() + r, p.y() + r, p.z()), [&](std::size_t i) {
                                       const Point3 &x = ep[i];
                                       if (x.z() > p.z() || x.z() <= best)
                                           return;
                                       const double dx = x.x() - p.x(), dy = x.y() - p.y();
                                       if (dx * dx + dy * dy <= r2)
                                           best = x.z();
                                   });
        gaps.push_back(std::isfinite(best) ? p.z() - best : cfg.cap);
    }
    return gaps;
}

/// (min, max, variance) of the k smallest gaps; variance divides by k.
inline std::array<double, 3> summarize_smallest(std::vector<double> gaps, int k) {
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), gaps.size());
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(kk - 1), gaps.end());
    std::sort(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(kk));
    double mean = 0.0;
    for (std::size_t i = 0; i < kk; ++i)
        mean += gaps[i];
    mean /= static_cast<double>(kk);
    double var = 0.0;
    for (std::size_t i = 0; i < kk; ++i)
        var += (gaps[i] - mean) * (gaps[i] - mean);
    var /= static_cast<double>(kk);
    return {gaps.front(), gaps[kk - 1], var};
}

inline std::array<double, 3> supporting_contact_features(const PointCloud &object, const EnvIndex &env,
                                                         const FeatureConfig &cfg) {
    if (object.empty())
        throw std::invalid_argument("supporting_contact_features: empty object");
    if (env.empty())
        return {cfg.cap, cfg.cap, 0.0};
    return summarize_smallest(vertical_gaps(object, env, cfg), cfg.effective_k(object.size()));
}

// ---------------------------------------------------------------------------
// Caging

/// 3x3x3 partition around the posed object. Axis 0 of each zone index is the
/// vertical (z), axes 1 and 2 are world x and y. Per axis the boundaries are
/// outer-lo, center-lo, center-hi, outer-hi; a point on a boundary belongs to the
/// lower-index zone.
struct CagingGrid {
    std::array<std::array<double, 4>, 3> edges{};
    double object_bottom = 0.0;
    Point3 object_min = Point3::Zero();
    Point3 object_max = Point3::Zero();

    static CagingGrid around(const Aabb &object_box, double outer_scale = 1.6,
                             double center_scale = 1.05) {
        const Aabb outer = object_box.scaled(outer_scale);
        const Aabb center = object_box.scaled(center_scale);
        CagingGrid g;
        // axis order: vertical, x, y
        const int world_axis[3] = {2, 0, 1};
        for (int a = 0; a < 3; ++a) {
            const int w = world_axis[a];
            g.edges[a] = {outer.min[w], center.min[w], center.max[w], outer.max[w]};
        }
        g.object_bottom = object_box.min.z();
        g.object_min = object_box.min;
        g.object_max = object_box.max;
        return g;
    }

    /// Zone index 0..2 along grid axis a, or -1 outside the outer box.
    int slab(int a, double v) const {
        const auto &e = edges[a];
        if (v < e[0] || v > e[3])
            return -1;
        if (v <= e[1])
            return 0;
        if (v <= e[2])
            return 1;
        return 2;
    }
};

inline std::array<double, 21> caging_features(const PointCloud &object, const EnvIndex &env,
                                              const CagingGrid &grid) {
    std::array<double, 21> f;
    f.fill(kEmptyRegion);
    if (env.empty() || object.empty())
        return f;

    std::array<double, 9> top;
    top.fill(-std::numeric_limits<double>::infinity());
    // Extremes of environment x / y per (vertical layer, slab).
    std::array<double, 3> low_x_max, high_x_min, low_y_max, high_y_min;
    low_x_max.fill(-std::numeric_limits<double>::infinity());
    low_y_max.fill(-std::numeric_limits<double>::infinity());
    high_x_min.fill(std::numeric_limits<double>::infinity());
    high_y_min.fill(std::numeric_limits<double>::infinity());

    const Point3 lo(grid.edges[1][0], grid.edges[2][0], grid.edges[0][0]);
    const Point3 hi(grid.edges[1][3], grid.edges[2][3], grid.edges[0][3]);
    const auto &ep = env.points();
    env.grid().for_each_in_box(lo, hi, [&](std::size_t idx) {
        const Point3 &x = ep[idx];
        const int i = grid.slab(0, x.z());
        const int j = grid.slab(1, x.x());
        const int k = grid.slab(2, x.y());
        if (i < 0 || j < 0 || k < 0)
            return;
        top[3 * j + k] = std::max(top[3 * j + k], x.z());
        if (j == 0)
            low_x_max[i] = std::max(low_x_max[i], x.x());
        if (j == 2)
            high_x_min[i] = std::min(high_x_min[i], x.x());
        if (k == 0)
            low_y_max[i] = std::max(low_y_max[i], x.y());
        if (k == 2)
            high_y_min[i] = std::min(high_y_min[i], x.y());
    });

    for (int r = 0; r < 9; ++r)
        if (std::isfinite(top[r]))
            f[r] = top[r] - grid.object_bottom;

    // min over (object point, env point) pairs of a signed separation reduces to
    // an extreme of each set.
    double ox_min = std::numeric_limits<double>::infinity(), oy_min = ox_min;
    double ox_max = -ox_min, oy_max = -ox_min;
    for (const auto &p : object.points) {
        ox_min = std::min(ox_min, p.x());
        ox_max = std::max(ox_max, p.x());
        oy_min = std::min(oy_min, p.y());
        oy_max = std::max(oy_max, p.y());
    }
    for (int i = 0; i < 3; ++i) {
        double *d = &f[9 + 4 * i];
        if (std::isfinite(low_x_max[i]))
            d[0] = ox_min - low_x_max[i];
        if (std::isfinite(high_x_min[i]))
            d[1] = high_x_min[i] - ox_max;
        if (std::isfinite(low_y_max[i]))
            d[2] = oy_min - low_y_max[i];
        if (std::isfinite(high_y_min[i]))
            d[3] = high_y_min[i] - oy_max;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Signatures of geometry

/// 32 regions by inclination (from +z, 45 degree bands, index a) and azimuth
/// (from +x toward +y in [0, 360), 45 degree bands, index b). Region id = 8a + b.
struct SphericalBins {
    static constexpr int kInclinationBins = 4;
    static constexpr int kAzimuthBins = 8;
    static constexpr int kRegions = kInclinationBins * kAzimuthBins;

    /// Band index for an angle in degrees with ties going to the lower band.
    static int band(double deg, int count) {
        const int b = static_cast<int>(std::ceil(deg / 45.0)) - 1;
        return std::clamp(b, 0, count - 1);
    }

    /// Region of the direction d (need not be normalized); the origin maps to region 0.
    static int region(const Point3 &d) {
        const double horiz = std::hypot(d.x(), d.y());
        const double theta = rad2deg(std::atan2(horiz, d.z()));
        double phi = rad2deg(std::atan2(d.y(), d.x()));
        if (phi < 0.0)
            phi += 360.0;
        if (phi >= 360.0)
            phi -= 360.0;
        return kAzimuthBins * band(theta, kInclinationBins) + band(phi, kAzimuthBins);
    }
};

inline std::array<double, 96> signature_features(const PointCloud &object, const EnvIndex &env,
                                                 const Point3 &p) {
    if (object.empty())
        throw std::invalid_argument("signature_features: empty object");
    constexpr int R = SphericalBins::kRegions;
    std::array<double, 96> f{};
    std::array<double, R> c_max;
    std::array<double, R> t_min;
    c_max.fill(-1.0);
    t_min.fill(std::numeric_limits<double>::infinity());

    double rho_max = 0.0;
    for (const auto &q : object.points) {
        const Point3 d = q - p;
        const double rho = d.norm();
        const int r = SphericalBins::region(d);
        f[r] += 1.0;
        c_max[r] = std::max(c_max[r], rho);
        rho_max = std::max(rho_max, rho);
    }

    const double cutoff = 1.5 * rho_max;
    const double cutoff2 = cutoff * cutoff;
    const auto &ep = env.points();
    env.grid().for_each_in_box(p - Point3::Constant(cutoff), p + Point3::Constant(cutoff),
                               [&](std::size_t i) {
                                   const Point3 d = ep[i] - p;
                                   const double rho2 = d.squaredNorm();
                                   if (rho2 > cutoff2)
                                       return;
                                   const int r = SphericalBins::region(d);
                                   f[R + r] += 1.0;
                                   t_min[r] = std::min(t_min[r], std::sqrt(rho2));
                               });

    // Radii are floored at 1 mm so that a point sitting on p cannot produce a
    // zero or unbounded ratio.
    constexpr double kRadiusFloor = 1e-3;
    for (int r = 0; r < R; ++r) {
        if (c_max[r] >= 0.0 && std::isfinite(t_min[r]))
            f[2 * R + r] = std::max(c_max[r], kRadiusFloor) / std::max(t_min[r], kRadiusFloor);
        else
            f[2 * R + r] = kEmptyRegion;
    }
    return f;
}

// ---------------------------------------------------------------------------

/// Features of an already posed object.
inline FeatureVector extract_posed(const PointCloud &posed, const EnvIndex &env, const Point3 &location,
                                   const FeatureConfig &cfg) {
    FeatureVector v{};
    const auto sc = supporting_contact_features(posed, env, cfg);
    const auto cg = caging_features(posed, env, CagingGrid::around(Aabb::of(posed)));
    const auto sg = signature_features(posed, env, location);
    std::copy(sc.begin(), sc.end(), v.begin() + kContactOffset);
    std::copy(cg.begin(), cg.end(), v.begin() + kCagingOffset);
    std::copy(sg.begin(), sg.end(), v.begin() + kSignatureOffset);
    return v;
}

inline FeatureVector extract(const PointCloud &object, const EnvIndex &env, const Placement &p,
                             const FeatureConfig &cfg) {
    return extract_posed(apply_placement(object, p), env, p.location, cfg);
}

inline FeatureVector extract(const PointCloud &object, const PointCloud &env, const Placement &p,
                             const FeatureConfig &cfg) {
    return extract(object, EnvIndex(env), p, cfg);
}

/// Column names, in vector order.
inline std::vector<std::string> feature_names() {
    std::vector<std::string> n = {"sc_min", "sc_max", "sc_var"};
    for (int r = 0; r < 9; ++r)
        n.push_back("cage_h_" + std::to_string(r));
    for (int i = 1; i <= 3; ++i)
        for (int j = 1; j <= 4; ++j)
            n.push_back("cage_d_" + std::to_string(i) + std::to_string(j));
    for (const char *kind : {"sig_obj_", "sig_env_", "sig_ratio_"})
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 8; ++b)
                n.push_back(kind + std::to_string(a) + "_" + std::to_string(b));
    return n;
}

enum class FeatureFamily : unsigned { contact = 1u, caging = 2u, signature = 4u, all = 7u };

/// Column indices selected by a family bitmask; throws on an empty selection.
inline std::vector<int> feature_columns(unsigned family_mask) {
    std::vector<int> cols;
    auto add = [&](std::size_t off, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
            cols.push_back(static_cast<int>(off + i));
    };
    if (family_mask & static_cast<unsigned>(FeatureFamily::contact))
        add(kContactOffset, kContactFeatures);
    if (family_mask & static_cast<unsigned>(FeatureFamily::caging))
        add(kCagingOffset, kCagingFeatures);
    if (family_mask & static_cast<unsigned>(FeatureFamily::signature))
        add(kSignatureOffset, kSignatureFeatures);
    if (cols.empty())
        throw std::invalid_argument("empty feature set");
    return cols;
}

} // namespace placing
