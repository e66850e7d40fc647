#pragma once

// Surface samplers for parametric primitives. Each sampler appends points spaced
// roughly `spacing` apart; `rng` supplies a small phase jitter per ring.

#include "placing/geom.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace placing::shapes {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline int ring_count(double circumference, double spacing) {
    return std::max(3, static_cast<int>(std::lround(circumference / spacing)));
}

/// Circle of radius r at height z about the z axis (centered at cx, cy).
inline void ring(std::vector<Point3> &out, double r, double z, double spacing, Rng &rng, double cx = 0.0,
                 double cy = 0.0) {
    if (r <= 1e-12) {
        out.emplace_back(cx, cy, z);
        return;
    }
    const int n = ring_count(kTwoPi * r, spacing);
    const double phase = rng.uniform() * kTwoPi / n;
    for (int i = 0; i < n; ++i) {
        const double a = phase + kTwoPi * i / n;
        out.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a), z);
    }
}

/// Filled annulus r_in..r_out in the plane z.
inline void annulus(std::vector<Point3> &out, double r_in, double r_out, double z, double spacing, Rng &rng,
                    double cx = 0.0, double cy = 0.0) {
    const int k = std::max(1, static_cast<int>(std::lround((r_out - r_in) / spacing)));
    for (int i = 0; i <= k; ++i)
        ring(out, r_in + (r_out - r_in) * i / k, z, spacing, rng, cx, cy);
}

inline void disk(std::vector<Point3> &out, double r, double z, double spacing, Rng &rng, double cx = 0.0,
                 double cy = 0.0) {
    annulus(out, 0.0, r, z, spacing, rng, cx, cy);
}

/// Lateral surface of a cylinder (z0..z1) about a vertical axis.
inline void cylinder(std::vector<Point3> &out, double r, double z0, double z1, double spacing, Rng &rng,
                     double cx = 0.0, double cy = 0.0) {
    const int k = std::max(1, static_cast<int>(std::lround((z1 - z0) / spacing)));
    for (int i = 0; i <= k; ++i)
        ring(out, r, z0 + (z1 - z0) * i / k, spacing, rng, cx, cy);
}

/// Lateral surface of a truncated cone from (r0, z0) to (r1, z1).
inline void cone(std::vector<Point3> &out, double r0, double z0, double r1, double z1, double spacing,
                 Rng &rng) {
    const double slant = std::hypot(r1 - r0, z1 - z0);
    const int k = std::max(1, static_cast<int>(std::lround(slant / spacing)));
    for (int i = 0; i <= k; ++i) {
        const double t = static_cast<double>(i) / k;
        ring(out, r0 + (r1 - r0) * t, z0 + (z1 - z0) * t, spacing, rng);
    }
}

/// Lower hemispherical shell of radius r whose rim lies in the plane z = 0.
inline void lower_hemisphere(std::vector<Point3> &out, double r, double spacing, Rng &rng) {
    const int k = std::max(2, static_cast<int>(std::lround(0.5 * std::numbers::pi * r / spacing)));
    for (int i = 0; i <= k; ++i) {
        const double polar = 0.5 * std::numbers::pi * i / k; // 0 = bottom pole
        ring(out, r * std::sin(polar), -r * std::cos(polar), spacing, rng);
    }
}

inline void sphere(std::vector<Point3> &out, double r, double spacing, Rng &rng) {
    const int k = std::max(2, static_cast<int>(std::lround(std::numbers::pi * r / spacing)));
    for (int i = 0; i <= k; ++i) {
        const double polar = std::numbers::pi * i / k;
        ring(out, r * std::sin(polar), -r * std::cos(polar), spacing, rng);
    }
}

/// Tube of radius `tube` around a polyline-free straight segment a -> b.
inline void tube(std::vector<Point3> &out, const Point3 &a, const Point3 &b, double radius, double spacing,
                 Rng &rng) {
    const Point3 axis = b - a;
    const double len = axis.norm();
    const Point3 t = axis / len;
    const Point3 helper = std::abs(t.z()) < 0.9 ? Point3::UnitZ() : Point3::UnitX();
    const Point3 u = t.cross(helper).normalized();
    const Point3 v = t.cross(u);
    const int k = std::max(1, static_cast<int>(std::lround(len / spacing)));
    const int m = ring_count(kTwoPi * radius, spacing);
    for (int i = 0; i <= k; ++i) {
        const Point3 c = a + axis * (static_cast<double>(i) / k);
        const double phase = rng.uniform() * kTwoPi / m;
        for (int j = 0; j < m; ++j) {
            const double ang = phase + kTwoPi * j / m;
            out.push_back(c + radius * (std::cos(ang) * u + std::sin(ang) * v));
        }
    }
}

/// Tube bent along a circular arc in the xz plane: center c, arc radius R,
/// polar angle (from +x toward +z) from a0 to a1.
inline void arc_tube(std::vector<Point3> &out, const Point3 &c, double arc_radius, double a0, double a1,
                     double radius, double spacing, Rng &rng) {
    const double len = std::abs(a1 - a0) * arc_radius;
    const int k = std::max(2, static_cast<int>(std::lround(len / spacing)));
    const int m = ring_count(kTwoPi * radius, spacing);
    for (int i = 0; i <= k; ++i) {
        const double a = a0 + (a1 - a0) * i / k;
        const Point3 radial(std::cos(a), 0.0, std::sin(a));
        const Point3 center = c + arc_radius * radial;
        const Point3 side = Point3::UnitY();
        const double phase = rng.uniform() * kTwoPi / m;
        for (int j = 0; j < m; ++j) {
            const double ang = phase + kTwoPi * j / m;
            out.push_back(center + radius * (std::cos(ang) * radial + std::sin(ang) * side));
        }
    }
}

/// Axis-aligned rectangle grid in the plane z.
inline void rect(std::vector<Point3> &out, double x0, double x1, double y0, double y1, double z, double spacing,
                 Rng &rng) {
    const int nx = std::max(1, static_cast<int>(std::lround((x1 - x0) / spacing)));
    const int ny = std::max(1, static_cast<int>(std::lround((y1 - y0) / spacing)));
    const double jitter = 0.1 * spacing;
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= ny; ++j) {
            double x = x0 + (x1 - x0) * i / nx, y = y0 + (y1 - y0) * j / ny;
            if (i > 0 && i < nx)
                x += rng.uniform(-jitter, jitter);
            if (j > 0 && j < ny)
                y += rng.uniform(-jitter, jitter);
            out.emplace_back(x, y, z);
        }
}

/// Surface of an axis-aligned box centered at the origin.
inline void box(std::vector<Point3> &out, const Point3 &half, double spacing) {
    const int n[3] = {std::max(1, static_cast<int>(std::lround(2 * half.x() / spacing))),
                      std::max(1, static_cast<int>(std::lround(2 * half.y() / spacing))),
                      std::max(1, static_cast<int>(std::lround(2 * half.z() / spacing)))};
    for (int i = 0; i <= n[0]; ++i)
        for (int j = 0; j <= n[1]; ++j)
            for (int k = 0; k <= n[2]; ++k) {
                if (i != 0 && i != n[0] && j != 0 && j != n[1] && k != 0 && k != n[2])
                    continue;
                out.emplace_back(-half.x() + 2 * half.x() * i / n[0], -half.y() + 2 * half.y() * j / n[1],
                                 -half.z() + 2 * half.z() * k / n[2]);
            }
}

} // namespace placing::shapes
