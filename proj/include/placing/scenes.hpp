#pragma once

// Parametric objects and placing environments, and the preference rule table.

#include "placing/geom.hpp"
#include "placing/shapes.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace placing {

enum class ObjectClass { plate, bowl, mug, martini, rod, disc, hook_item, fork, box, sphere };
enum class EnvClass { flat, rack_slots, pen_holder, hook_bar, stemware_holder, incline };

NLOHMANN_JSON_SERIALIZE_ENUM(ObjectClass, {{ObjectClass::plate, "plate"},
                                           {ObjectClass::bowl, "bowl"},
                                           {ObjectClass::mug, "mug"},
                                           {ObjectClass::martini, "martini"},
                                           {ObjectClass::rod, "rod"},
                                           {ObjectClass::disc, "disc"},
                                           {ObjectClass::hook_item, "hook_item"},
                                           {ObjectClass::fork, "fork"},
                                           {ObjectClass::box, "box"},
                                           {ObjectClass::sphere, "sphere"}})

NLOHMANN_JSON_SERIALIZE_ENUM(EnvClass, {{EnvClass::flat, "flat"},
                                        {EnvClass::rack_slots, "rack_slots"},
                                        {EnvClass::pen_holder, "pen_holder"},
                                        {EnvClass::hook_bar, "hook_bar"},
                                        {EnvClass::stemware_holder, "stemware_holder"},
                                        {EnvClass::incline, "incline"}})

inline std::string to_string(ObjectClass c) { return nlohmann::json(c).get<std::string>(); }
inline std::string to_string(EnvClass c) { return nlohmann::json(c).get<std::string>(); }

using Dims = std::map<std::string, double>;

/// Dimensions in meters; density in points per square meter.
struct ObjectSpec {
    ObjectClass cls = ObjectClass::plate;
    Dims dims;
    double density = 10000.0;

    double dim(const std::string &key) const;
};

struct EnvSpec {
    EnvClass cls = EnvClass::flat;
    Dims dims;
    double density = 40000.0;

    double dim(const std::string &key) const;
};

inline Dims default_dims(ObjectClass c) {
    switch (c) {
    case ObjectClass::plate:
        return {{"radius", 0.1}, {"thickness", 0.005}};
    case ObjectClass::bowl:
        return {{"radius", 0.08}};
    case ObjectClass::mug:
        return {{"radius", 0.04}, {"height", 0.1}, {"handle_radius", 0.025}, {"handle_tube", 0.005}};
    case ObjectClass::martini:
        return {{"foot_radius", 0.035}, {"stem_radius", 0.004}, {"stem_height", 0.08},
                {"bowl_radius", 0.05},  {"bowl_height", 0.06}};
    case ObjectClass::rod:
        return {{"radius", 0.005}, {"length", 0.15}};
    case ObjectClass::disc:
        return {{"radius", 0.05}, {"thickness", 0.01}, {"hole_radius", 0.008}};
    case ObjectClass::hook_item:
        return {{"tube", 0.004}, {"long_leg", 0.08}, {"short_leg", 0.08}, {"bend_radius", 0.02}};
    case ObjectClass::fork:
        return {{"tube", 0.003}, {"handle", 0.07}, {"prong", 0.08}, {"prong_gap", 0.016}};
    case ObjectClass::box:
        return {{"size_x", 0.06}, {"size_y", 0.06}, {"size_z", 0.06}};
    case ObjectClass::sphere:
        return {{"radius", 0.03}};
    }
    return {};
}

inline Dims default_dims(EnvClass c) {
    switch (c) {
    case EnvClass::flat:
        return {{"size", 0.5}};
    case EnvClass::rack_slots:
        return {{"slots", 6},           {"pitch", 0.021}, {"tine_height", 0.15}, {"tine_radius", 0.002},
                {"tine_spacing", 0.03}, {"length", 0.24}, {"top_plate", 0.0}};
    case EnvClass::pen_holder:
        return {{"inner_radius", 0.013}, {"wall", 0.003}, {"height", 0.14}, {"bores", 3}, {"tray", 0.02}};
    case EnvClass::hook_bar:
        return {{"bar_height", 0.2},  {"bar_length", 0.2},   {"bar_radius", 0.004},
                {"post_radius", 0.005}, {"bars", 3},           {"bar_spacing", 0.045}};
    case EnvClass::stemware_holder:
        return {{"rail_gap", 0.032}, {"rail_radius", 0.004}, {"height", 0.18}, {"length", 0.24},
                {"post_radius", 0.005}};
    case EnvClass::incline:
        return {{"size", 0.4}, {"angle_deg", 20.0}};
    }
    return {};
}

inline double ObjectSpec::dim(const std::string &key) const {
    if (auto it = dims.find(key); it != dims.end())
        return it->second;
    const Dims d = default_dims(cls);
    if (auto it = d.find(key); it != d.end())
        return it->second;
    throw std::invalid_argument("unknown object dimension: " + key);
}

inline double EnvSpec::dim(const std::string &key) const {
    if (auto it = dims.find(key); it != dims.end())
        return it->second;
    const Dims d = default_dims(cls);
    if (auto it = d.find(key); it != d.end())
        return it->second;
    throw std::invalid_argument("unknown environment dimension: " + key);
}

inline void to_json(nlohmann::json &j, const ObjectSpec &s) {
    j = {{"class", s.cls}, {"dims", s.dims}, {"density", s.density}};
}
inline void from_json(const nlohmann::json &j, ObjectSpec &s) {
    s.cls = j.at("class").get<ObjectClass>();
    s.dims = j.value("dims", Dims{});
    s.density = j.value("density", 10000.0);
}
inline void to_json(nlohmann::json &j, const EnvSpec &s) {
    j = {{"class", s.cls}, {"dims", s.dims}, {"density", s.density}};
}
inline void from_json(const nlohmann::json &j, EnvSpec &s) {
    s.cls = j.at("class").get<EnvClass>();
    s.dims = j.value("dims", Dims{});
    s.density = j.value("density", 40000.0);
}

namespace detail {

inline void require_positive(const Dims &merged) {
    for (const auto &[k, v] : merged)
        if (k != "top_plate" && !(v > 0.0 && std::isfinite(v)))
            throw std::invalid_argument("degenerate dimension '" + k + "'");
}

template <class Spec> Dims merged_dims(const Spec &s) {
    Dims d = default_dims(s.cls);
    for (const auto &[k, v] : s.dims)
        d[k] = v;
    return d;
}

inline double spacing_for(double density) {
    if (!(density > 0.0))
        throw std::invalid_argument("density must be positive");
    return 1.0 / std::sqrt(density);
}

} // namespace detail

/// Object surface cloud in its local frame: centered on the centroid, canonical
/// upright along +z.
inline PointCloud generate_object(const ObjectSpec &spec, std::uint64_t seed) {
    namespace sh = shapes;
    detail::require_positive(detail::merged_dims(spec));
    const double s = detail::spacing_for(spec.density);
    Rng rng(seed);
    std::vector<Point3> p;
    auto d = [&](const char *k) { return spec.dim(k); };

    switch (spec.cls) {
    case ObjectClass::plate: {
        const double r = d("radius"), t = d("thickness");
        sh::disk(p, r, -0.5 * t, s, rng);
        sh::disk(p, r, 0.5 * t, s, rng);
        sh::cylinder(p, r, -0.5 * t, 0.5 * t, s, rng);
        break;
    }
    case ObjectClass::bowl:
        sh::lower_hemisphere(p, d("radius"), s, rng);
        break;
    case ObjectClass::mug: {
        const double r = d("radius"), h = d("height"), hr = d("handle_radius"), ht = d("handle_tube");
        sh::disk(p, r, 0.0, s, rng);
        sh::cylinder(p, r, 0.0, h, s, rng);
        sh::arc_tube(p, Point3(r, 0.0, 0.5 * h), hr, -0.5 * std::numbers::pi, 0.5 * std::numbers::pi, ht, s,
                     rng);
        break;
    }
    case ObjectClass::martini: {
        const double rf = d("foot_radius"), rs = d("stem_radius"), hs = d("stem_height");
        const double rb = d("bowl_radius"), hb = d("bowl_height");
        sh::disk(p, rf, 0.0, s, rng);
        sh::cylinder(p, rs, 0.0, hs, s, rng);
        sh::cone(p, rs, hs, rb, hs + hb, s, rng);
        break;
    }
    case ObjectClass::rod: {
        const double r = d("radius"), l = d("length");
        sh::cylinder(p, r, -0.5 * l, 0.5 * l, s, rng);
        sh::disk(p, r, -0.5 * l, s, rng);
        sh::disk(p, r, 0.5 * l, s, rng);
        break;
    }
    case ObjectClass::disc: {
        const double r = d("radius"), t = d("thickness"), h = d("hole_radius");
        if (h >= r)
            throw std::invalid_argument("degenerate dimension 'hole_radius'");
        sh::annulus(p, h, r, -0.5 * t, s, rng);
        sh::annulus(p, h, r, 0.5 * t, s, rng);
        sh::cylinder(p, r, -0.5 * t, 0.5 * t, s, rng);
        sh::cylinder(p, h, -0.5 * t, 0.5 * t, s, rng);
        break;
    }
    case ObjectClass::hook_item: {
        // Two vertical legs joined by a half-circle bend on top (crook up).
        const double t = d("tube"), ll = d("long_leg"), sl = d("short_leg"), br = d("bend_radius");
        sh::tube(p, Point3(-br, 0, -ll), Point3(-br, 0, 0), t, s, rng);
        sh::tube(p, Point3(br, 0, -sl), Point3(br, 0, 0), t, s, rng);
        sh::arc_tube(p, Point3::Zero(), br, 0.0, std::numbers::pi, t, s, rng);
        break;
    }
    case ObjectClass::fork: {
        const double t = d("tube"), hl = d("handle"), pl = d("prong"), g = d("prong_gap");
        sh::tube(p, Point3(0, 0, -hl), Point3(0, 0, 0), t, s, rng);
        sh::arc_tube(p, Point3::Zero(), 0.5 * g, std::numbers::pi, 2.0 * std::numbers::pi, t, s, rng);
        sh::tube(p, Point3(-0.5 * g, 0, 0), Point3(-0.5 * g, 0, pl), t, s, rng);
        sh::tube(p, Point3(0.5 * g, 0, 0), Point3(0.5 * g, 0, pl), t, s, rng);
        break;
    }
    case ObjectClass::box:
        sh::box(p, 0.5 * Point3(d("size_x"), d("size_y"), d("size_z")), s);
        break;
    case ObjectClass::sphere:
        sh::sphere(p, d("radius"), s, rng);
        break;
    }

    Point3 c = Point3::Zero();
    for (const auto &q : p)
        c += q;
    c /= static_cast<double>(p.size());
    for (auto &q : p)
        q -= c;
    if (p.size() < 200)
        throw std::invalid_argument("object cloud has fewer than 200 points; raise the density");
    return {std::move(p), Frame::object_local};
}

/// Environment cloud in world coordinates with its support surface at z = 0.
inline PointCloud generate_env(const EnvSpec &spec, std::uint64_t seed) {
    namespace sh = shapes;
    detail::require_positive(detail::merged_dims(spec));
    const double s = detail::spacing_for(spec.density);
    Rng rng(seed);
    std::vector<Point3> p;
    auto d = [&](const char *k) { return spec.dim(k); };

    switch (spec.cls) {
    case EnvClass::flat: {
        const double h = 0.5 * d("size");
        sh::rect(p, -h, h, -h, h, 0.0, s, rng);
        break;
    }
    case EnvClass::rack_slots: {
        // A floor with rows of tines at x = x0 + pitch * i, i = 0..slots; each gap
        // between neighbouring rows is a slot.
        const int slots = static_cast<int>(std::lround(d("slots")));
        const double pitch = d("pitch"), th = d("tine_height"), tr = d("tine_radius");
        const double ts = d("tine_spacing"), len = d("length");
        const double x0 = -0.5 * pitch * slots, x1 = -x0;
        sh::rect(p, x0 - 0.01, x1 + 0.01, -0.5 * len, 0.5 * len, 0.0, s, rng);
        const int ntine = std::max(1, static_cast<int>(std::floor(len / ts))) + 1;
        for (int i = 0; i <= slots; ++i) {
            const double x = x0 + pitch * i;
            for (int j = 0; j < ntine; ++j) {
                const double y = -0.5 * len + len * j / (ntine - 1);
                sh::tube(p, Point3(x, y, 0.0), Point3(x, y, th), tr, s, rng);
            }
        }
        if (const double w = d("top_plate"); w > 0.0)
            sh::rect(p, x0, x1, 0.5 * len - w, 0.5 * len, th, s, rng);
        break;
    }
    case EnvClass::pen_holder: {
        // A square block with a bores x bores grid of round bores, axes at
        // x, y = pitch * (i - (bores - 1) / 2), standing on a tray.
        const double ri = d("inner_radius"), wall = d("wall"), h = d("height"), tray = d("tray");
        const int n = static_cast<int>(std::lround(d("bores")));
        const double pitch = 2.0 * (ri + wall), half = 0.5 * pitch * n;
        std::vector<Point3> axes;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                axes.emplace_back(pitch * (i - 0.5 * (n - 1)), pitch * (j - 0.5 * (n - 1)), 0.0);
        sh::rect(p, -half - tray, half + tray, -half - tray, half + tray, 0.0, s, rng);
        std::vector<Point3> top;
        sh::rect(top, -half, half, -half, half, h, s, rng);
        for (const auto &q : top) {
            bool hole = false;
            for (const auto &a : axes)
                hole = hole || std::hypot(q.x() - a.x(), q.y() - a.y()) < ri;
            if (!hole)
                p.push_back(q);
        }
        for (const auto &a : axes) {
            sh::cylinder(p, ri, 0.0, h, s, rng, a.x(), a.y());
            sh::ring(p, ri, h, s, rng, a.x(), a.y());
        }
        for (const double y : {-half, half})
            for (int k = 0; k <= static_cast<int>(std::lround(h / s)); ++k) {
                const double z = h * k / std::lround(h / s);
                for (int i = 0; i <= static_cast<int>(std::lround(2 * half / s)); ++i) {
                    const double t = -half + 2 * half * i / std::lround(2 * half / s);
                    p.emplace_back(t, y, z);
                    p.emplace_back(y, t, z);
                }
            }
        break;
    }
    case EnvClass::hook_bar: {
        // Parallel horizontal bars along y, each carried by two posts.
        const double bh = d("bar_height"), bl = d("bar_length"), br = d("bar_radius"), pr = d("post_radius");
        const int n = static_cast<int>(std::lround(d("bars")));
        const double sp = d("bar_spacing");
        for (int i = 0; i < n; ++i) {
            const double x = sp * (i - 0.5 * (n - 1));
            for (const double y : {-0.5 * bl, 0.5 * bl})
                sh::tube(p, Point3(x, y, 0.0), Point3(x, y, bh), pr, s, rng);
            sh::tube(p, Point3(x, -0.5 * bl, bh), Point3(x, 0.5 * bl, bh), br, s, rng);
        }
        for (const double y : {-0.5 * bl, 0.5 * bl})
            sh::tube(p, Point3(-0.5 * sp * (n - 1) - 0.02, y, pr), Point3(0.5 * sp * (n - 1) + 0.02, y, pr), pr, s,
                     rng);
        break;
    }
    case EnvClass::stemware_holder: {
        const double g = d("rail_gap"), rr = d("rail_radius"), h = d("height"), len = d("length");
        const double pr = d("post_radius");
        for (const double x : {-0.5 * g, 0.5 * g}) {
            sh::tube(p, Point3(x, -0.5 * len, h), Point3(x, 0.5 * len, h), rr, s, rng);
            for (const double y : {-0.5 * len, 0.5 * len})
                sh::tube(p, Point3(x, y, 0.0), Point3(x, y, h), pr, s, rng);
        }
        break;
    }
    case EnvClass::incline: {
        const double h = 0.5 * d("size"), a = deg2rad(d("angle_deg"));
        std::vector<Point3> flat;
        sh::rect(flat, -h, h, -h, h, 0.0, s, rng);
        const Matrix3 r = Eigen::AngleAxisd(a, Point3::UnitY()).toRotationMatrix();
        for (const auto &q : flat)
            p.push_back(r * q);
        break;
    }
    }
    if (p.size() < 500)
        throw std::invalid_argument("environment cloud has fewer than 500 points; raise the density");
    return {std::move(p), Frame::world};
}

// ---------------------------------------------------------------------------
// Preference rules

/// Constraint on the object's local +z axis after rotation by R0.
enum class AxisRule { up, down, vertical, horizontal, along_x };

NLOHMANN_JSON_SERIALIZE_ENUM(AxisRule, {{AxisRule::up, "up"},
                                        {AxisRule::down, "down"},
                                        {AxisRule::vertical, "vertical"},
                                        {AxisRule::horizontal, "horizontal"},
                                        {AxisRule::along_x, "along_x"}})

struct PreferenceRule {
    ObjectClass object = ObjectClass::plate;
    EnvClass env = EnvClass::flat;
    AxisRule axis = AxisRule::up;
    double cone_deg = 20.0;
    /// When > 0, the location must lie below this height, e.g. down inside a
    /// holder rather than standing on its top.
    double max_height = 0.0;

    bool admits(const Placement &p) const {
        const Point3 a = p.orientation.apply(Point3::UnitZ());
        const double cone = deg2rad(cone_deg);
        const double tilt = std::acos(std::clamp(a.z(), -1.0, 1.0)); // angle from +z
        bool ok = false;
        switch (axis) {
        case AxisRule::up:
            ok = tilt <= cone;
            break;
        case AxisRule::down:
            ok = std::numbers::pi - tilt <= cone;
            break;
        case AxisRule::vertical:
            ok = std::min(tilt, std::numbers::pi - tilt) <= cone;
            break;
        case AxisRule::horizontal:
            ok = std::abs(0.5 * std::numbers::pi - tilt) <= cone;
            break;
        case AxisRule::along_x:
            ok = std::acos(std::min(1.0, std::abs(a.x()))) <= cone;
            break;
        }
        if (ok && max_height > 0.0)
            ok = p.location.z() < max_height;
        return ok;
    }
};

inline void to_json(nlohmann::json &j, const PreferenceRule &r) {
    j = {{"object", r.object}, {"env", r.env}, {"axis", r.axis}, {"cone_deg", r.cone_deg},
         {"max_height", r.max_height}};
}
inline void from_json(const nlohmann::json &j, PreferenceRule &r) {
    r.object = j.at("object").get<ObjectClass>();
    r.env = j.at("env").get<EnvClass>();
    r.axis = j.at("axis").get<AxisRule>();
    r.cone_deg = j.value("cone_deg", 20.0);
    r.max_height = j.value("max_height", 0.0);
}

inline std::vector<PreferenceRule> default_preference_rules() {
    using O = ObjectClass;
    using E = EnvClass;
    using A = AxisRule;
    return {
        {O::plate, E::flat, A::up},          {O::bowl, E::flat, A::up},
        {O::mug, E::flat, A::up},            {O::martini, E::flat, A::up},
        {O::rod, E::flat, A::horizontal},    {O::hook_item, E::flat, A::horizontal},
        {O::disc, E::flat, A::up},           {O::fork, E::flat, A::horizontal},
        {O::plate, E::rack_slots, A::along_x}, {O::bowl, E::rack_slots, A::down},
        {O::mug, E::rack_slots, A::down},    {O::martini, E::rack_slots, A::down},
        {O::rod, E::pen_holder, A::vertical, 20.0, 0.17},
        {O::fork, E::pen_holder, A::vertical, 20.0, 0.17},
        {O::hook_item, E::hook_bar, A::up},  {O::mug, E::hook_bar, A::horizontal},
        {O::martini, E::stemware_holder, A::down},
    };
}

struct PlacingTask {
    ObjectSpec object;
    EnvSpec env;
    int object_index = 0;
    int env_index = 0;
    int task_id = 0; // M * env_index + object_index, M = number of objects
};

inline const PreferenceRule &find_rule(const std::vector<PreferenceRule> &rules, ObjectClass o, EnvClass e) {
    for (const auto &r : rules)
        if (r.object == o && r.env == e)
            return r;
    throw std::invalid_argument("no preference rule");
}

/// Preferred iff stable and the pose satisfies the (object, environment) rule.
inline bool preference_label(const std::vector<PreferenceRule> &rules, const PlacingTask &task, const Placement &p,
                             bool stable) {
    const PreferenceRule &rule = find_rule(rules, task.object.cls, task.env.cls);
    return stable && rule.admits(p);
}

} // namespace placing
