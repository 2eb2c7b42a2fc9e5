// SPDX-License-Identifier: Apache-2.0
//
// railchan - ray-tracing channel simulation for railway mmWave scenarios
// Copyright (C) 2026 The railchan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

// Planar-polygon scene model, parametric railway scenario builders, concise-scene
// reduction, wedge extraction and the RCSCENE text format.
//
// Coordinates: x along the track (Tx end at x = 0), y lateral, z up, metres.

#include "em.hpp"
#include "error.hpp"
#include "geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace railchan::scene
{
    enum class ObjectClass
    {
        ground,
        track,
        barrier,
        pylon,
        billboard,
        traffic_sign,
        crossing_bridge,
        building,
        tunnel_wall,
        cct,
        cutting_wall,
        steep_wall,
        train,
        station,
        awning,
        indicator,
        vegetation,
        furniture,
    };

    inline constexpr std::array<std::string_view, 18> object_class_names = {
        "ground", "track", "barrier", "pylon", "billboard", "traffic_sign", "crossing_bridge", "building", "tunnel_wall",
        "cct", "cutting_wall", "steep_wall", "train", "station", "awning", "indicator", "vegetation", "furniture"};

    inline std::string_view to_string(ObjectClass c) { return object_class_names[std::size_t(c)]; }

    inline std::optional<ObjectClass> parse_object_class(std::string_view s)
    {
        for (std::size_t i = 0; i < object_class_names.size(); ++i)
            if (object_class_names[i] == s)
                return ObjectClass(i);
        return std::nullopt;
    }

    // Rounds to 9 significant digits, the precision of the scene file, so that
    // built scenes survive a save/load cycle bit-exactly.
    inline double quantize(double v)
    {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::strtod(buf, nullptr);
    }

    inline Vec3 quantize(const Vec3 &p) { return {quantize(p.x()), quantize(p.y()), quantize(p.z())}; }

    struct Surface
    {
        int id = 0;
        std::vector<Vec3> vertices;
        int material = 0; // index into Scene::materials
        ObjectClass object_class = ObjectClass::ground;
        int object_id = 0;

        // derived by make_surface
        Vec3 normal = Vec3::UnitZ(); // unit, counterclockwise winding
        double offset = 0.0;         // plane: normal . x = offset
        double area = 0.0;
        geom::Aabb box;

        double signed_distance(const Vec3 &p) const { return normal.dot(p) - offset; }
        bool contains(const Vec3 &p_on_plane, double tol) const { return geom::inside_convex(vertices, normal, p_on_plane, tol); }
    };

    inline constexpr double planarity_tolerance = 1e-6;

    // Validates the polygon invariants and fills the derived plane data
    inline Surface make_surface(int id, std::vector<Vec3> vertices, int material, ObjectClass cls, int object_id)
    {
        const std::string who = "surface " + std::to_string(id);
        if (vertices.size() < 3)
            throw validation_error(who + ": polygon needs at least 3 vertices");
        Surface s;
        s.id = id;
        s.vertices = std::move(vertices);
        s.material = material;
        s.object_class = cls;
        s.object_id = object_id;
        const Vec3 nn = geom::newell_normal(s.vertices);
        const double len = nn.norm();
        if (!(len > 1e-12))
            throw validation_error(who + ": degenerate polygon (zero area)");
        s.normal = nn / len;
        s.area = 0.5 * len;
        if (geom::planarity_deviation(s.vertices, s.normal) > planarity_tolerance)
            throw validation_error(who + ": vertices are not coplanar");
        if (!geom::is_convex_ccw(s.vertices, s.normal))
            throw validation_error(who + ": polygon is not convex");
        Vec3 c = Vec3::Zero();
        for (const auto &v : s.vertices)
        {
            c += v;
            s.box.extend(v);
        }
        c /= double(s.vertices.size());
        s.offset = s.normal.dot(c);
        return s;
    }

    // Diffracting edge shared by face_a and face_b (equal for an isolated plate / half-plane)
    struct Wedge
    {
        Vec3 start = Vec3::Zero();
        Vec3 end = Vec3::Zero();
        int face_a = 0; // surface id of face 0
        int face_b = 0; // surface id of face n
        double n = 2.0; // exterior angle = n * pi

        bool operator==(const Wedge &) const = default;
    };

    struct SceneMetadata
    {
        std::string module;
        bool concise = false;
        std::vector<std::pair<std::string, std::string>> params; // builder parameters, reduction report

        std::optional<std::string> param(std::string_view key) const
        {
            for (const auto &[k, v] : params)
                if (k == key)
                    return v;
            return std::nullopt;
        }
        void set(const std::string &key, const std::string &value)
        {
            for (auto &[k, v] : params)
                if (k == key)
                {
                    v = value;
                    return;
                }
            params.emplace_back(key, value);
        }
        bool operator==(const SceneMetadata &) const = default;
    };

    std::vector<Wedge> extract_wedges(const struct Scene &scene, std::vector<std::string> *warnings);

    struct Scene
    {
        std::vector<em::Material> materials;
        std::vector<Surface> surfaces;
        std::vector<Wedge> wedges;
        SceneMetadata metadata;
        geom::Aabb bbox;

        const em::Material &material_of(const Surface &s) const { return materials.at(std::size_t(s.material)); }

        const Surface &surface(int id) const
        {
            auto it = index_.find(id);
            if (it == index_.end())
                throw lookup_error("unknown surface id " + std::to_string(id));
            return surfaces[it->second];
        }
        std::size_t surface_index(int id) const
        {
            auto it = index_.find(id);
            if (it == index_.end())
                throw lookup_error("unknown surface id " + std::to_string(id));
            return it->second;
        }
        bool has_object(int object_id) const
        {
            return std::any_of(surfaces.begin(), surfaces.end(), [&](const Surface &s) { return s.object_id == object_id; });
        }
        bool has_class(ObjectClass c) const
        {
            return std::any_of(surfaces.begin(), surfaces.end(), [&](const Surface &s) { return s.object_class == c; });
        }

        // Checks scene invariants, rebuilds the id index, bounding box and wedge list
        void finalize()
        {
            index_.clear();
            bbox = geom::Aabb{};
            for (std::size_t i = 0; i < surfaces.size(); ++i)
            {
                const auto &s = surfaces[i];
                if (!index_.emplace(s.id, i).second)
                    throw validation_error("duplicate surface id " + std::to_string(s.id));
                if (s.material < 0 || std::size_t(s.material) >= materials.size())
                    throw validation_error("surface " + std::to_string(s.id) + " references a missing material");
                for (const auto &v : s.vertices)
                    bbox.extend(v);
            }
            wedges = extract_wedges(*this, nullptr);
        }

        bool operator==(const Scene &o) const
        {
            if (materials != o.materials || metadata != o.metadata || wedges != o.wedges || surfaces.size() != o.surfaces.size())
                return false;
            for (std::size_t i = 0; i < surfaces.size(); ++i)
            {
                const auto &a = surfaces[i], &b = o.surfaces[i];
                if (a.id != b.id || a.material != b.material || a.object_class != b.object_class || a.object_id != b.object_id ||
                    a.vertices != b.vertices)
                    return false;
            }
            return true;
        }

      private:
        std::unordered_map<int, std::size_t> index_;
    };

    // ---------------------------------------------------------------------------------------------
    // Object area

    inline double object_area(const Scene &scene, int object_id)
    {
        double a = 0.0;
        bool found = false;
        for (const auto &s : scene.surfaces)
            if (s.object_id == object_id)
            {
                a += s.area;
                found = true;
            }
        if (!found)
            throw lookup_error("unknown object id " + std::to_string(object_id));
        return a;
    }

    // ---------------------------------------------------------------------------------------------
    // Wedge extraction

    // All convex edges shared by exactly two faces of the same object (exterior angle in
    // (pi, 2pi]) plus the boundary edges of single-surface objects as half-planes.
    // Edges shared by more than two faces are skipped with a warning.
    inline std::vector<Wedge> extract_wedges(const Scene &scene, std::vector<std::string> *warnings)
    {
        std::vector<Wedge> out;
        std::map<int, std::vector<std::size_t>> by_object;
        for (std::size_t i = 0; i < scene.surfaces.size(); ++i)
            by_object[scene.surfaces[i].object_id].push_back(i);

        using Key = std::array<double, 6>;
        auto key_of = [](const Vec3 &a, const Vec3 &b) {
            Key ka{a.x(), a.y(), a.z(), b.x(), b.y(), b.z()};
            Key kb{b.x(), b.y(), b.z(), a.x(), a.y(), a.z()};
            return std::min(ka, kb);
        };

        for (const auto &[oid, members] : by_object)
        {
            if (members.size() == 1)
            {
                const Surface &s = scene.surfaces[members[0]];
                const std::size_t m = s.vertices.size();
                for (std::size_t e = 0; e < m; ++e)
                    out.push_back({s.vertices[e], s.vertices[(e + 1) % m], s.id, s.id, 2.0});
                continue;
            }

            std::map<Key, std::vector<std::pair<std::size_t, std::size_t>>> edges; // key -> (surface idx, edge idx)
            std::vector<Key> order;
            for (std::size_t si : members)
            {
                const Surface &s = scene.surfaces[si];
                const std::size_t m = s.vertices.size();
                for (std::size_t e = 0; e < m; ++e)
                {
                    const Key k = key_of(s.vertices[e], s.vertices[(e + 1) % m]);
                    auto &slot = edges[k];
                    if (slot.empty())
                        order.push_back(k);
                    slot.emplace_back(si, e);
                }
            }
            for (const Key &k : order)
            {
                const auto &slot = edges[k];
                if (slot.size() == 1)
                    continue;
                if (slot.size() > 2)
                {
                    if (warnings)
                        warnings->push_back("object " + std::to_string(oid) + ": non-manifold edge shared by " +
                                            std::to_string(slot.size()) + " faces skipped");
                    continue;
                }
                const Surface &a = scene.surfaces[slot[0].first];
                const Surface &b = scene.surfaces[slot[1].first];
                const Vec3 p0 = a.vertices[slot[0].second];
                const Vec3 p1 = a.vertices[(slot[0].second + 1) % a.vertices.size()];
                // convex iff face b lies behind (or on) the plane of face a
                double front = 0.0;
                for (const auto &v : b.vertices)
                    front = std::max(front, a.signed_distance(v));
                if (front > 1e-9)
                    continue;
                const double c = std::clamp(a.normal.dot(b.normal), -1.0, 1.0);
                const double n = 1.0 + std::acos(c) / pi;
                if (n <= 1.0 + 1e-9)
                    continue;
                out.push_back({p0, p1, a.id, b.id, n});
            }
        }
        return out;
    }

    // ---------------------------------------------------------------------------------------------
    // Scenario specification and builders

    enum class ModuleKind
    {
        m1, // tunnel entrance on steep wall connecting cutting with crossing bridges
        m2, // viaduct with open train station
        m3, // urban with semi-closed train station
        m4, // rural with cut and cover tunnel
        m5, // rural connecting double-track tunnel
        m6, // single-track viaduct
    };

    inline std::string_view to_string(ModuleKind m)
    {
        static constexpr std::array<std::string_view, 6> names = {"m1", "m2", "m3", "m4", "m5", "m6"};
        return names[std::size_t(m)];
    }

    inline std::optional<ModuleKind> parse_module(std::string_view s)
    {
        for (int i = 0; i < 6; ++i)
            if (to_string(ModuleKind(i)) == s)
                return ModuleKind(i);
        return std::nullopt;
    }

    enum class TunnelShape
    {
        rectangular,
        arched,
    };

    struct FurnitureSpec
    {
        double x = 0;      // start along the track, m
        double width = 1;  // along x
        double depth = 1;  // along y, from the left tunnel wall
        double height = 1;
    };

    // Builder defaults are documented assumptions, not measured geometries.
    struct ScenarioSpec
    {
        ModuleKind module = ModuleKind::m5;
        double length_m = 500.0;          // corridor length along x
        double margin_m = 20.0;           // corridor extension behind the Tx (x < 0)
        double barrier_height_m = 1.5;    // 0 disables the barrier pair
        double pylon_spacing_m = 50.0;
        double track_spacing_m = 4.5;     // centre distance of the two tracks
        double tunnel_width_m = 11.0;
        double tunnel_height_m = 7.5;
        TunnelShape tunnel_shape = TunnelShape::rectangular;
        int arch_segments = 12;
        double building_offset_m = 8.0;   // gap between barrier and urban building rows
        double building_spacing_m = 50.0; // pitch of buildings along each row
        double station_length_m = 120.0;
        double platform_width_m = 5.0;
        std::optional<double> train_x_m;  // rear of the static train; default 0.6 * length
        std::vector<FurnitureSpec> furniture; // tunnel furniture boxes (m5)
        std::map<ObjectClass, std::string> materials; // per-class material overrides
    };

    inline void validate(const ScenarioSpec &s)
    {
        std::vector<std::string> bad;
        auto pos = [&](double v, const char *name) {
            if (!(v > 0.0))
                bad.emplace_back(name);
        };
        pos(s.length_m, "length_m");
        if (!(s.margin_m >= 0.0))
            bad.emplace_back("margin_m");
        if (!(s.barrier_height_m >= 0.0))
            bad.emplace_back("barrier_height_m");
        pos(s.pylon_spacing_m, "pylon_spacing_m");
        pos(s.track_spacing_m, "track_spacing_m");
        pos(s.tunnel_width_m, "tunnel_width_m");
        pos(s.tunnel_height_m, "tunnel_height_m");
        pos(s.building_offset_m, "building_offset_m");
        pos(s.building_spacing_m, "building_spacing_m");
        pos(s.station_length_m, "station_length_m");
        pos(s.platform_width_m, "platform_width_m");
        if (s.arch_segments < 2)
            bad.emplace_back("arch_segments");
        if (s.tunnel_shape == TunnelShape::arched && !(s.tunnel_height_m > s.tunnel_width_m / 2))
            bad.emplace_back("tunnel_height_m (arched shape needs height > width/2)");
        if (s.track_spacing_m < 1.6 + 1.5)
            bad.emplace_back("track_spacing_m (tracks would overlap)");
        for (std::size_t i = 0; i < s.furniture.size(); ++i)
        {
            const auto &f = s.furniture[i];
            if (!(f.width > 0 && f.depth > 0 && f.height > 0))
                bad.push_back("furniture[" + std::to_string(i) + "]");
        }
        for (const auto &[cls, name] : s.materials)
            if (!em::find_material(name))
                bad.push_back("materials[" + std::string(to_string(cls)) + "]='" + name + "'");
        if (!bad.empty())
        {
            std::string msg = "invalid scenario spec:";
            for (const auto &b : bad)
                msg += " " + b;
            throw validation_error(msg);
        }
    }

    inline bool has_station(ModuleKind m) { return m == ModuleKind::m2 || m == ModuleKind::m3; }
    inline bool is_tunnel(ModuleKind m) { return m == ModuleKind::m5; }
    inline bool is_single_track(ModuleKind m) { return m == ModuleKind::m6; }
    inline bool is_viaduct(ModuleKind m) { return m == ModuleKind::m2 || m == ModuleKind::m6; }

    // Derived placement shared by the builders and by the trajectory presets
    struct Layout
    {
        double rx_track_y = 0;    // centre of the track the receiver runs on
        double other_track_y = 0; // centre of the track carrying the static train
        double barrier_offset = 0; // barriers at y = +-barrier_offset
        double pylon_y = 0;        // pylon centre line
        Vec3 tx_anchor = Vec3::Zero(); // transmitter foot point (height added by the caller)
    };

    inline constexpr double rail_half_width = 0.75;
    inline constexpr double rail_height = 0.2;

    inline Layout layout(const ScenarioSpec &s)
    {
        Layout l;
        if (is_single_track(s.module))
        {
            l.rx_track_y = 0.0;
            l.other_track_y = 0.0;
        }
        else
        {
            l.rx_track_y = -s.track_spacing_m / 2;
            l.other_track_y = s.track_spacing_m / 2;
        }
        const double outer = std::max(std::abs(l.rx_track_y), std::abs(l.other_track_y)) + rail_half_width;
        l.barrier_offset = outer + (has_station(s.module) ? 0.3 + s.platform_width_m + 1.7 : 3.0);
        l.pylon_y = -(l.barrier_offset - 1.0);
        if (is_tunnel(s.module))
            l.tx_anchor = Vec3(0.0, -s.tunnel_width_m / 2 + 0.5, 0.0);
        else
            l.tx_anchor = Vec3(0.0, l.pylon_y + 0.5, 0.0);
        return l;
    }

    inline int pylon_count(const ScenarioSpec &s) { return int(std::floor(s.length_m / s.pylon_spacing_m + 1e-9)) + 1; }
    inline int building_count(const ScenarioSpec &s) { return std::max(1, int(std::floor(s.length_m / s.building_spacing_m + 1e-9))); }
    inline int vegetation_count(const ScenarioSpec &s) { return std::max(1, int(std::floor(s.length_m / 100.0 + 1e-9))); }

    // Surface count of build_module(s):
    //   m1: 44 + 6P + 2b        m2: 46 + 6P + 2b         m3: 42 + 6P + 12B + 2b
    //   m4: 48 + 6P + 12V + 2b  m5: 19 + T + 6F          m6: 21 + 6P + 2b
    // P pylons = floor(L / spacing) + 1, B buildings per row = max(1, floor(L / building_spacing)),
    // V vegetation blocks per side = max(1, floor(L / 100)), b = 1 if barrier_height > 0,
    // T tunnel shell faces = 3 (rectangular) or 2 + arch_segments, F furniture boxes.
    inline int expected_surface_count(const ScenarioSpec &s)
    {
        const int P = pylon_count(s);
        const int b = s.barrier_height_m > 0.0 ? 1 : 0;
        switch (s.module)
        {
        case ModuleKind::m1: return 44 + 6 * P + 2 * b;
        case ModuleKind::m2: return 46 + 6 * P + 2 * b;
        case ModuleKind::m3: return 42 + 6 * P + 12 * building_count(s) + 2 * b;
        case ModuleKind::m4: return 48 + 6 * P + 12 * vegetation_count(s) + 2 * b;
        case ModuleKind::m5:
            return 19 + (s.tunnel_shape == TunnelShape::rectangular ? 3 : 2 + s.arch_segments) + 6 * int(s.furniture.size());
        case ModuleKind::m6: return 21 + 6 * P + 2 * b;
        }
        return 0;
    }

    namespace detail
    {
        inline std::string default_material(ObjectClass c)
        {
            switch (c)
            {
            case ObjectClass::barrier:
            case ObjectClass::pylon:
            case ObjectClass::billboard:
            case ObjectClass::traffic_sign:
            case ObjectClass::crossing_bridge:
            case ObjectClass::awning:
            case ObjectClass::furniture: return "Metal";
            case ObjectClass::train: return "Aluminium_alloy";
            case ObjectClass::indicator: return "LED";
            case ObjectClass::station: return "Ceramic_tile";
            case ObjectClass::vegetation: return "Vegetation";
            default: return "Concrete";
            }
        }

        class SceneWriter
        {
          public:
            explicit SceneWriter(const ScenarioSpec &spec) : spec_(spec)
            {
                scene_.materials = em::material_table();
            }

            int begin_object(ObjectClass c, std::optional<std::string> material = std::nullopt)
            {
                cls_ = c;
                std::string name = material ? *material : default_material(c);
                if (auto it = spec_.materials.find(c); it != spec_.materials.end())
                    name = it->second;
                material_ = material_index(name);
                return ++object_;
            }

            void set_material(const std::string &name) { material_ = material_index(name); }

            // Adds a polygon, flipping the winding if needed so the normal points along `facing`
            void polygon(std::vector<Vec3> v, const Vec3 &facing)
            {
                for (auto &p : v)
                    p = quantize(p);
                if (geom::newell_normal(v).dot(facing) < 0.0)
                    std::reverse(v.begin(), v.end());
                scene_.surfaces.push_back(make_surface(++surface_, std::move(v), material_, cls_, object_));
            }

            // Axis-aligned closed box, outward normals
            void box(const Vec3 &lo, const Vec3 &hi)
            {
                const double x0 = lo.x(), y0 = lo.y(), z0 = lo.z(), x1 = hi.x(), y1 = hi.y(), z1 = hi.z();
                polygon({{x0, y0, z0}, {x0, y1, z0}, {x1, y1, z0}, {x1, y0, z0}}, -Vec3::UnitZ());
                polygon({{x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1}}, Vec3::UnitZ());
                polygon({{x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1}}, -Vec3::UnitY());
                polygon({{x0, y1, z0}, {x0, y1, z1}, {x1, y1, z1}, {x1, y1, z0}}, Vec3::UnitY());
                polygon({{x0, y0, z0}, {x0, y0, z1}, {x0, y1, z1}, {x0, y1, z0}}, -Vec3::UnitX());
                polygon({{x1, y0, z0}, {x1, y1, z0}, {x1, y1, z1}, {x1, y0, z1}}, Vec3::UnitX());
            }

            // Rectangle in the plane x = const
            void plate_x(double x, double y0, double y1, double z0, double z1, const Vec3 &facing)
            {
                polygon({{x, y0, z0}, {x, y1, z0}, {x, y1, z1}, {x, y0, z1}}, facing);
            }
            // Rectangle in the plane y = const
            void plate_y(double y, double x0, double x1, double z0, double z1, const Vec3 &facing)
            {
                polygon({{x0, y, z0}, {x1, y, z0}, {x1, y, z1}, {x0, y, z1}}, facing);
            }
            // Rectangle in the plane z = const
            void plate_z(double z, double x0, double x1, double y0, double y1, const Vec3 &facing)
            {
                polygon({{x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}}, facing);
            }

            Scene finish(std::string module)
            {
                scene_.metadata.module = std::move(module);
                scene_.finalize();
                return std::move(scene_);
            }

            Scene &scene() { return scene_; }

          private:
            int material_index(const std::string &name)
            {
                const auto m = em::lookup_material(name, scene_.materials);
                for (std::size_t i = 0; i < scene_.materials.size(); ++i)
                    if (scene_.materials[i].name == m.name)
                        return int(i);
                return 0;
            }

            const ScenarioSpec &spec_;
            Scene scene_;
            ObjectClass cls_ = ObjectClass::ground;
            int material_ = 0;
            int object_ = 0;
            int surface_ = 0;
        };

        inline std::string fmt_num(double v)
        {
            std::ostringstream os;
            os << std::setprecision(9) << v;
            return os.str();
        }
    }

    // Deterministic parametric scene for one of the six railway scenario modules
    inline Scene build_module(const ScenarioSpec &spec)
    {
        validate(spec);
        const Layout lay = layout(spec);
        const double L = spec.length_m;
        const double x0 = -spec.margin_m;
        const double b = lay.barrier_offset;
        const double half_w = is_tunnel(spec.module) ? spec.tunnel_width_m / 2 : b + 34.0;
        const double ground_z = spec.module == ModuleKind::m2 ? -12.0 : spec.module == ModuleKind::m6 ? -15.0 : 0.0;
        const double train_x = spec.train_x_m.value_or(spec.module == ModuleKind::m6 ? L - 25.0 : 0.6 * L);

        detail::SceneWriter w(spec);
        const Vec3 up = Vec3::UnitZ();

        // ground (or the terrain below a viaduct)
        w.begin_object(ObjectClass::ground);
        w.plate_z(ground_z, x0, L, -half_w, half_w, up);

        if (is_viaduct(spec.module))
        {
            w.begin_object(ObjectClass::ground);
            w.box({x0, -(b + 0.5), -1.5}, {L, b + 0.5, 0.0});
        }

        // tracks: one rail-pair box per track
        const std::vector<double> tracks =
            is_single_track(spec.module) ? std::vector<double>{lay.rx_track_y} : std::vector<double>{lay.rx_track_y, lay.other_track_y};
        for (double ty : tracks)
        {
            w.begin_object(ObjectClass::track);
            w.box({x0, ty - rail_half_width, 0.0}, {L, ty + rail_half_width, rail_height});
        }

        // static train on the other track
        w.begin_object(ObjectClass::train);
        w.box({train_x, lay.other_track_y - 1.6, 0.25}, {train_x + 25.0, lay.other_track_y + 1.6, 4.0});

        if (is_tunnel(spec.module))
        {
            const double hw = spec.tunnel_width_m / 2, H = spec.tunnel_height_m;
            w.begin_object(ObjectClass::tunnel_wall);
            if (spec.tunnel_shape == TunnelShape::rectangular)
            {
                w.plate_y(-hw, x0, L, 0.0, H, Vec3::UnitY());
                w.plate_y(hw, x0, L, 0.0, H, -Vec3::UnitY());
                w.plate_z(H, x0, L, -hw, hw, -up);
            }
            else
            {
                const double spring = H - hw;
                w.plate_y(-hw, x0, L, 0.0, spring, Vec3::UnitY());
                w.plate_y(hw, x0, L, 0.0, spring, -Vec3::UnitY());
                const int N = spec.arch_segments;
                for (int i = 0; i < N; ++i)
                {
                    const double a0 = pi * i / N, a1 = pi * (i + 1) / N;
                    const Vec3 p0(0.0, hw * std::cos(a0), spring + hw * std::sin(a0));
                    const Vec3 p1(0.0, hw * std::cos(a1), spring + hw * std::sin(a1));
                    const Vec3 mid = 0.5 * (p0 + p1);
                    const Vec3 inward = Vec3(0.0, -mid.y(), spring - mid.z());
                    w.polygon({{x0, p0.y(), p0.z()}, {L, p0.y(), p0.z()}, {L, p1.y(), p1.z()}, {x0, p1.y(), p1.z()}}, inward);
                }
            }
            for (const auto &f : spec.furniture)
            {
                w.begin_object(ObjectClass::furniture);
                w.box({f.x, -hw + 0.05, 0.0}, {f.x + f.width, -hw + 0.05 + f.depth, f.height});
            }
            auto out = w.finish(std::string(to_string(spec.module)));
            out.metadata.set("tunnel_width_m", detail::fmt_num(spec.tunnel_width_m));
            out.metadata.set("tunnel_height_m", detail::fmt_num(spec.tunnel_height_m));
            out.metadata.set("tunnel_shape", spec.tunnel_shape == TunnelShape::rectangular ? "rectangular" : "arched");
            out.metadata.set("length_m", detail::fmt_num(L));
            return out;
        }

        // barrier pair
        if (spec.barrier_height_m > 0.0)
        {
            w.begin_object(ObjectClass::barrier);
            w.plate_y(-b, x0, L, 0.0, spec.barrier_height_m, Vec3::UnitY());
            w.begin_object(ObjectClass::barrier);
            w.plate_y(b, x0, L, 0.0, spec.barrier_height_m, -Vec3::UnitY());
        }

        // traction pylons
        for (int k = 0; k < pylon_count(spec); ++k)
        {
            const double px = k * spec.pylon_spacing_m;
            w.begin_object(ObjectClass::pylon);
            w.box({px - 0.2, lay.pylon_y - 0.2, 0.0}, {px + 0.2, lay.pylon_y + 0.2, 8.0});
        }

        // traffic signs facing the oncoming train
        for (double fx : {0.25, 0.75})
        {
            w.begin_object(ObjectClass::traffic_sign);
            w.plate_x(fx * L, b - 1.0, b - 0.2, 2.0, 3.0, -Vec3::UnitX());
        }

        auto billboard = [&](double bx, double by) {
            w.begin_object(ObjectClass::billboard, "Concrete"); // post
            w.box({bx - 0.15, by - 0.15, 0.0}, {bx + 0.15, by + 0.15, 3.0});
            w.set_material("Metal"); // panel, same object
            w.box({bx - 0.15, by - 3.0, 3.0}, {bx + 0.15, by + 3.0, 6.0});
        };

        const double st_x0 = 0.3 * L, st_x1 = 0.3 * L + std::min(spec.station_length_m, 0.4 * L);
        const double pf_y0 = lay.other_track_y + rail_half_width + 0.3, pf_y1 = pf_y0 + spec.platform_width_m;

        switch (spec.module)
        {
        case ModuleKind::m1:
        {
            // cutting slopes outside the barriers
            w.begin_object(ObjectClass::cutting_wall);
            w.polygon({{x0, -b - 2, 0}, {0.6 * L, -b - 2, 0}, {0.6 * L, -b - 8, 6}, {x0, -b - 8, 6}}, Vec3(0, 1, 1));
            w.begin_object(ObjectClass::cutting_wall);
            w.polygon({{x0, b + 2, 0}, {0.6 * L, b + 2, 0}, {0.6 * L, b + 8, 6}, {x0, b + 8, 6}}, Vec3(0, -1, 1));
            // crossing bridge deck
            w.begin_object(ObjectClass::crossing_bridge);
            w.box({0.3 * L, -b - 10, 7.0}, {0.3 * L + 8.0, b + 10, 8.0});
            // steep wall with the tunnel portal opening
            const double hw = spec.tunnel_width_m / 2, H = spec.tunnel_height_m;
            w.begin_object(ObjectClass::steep_wall);
            w.plate_x(L, -b - 10, -hw, 0.0, H + 4.5, -Vec3::UnitX());
            w.begin_object(ObjectClass::steep_wall);
            w.plate_x(L, hw, b + 10, 0.0, H + 4.5, -Vec3::UnitX());
            w.begin_object(ObjectClass::steep_wall);
            w.plate_x(L, -hw, hw, H, H + 4.5, -Vec3::UnitX());
            billboard(0.4 * L, b + 4.0);
            break;
        }
        case ModuleKind::m2:
        {
            w.begin_object(ObjectClass::station);
            w.box({st_x0, pf_y0, 0.0}, {st_x1, pf_y1, 1.0});
            w.begin_object(ObjectClass::indicator);
            w.plate_x(0.5 * (st_x0 + st_x1), pf_y0 + 1.5, pf_y0 + 3.5, 2.5, 3.5, -Vec3::UnitX());
            billboard(0.4 * L, b + 4.0);
            break;
        }
        case ModuleKind::m3:
        {
            w.begin_object(ObjectClass::station);
            w.box({st_x0, pf_y0, 0.0}, {st_x1, pf_y1, 1.0});
            w.begin_object(ObjectClass::awning);
            w.plate_z(5.0, st_x0, st_x1, pf_y0, pf_y1, -up);
            w.begin_object(ObjectClass::station);
            w.plate_y(pf_y1 + 0.3, st_x0, st_x1, 0.0, 5.0, -Vec3::UnitY());
            w.begin_object(ObjectClass::indicator);
            w.plate_x(0.5 * (st_x0 + st_x1), pf_y0 + 1.5, pf_y0 + 3.5, 2.5, 3.5, -Vec3::UnitX());
            static const std::array<const char *, 3> facade = {"Tempered_glass", "Smooth_marble", "Ceramic_tile"};
            static const std::array<double, 3> heights = {15.0, 20.0, 25.0};
            const int B = building_count(spec);
            const double yin = b + spec.building_offset_m;
            for (int side = 0; side < 2; ++side)
                for (int k = 0; k < B; ++k)
                {
                    const double bx = k * spec.building_spacing_m + 5.0;
                    const double len = std::max(1.0, 0.7 * spec.building_spacing_m);
                    const double h = heights[std::size_t(k + side) % 3];
                    w.begin_object(ObjectClass::building, facade[std::size_t(k + 2 * side) % 3]);
                    if (side == 0)
                        w.box({bx, yin, 0.0}, {bx + len, yin + 12.0, h});
                    else
                        w.box({bx, -yin - 12.0, 0.0}, {bx + len, -yin, h});
                }
            billboard(0.4 * L, b + 4.0);
            break;
        }
        case ModuleKind::m4:
        {
            const double cx0 = 0.45 * L, cx1 = 0.55 * L, ch = 7.0, cy = b - 0.3;
            w.begin_object(ObjectClass::cct);
            w.plate_y(-cy, cx0, cx1, 0.0, ch, Vec3::UnitY());
            w.plate_y(cy, cx0, cx1, 0.0, ch, -Vec3::UnitY());
            w.plate_z(ch, cx0, cx1, -cy, cy, -up);
            const int V = vegetation_count(spec);
            for (int side = 0; side < 2; ++side)
                for (int k = 0; k < V; ++k)
                {
                    const double vx = k * 100.0 + 20.0;
                    const double vx1 = std::min(vx + 40.0, L);
                    const double sgn = side == 0 ? 1.0 : -1.0;
                    const double ya = sgn * (b + 3.0), yb = sgn * (b + 8.0);
                    w.begin_object(ObjectClass::vegetation);
                    w.box({std::min(vx, vx1 - 1.0), std::min(ya, yb), 0.0}, {vx1, std::max(ya, yb), 6.0});
                }
            for (int side = 0; side < 2; ++side)
            {
                const double sgn = side == 0 ? 1.0 : -1.0;
                const double ya = sgn * (b + 15.0), yb = sgn * (b + 25.0);
                w.begin_object(ObjectClass::building);
                w.box({0.7 * L, std::min(ya, yb), 0.0}, {0.7 * L + 15.0, std::max(ya, yb), 8.0});
            }
            billboard(0.4 * L, b + 4.0);
            break;
        }
        case ModuleKind::m6:
        case ModuleKind::m5: break;
        }

        auto out = w.finish(std::string(to_string(spec.module)));
        out.metadata.set("length_m", detail::fmt_num(L));
        out.metadata.set("barrier_height_m", detail::fmt_num(spec.barrier_height_m));
        out.metadata.set("barrier_offset_m", detail::fmt_num(b));
        out.metadata.set("pylon_spacing_m", detail::fmt_num(spec.pylon_spacing_m));
        return out;
    }

    // ---------------------------------------------------------------------------------------------
    // Concise-scene reduction

    struct ReductionReport
    {
        std::size_t surfaces_before = 0;
        std::size_t surfaces_after = 0;
        double removed_percent() const
        {
            return surfaces_before ? 100.0 * double(surfaces_before - surfaces_after) / double(surfaces_before) : 0.0;
        }
    };

    inline constexpr double furniture_area_threshold_m2 = 7.0;

    // Keeps only the objects significant for mmWave propagation.
    // Tunnel scenes: train, ground and tunnel walls; tracks and furniture below 7 m^2 are dropped.
    // Outdoor scenes with both antennas below the barriers: pylons, tracks and all objects strictly
    // outside the barrier pair are dropped. With either antenna above the barriers the objects
    // outside are kept and only the tracks are dropped.
    inline Scene reduce_scene(const Scene &scene, double tx_height, double rx_height, ReductionReport *report = nullptr)
    {
        const bool tunnel = scene.has_class(ObjectClass::tunnel_wall);
        const bool outdoor = scene.has_class(ObjectClass::barrier);
        if (!tunnel && !outdoor)
            throw classification_error("reduce_scene: scene has neither barriers nor tunnel walls");

        std::map<int, bool> keep_object;
        if (tunnel)
        {
            for (const auto &s : scene.surfaces)
            {
                if (keep_object.count(s.object_id))
                    continue;
                bool keep = false;
                switch (s.object_class)
                {
                case ObjectClass::train:
                case ObjectClass::ground:
                case ObjectClass::tunnel_wall: keep = true; break;
                case ObjectClass::furniture: keep = object_area(scene, s.object_id) >= furniture_area_threshold_m2; break;
                default: keep = false;
                }
                keep_object[s.object_id] = keep;
            }
        }
        else
        {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo, barrier_top = 0.0;
            for (const auto &s : scene.surfaces)
                if (s.object_class == ObjectClass::barrier)
                {
                    lo = std::min(lo, s.box.lo.y());
                    hi = std::max(hi, s.box.hi.y());
                    barrier_top = std::max(barrier_top, s.box.hi.z());
                }
            const bool low = std::max(tx_height, rx_height) < barrier_top;
            std::map<int, geom::Aabb> extent;
            for (const auto &s : scene.surfaces)
            {
                extent[s.object_id].extend(s.box.lo);
                extent[s.object_id].extend(s.box.hi);
            }
            for (const auto &s : scene.surfaces)
            {
                if (keep_object.count(s.object_id))
                    continue;
                const auto &e = extent[s.object_id];
                const bool outside = e.hi.y() < lo || e.lo.y() > hi;
                bool keep = true;
                if (s.object_class == ObjectClass::track)
                    keep = false;
                else if (low && (s.object_class == ObjectClass::pylon || outside))
                    keep = false;
                keep_object[s.object_id] = keep;
            }
        }

        Scene out;
        out.materials = scene.materials;
        out.metadata = scene.metadata;
        for (const auto &s : scene.surfaces)
            if (keep_object[s.object_id])
                out.surfaces.push_back(s);
        out.metadata.concise = true;
        ReductionReport r{scene.surfaces.size(), out.surfaces.size()};
        out.metadata.set("reduction.surfaces_before", std::to_string(r.surfaces_before));
        out.metadata.set("reduction.surfaces_after", std::to_string(r.surfaces_after));
        out.metadata.set("reduction.removed_percent", detail::fmt_num(r.removed_percent()));
        out.finalize();
        if (report)
            *report = r;
        return out;
    }

    // ---------------------------------------------------------------------------------------------
    // Scene file I/O
    //
    //   RCSCENE 1
    //   meta module <name> | meta concise <0|1> | meta param <key> <value>
    //   m <name> <eps_r> <tan_delta> <S> <alpha> <veg>
    //   o <object_id> <class>
    //   s <id> <material> <n> x1 y1 z1 ... xn yn zn

    inline void write_scene(std::ostream &os, const Scene &scene)
    {
        os << "RCSCENE 1\n";
        os << "meta module " << (scene.metadata.module.empty() ? "-" : scene.metadata.module) << "\n";
        os << "meta concise " << (scene.metadata.concise ? 1 : 0) << "\n";
        for (const auto &[k, v] : scene.metadata.params)
            os << "meta param " << k << " " << v << "\n";
        char buf[64];
        for (const auto &m : scene.materials)
        {
            os << "m " << m.name;
            for (double v : {m.eps_r, m.tan_delta, m.scatter_s})
            {
                std::snprintf(buf, sizeof buf, " %.17g", v);
                os << buf;
            }
            std::snprintf(buf, sizeof buf, " %d %.17g\n", m.scatter_alpha, m.veg_atten);
            os << buf;
        }
        int current = std::numeric_limits<int>::min();
        for (const auto &s : scene.surfaces)
        {
            if (s.object_id != current)
            {
                os << "o " << s.object_id << " " << to_string(s.object_class) << "\n";
                current = s.object_id;
            }
            os << "s " << s.id << " " << scene.material_of(s).name << " " << s.vertices.size();
            for (const auto &v : s.vertices)
                for (int k = 0; k < 3; ++k)
                {
                    std::snprintf(buf, sizeof buf, " %.9g", v[k]);
                    os << buf;
                }
            os << "\n";
        }
    }

    inline void save_scene(const Scene &scene, const std::string &path)
    {
        std::ofstream f(path, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write scene file '" + path + "'");
        write_scene(f, scene);
    }

    inline Scene read_scene(std::istream &in)
    {
        Scene scene;
        std::string line;
        std::size_t line_no = 0;
        bool header = false;
        int object_id = 0;
        std::optional<ObjectClass> cls;
        std::vector<em::Material> file_materials;

        auto material_index = [&](const std::string &name, std::size_t ln) {
            for (std::size_t i = 0; i < scene.materials.size(); ++i)
                if (scene.materials[i].name == name)
                    return int(i);
            auto m = em::find_material(name, file_materials);
            if (!m)
                m = em::find_material(name);
            if (!m)
                throw resolution_error("line " + std::to_string(ln) + ": unknown material '" + name + "'");
            scene.materials.push_back(*m);
            return int(scene.materials.size() - 1);
        };

        while (std::getline(in, line))
        {
            ++line_no;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            std::istringstream ls(line);
            std::string tag;
            if (!(ls >> tag) || tag[0] == '#')
                continue;
            if (!header)
            {
                int version = 0;
                if (tag != "RCSCENE" || !(ls >> version) || version != 1)
                    throw parse_error("missing 'RCSCENE 1' header", line_no);
                header = true;
                continue;
            }
            if (tag == "meta")
            {
                std::string key;
                ls >> key;
                if (key == "module")
                {
                    ls >> scene.metadata.module;
                    if (scene.metadata.module == "-")
                        scene.metadata.module.clear();
                }
                else if (key == "concise")
                {
                    int c = 0;
                    if (!(ls >> c))
                        throw parse_error("bad concise flag", line_no);
                    scene.metadata.concise = c != 0;
                }
                else if (key == "param")
                {
                    std::string k, v;
                    if (!(ls >> k >> v))
                        throw parse_error("meta param needs key and value", line_no);
                    scene.metadata.params.emplace_back(k, v);
                }
                else
                    throw parse_error("unknown meta key '" + key + "'", line_no);
            }
            else if (tag == "m")
            {
                em::Material m;
                if (!(ls >> m.name >> m.eps_r >> m.tan_delta >> m.scatter_s >> m.scatter_alpha >> m.veg_atten))
                    throw parse_error("material record needs: name eps_r tan_delta S alpha veg", line_no);
                try
                {
                    em::validate(m);
                }
                catch (const validation_error &e)
                {
                    throw parse_error(e.what(), line_no);
                }
                scene.materials.push_back(m);
                file_materials.push_back(m);
            }
            else if (tag == "o")
            {
                std::string cname;
                if (!(ls >> object_id >> cname))
                    throw parse_error("object record needs: id class", line_no);
                cls = parse_object_class(cname);
                if (!cls)
                    throw parse_error("unknown object class '" + cname + "'", line_no);
            }
            else if (tag == "s")
            {
                int id = 0;
                std::string mat;
                long n = 0;
                if (!(ls >> id))
                    throw parse_error("surface record needs an id", line_no);
                const std::string who = "surface " + std::to_string(id);
                if (!(ls >> mat >> n))
                    throw parse_error(who + ": expected material and vertex count", line_no);
                if (!cls)
                    throw parse_error(who + ": surface outside any object", line_no);
                if (n < 3)
                    throw parse_error(who + ": polygon needs at least 3 vertices", line_no);
                std::vector<Vec3> v(static_cast<std::size_t>(n));
                for (auto &p : v)
                    if (!(ls >> p.x() >> p.y() >> p.z()))
                        throw parse_error(who + ": expected " + std::to_string(n) + " vertices", line_no);
                std::string extra;
                if (ls >> extra)
                    throw parse_error(who + ": trailing data", line_no);
                const int mi = material_index(mat, line_no);
                try
                {
                    scene.surfaces.push_back(make_surface(id, std::move(v), mi, *cls, object_id));
                }
                catch (const validation_error &e)
                {
                    throw parse_error(e.what(), line_no);
                }
            }
            else
                throw parse_error("unknown record '" + tag + "'", line_no);
        }
        if (!header)
            throw parse_error("empty scene file", 0);
        try
        {
            scene.finalize();
        }
        catch (const validation_error &e)
        {
            throw parse_error(e.what(), 0);
        }
        return scene;
    }

    inline Scene load_scene(const std::string &path)
    {
        std::ifstream f(path, std::ios::binary);
        if (!f)
            throw parse_error("cannot open scene file '" + path + "'", 0);
        return read_scene(f);
    }

    // Polygon-soup importer for external geometry:
    //   v x y z                        vertex (1-based indexing in faces)
    //   o <object_id> <class> <material> start object
    //   f i j k [...]                  convex planar face
    inline Scene import_mesh(std::istream &in)
    {
        Scene scene;
        scene.materials = em::material_table();
        std::vector<Vec3> verts;
        std::string line;
        std::size_t line_no = 0;
        int object_id = 0, material = -1, next_id = 0;
        ObjectClass cls = ObjectClass::ground;
        while (std::getline(in, line))
        {
            ++line_no;
            std::istringstream ls(line);
            std::string tag;
            if (!(ls >> tag) || tag[0] == '#')
                continue;
            if (tag == "v")
            {
                Vec3 p;
                if (!(ls >> p.x() >> p.y() >> p.z()))
                    throw parse_error("vertex needs 3 coordinates", line_no);
                verts.push_back(p);
            }
            else if (tag == "o")
            {
                std::string cname, mname;
                if (!(ls >> object_id >> cname >> mname))
                    throw parse_error("object record needs: id class material", line_no);
                auto c = parse_object_class(cname);
                if (!c)
                    throw parse_error("unknown object class '" + cname + "'", line_no);
                cls = *c;
                const auto m = em::find_material(mname, scene.materials);
                if (!m)
                    throw resolution_error("line " + std::to_string(line_no) + ": unknown material '" + mname + "'");
                for (std::size_t i = 0; i < scene.materials.size(); ++i)
                    if (scene.materials[i].name == m->name)
                        material = int(i);
            }
            else if (tag == "f")
            {
                if (material < 0)
                    throw parse_error("face before any object record", line_no);
                std::vector<Vec3> poly;
                long idx = 0;
                while (ls >> idx)
                {
                    if (idx < 1 || std::size_t(idx) > verts.size())
                        throw parse_error("face references vertex " + std::to_string(idx), line_no);
                    poly.push_back(verts[std::size_t(idx - 1)]);
                }
                try
                {
                    scene.surfaces.push_back(make_surface(++next_id, std::move(poly), material, cls, object_id));
                }
                catch (const validation_error &e)
                {
                    throw parse_error(e.what(), line_no);
                }
            }
            else
                throw parse_error("unknown record '" + tag + "'", line_no);
        }
        scene.finalize();
        return scene;
    }
}
