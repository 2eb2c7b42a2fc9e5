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

#include <railchan/scene.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

using namespace railchan;
using namespace railchan::scene;
using Catch::Approx;

namespace
{
    const std::vector<ModuleKind> all_modules = {ModuleKind::m1, ModuleKind::m2, ModuleKind::m3,
                                                 ModuleKind::m4, ModuleKind::m5, ModuleKind::m6};

    Scene build(ModuleKind m)
    {
        ScenarioSpec s;
        s.module = m;
        return build_module(s);
    }

    // Unit cube [0,1]^3 as one object with outward faces
    const char *cube_mesh = R"(
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
o 1 building Concrete
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
)";
}

TEST_CASE("make_surface validates polygons", "[scene][surface]")
{
    const auto s = make_surface(3, {{0, 0, 0}, {2, 0, 0}, {2, 1, 0}, {0, 1, 0}}, 0, ObjectClass::ground, 1);
    CHECK(s.area == Approx(2.0));
    CHECK((s.normal - Vec3::UnitZ()).norm() < 1e-15);
    CHECK(s.offset == Approx(0.0));
    CHECK(s.signed_distance({0.5, 0.5, 2.0}) == Approx(2.0));
    CHECK(s.contains({1.0, 0.5, 0.0}, 1e-9));
    CHECK_FALSE(s.contains({3.0, 0.5, 0.0}, 1e-9));

    CHECK_THROWS_AS(make_surface(1, {{0, 0, 0}, {1, 0, 0}}, 0, ObjectClass::ground, 1), validation_error);
    CHECK_THROWS_AS(make_surface(1, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, 0, ObjectClass::ground, 1), validation_error);
    CHECK_THROWS_AS(make_surface(1, {{0, 0, 0}, {1, 0, 0}, {1, 1, 0.01}, {0, 1, 0}}, 0, ObjectClass::ground, 1), validation_error);
    CHECK_THROWS_AS(make_surface(1, {{0, 0, 0}, {2, 0, 0}, {1, 0.2, 0}, {2, 2, 0}, {0, 2, 0}}, 0, ObjectClass::ground, 1),
                    validation_error);
}

TEST_CASE("quantization keeps 9 significant digits", "[scene]")
{
    CHECK(quantize(1.0 / 3.0) == 0.333333333);
    CHECK(quantize(123456.7891234) == 123456.789);
    CHECK(quantize(0.0) == 0.0);
    CHECK(quantize(quantize(2.0 / 7.0)) == quantize(2.0 / 7.0));
}

TEST_CASE("object classes and modules round-trip through names", "[scene]")
{
    for (std::size_t i = 0; i < object_class_names.size(); ++i)
        CHECK(parse_object_class(object_class_names[i]) == ObjectClass(i));
    CHECK_FALSE(parse_object_class("spaceship"));
    for (auto m : all_modules)
        CHECK(parse_module(to_string(m)) == m);
    CHECK_FALSE(parse_module("m7"));
}

TEST_CASE("generated modules satisfy the scene invariants", "[scene][modules][property]")
{
    for (auto m : all_modules)
    {
        INFO("module " << to_string(m));
        ScenarioSpec spec;
        spec.module = m;
        const Scene s = build_module(spec);
        CHECK(int(s.surfaces.size()) == expected_surface_count(spec));
        CHECK(s.metadata.module == std::string(to_string(m)));
        CHECK_FALSE(s.metadata.concise);
        std::set<int> ids;
        for (const auto &f : s.surfaces)
        {
            REQUIRE(ids.insert(f.id).second);
            REQUIRE(f.area > 0.0);
            REQUIRE(std::abs(f.normal.norm() - 1.0) < 1e-12);
            REQUIRE(geom::planarity_deviation(f.vertices, f.normal) <= planarity_tolerance);
            REQUIRE(geom::is_convex_ccw(f.vertices, f.normal));
            for (const auto &v : f.vertices)
                REQUIRE(quantize(v) == v);
            REQUIRE(s.bbox.contains(geom::polygon_centroid(f.vertices), 1e-9));
        }
        for (const auto &w : s.wedges)
        {
            REQUIRE(w.n > 1.0);
            REQUIRE(w.n <= 2.0 + 1e-12);
            REQUIRE((w.end - w.start).norm() > 0.0);
            REQUIRE_NOTHROW(s.surface(w.face_a));
            REQUIRE_NOTHROW(s.surface(w.face_b));
        }
        CHECK(s.has_class(ObjectClass::ground));
        CHECK(s.has_class(ObjectClass::track));
        CHECK(s.has_class(ObjectClass::train));

        // Both antenna anchors lie inside the scene
        const auto lay = layout(spec);
        CHECK(s.bbox.contains(lay.tx_anchor + Vec3(0, 0, 6.0), 1e-9));
        CHECK(s.bbox.contains(Vec3(100.0, lay.rx_track_y, 4.5), 1e-9));
    }
    CHECK(build(ModuleKind::m5).has_class(ObjectClass::tunnel_wall));
    CHECK(build(ModuleKind::m1).has_class(ObjectClass::barrier));
    CHECK(build(ModuleKind::m3).has_class(ObjectClass::building));
    CHECK(build(ModuleKind::m3).has_class(ObjectClass::station));
    CHECK(build(ModuleKind::m4).has_class(ObjectClass::vegetation));
}

TEST_CASE("module parameters change the geometry", "[scene][modules]")
{
    ScenarioSpec s;
    s.module = ModuleKind::m1;
    s.barrier_height_m = 0.0;
    const auto a = build_module(s);
    CHECK_FALSE(a.has_class(ObjectClass::barrier));
    CHECK(int(a.surfaces.size()) == expected_surface_count(s));

    s.length_m = 1000.0;
    s.barrier_height_m = 3.0;
    const auto b = build_module(s);
    CHECK(b.bbox.hi.x() >= 1000.0);
    double top = 0.0;
    for (const auto &f : b.surfaces)
        if (f.object_class == ObjectClass::barrier)
            top = std::max(top, f.box.hi.z());
    CHECK(top == Approx(3.0));

    ScenarioSpec t;
    t.module = ModuleKind::m5;
    t.tunnel_shape = TunnelShape::arched;
    t.arch_segments = 8;
    t.furniture = {{50.0, 2.0, 1.0, 2.0}, {150.0, 0.5, 0.5, 0.5}};
    const auto arched = build_module(t);
    CHECK(int(arched.surfaces.size()) == expected_surface_count(t));
    CHECK(arched.has_class(ObjectClass::furniture));
}

TEST_CASE("scenario validation names the offending fields", "[scene][modules]")
{
    ScenarioSpec s;
    s.length_m = -1.0;
    s.pylon_spacing_m = 0.0;
    try
    {
        validate(s);
        FAIL("expected validation_error");
    }
    catch (const validation_error &e)
    {
        const std::string w = e.what();
        CHECK(w.find("length_m") != std::string::npos);
        CHECK(w.find("pylon_spacing_m") != std::string::npos);
    }
    ScenarioSpec m;
    m.materials[ObjectClass::barrier] = "Cheese";
    CHECK_THROWS_AS(validate(m), validation_error);
    ScenarioSpec f;
    f.furniture = {{10.0, 0.0, 1.0, 1.0}};
    CHECK_THROWS_AS(build_module(f), validation_error);
}

TEST_CASE("material overrides per class", "[scene][modules]")
{
    ScenarioSpec s;
    s.module = ModuleKind::m1;
    s.materials[ObjectClass::barrier] = "Tempered_glass";
    const auto sc = build_module(s);
    for (const auto &f : sc.surfaces)
        if (f.object_class == ObjectClass::barrier)
            CHECK(sc.material_of(f).name == "Tempered_glass");
}

TEST_CASE("wedge extraction", "[scene][wedges]")
{
    SECTION("closed cube: 12 right-angle edges")
    {
        std::istringstream in(cube_mesh);
        const auto s = import_mesh(in);
        REQUIRE(s.surfaces.size() == 6);
        REQUIRE(s.wedges.size() == 12);
        for (const auto &w : s.wedges)
        {
            CHECK(w.n == Approx(1.5));
            CHECK(w.face_a != w.face_b);
            CHECK((w.end - w.start).norm() == Approx(1.0));
        }
    }
    SECTION("single plate: four half-plane edges")
    {
        std::istringstream in("v 0 0 0\nv 2 0 0\nv 2 0 1\nv 0 0 1\no 7 billboard Metal\nf 1 2 3 4\n");
        const auto s = import_mesh(in);
        REQUIRE(s.wedges.size() == 4);
        for (const auto &w : s.wedges)
        {
            CHECK(w.n == 2.0);
            CHECK(w.face_a == w.face_b);
        }
    }
    SECTION("edge shared by three faces is skipped with a warning")
    {
        std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\n"
                              "o 1 building Concrete\nf 1 2 3\nf 2 1 4\nf 1 2 5\n");
        Scene s = import_mesh(in);
        std::vector<std::string> warnings;
        const auto w = extract_wedges(s, &warnings);
        CHECK_FALSE(warnings.empty());
        for (const auto &e : w)
        {
            const bool shared = (e.start - Vec3(0, 0, 0)).norm() + (e.end - Vec3(1, 0, 0)).norm() < 1e-12 ||
                                (e.start - Vec3(1, 0, 0)).norm() + (e.end - Vec3(0, 0, 0)).norm() < 1e-12;
            CHECK_FALSE(shared);
        }
    }
}

TEST_CASE("concise reduction", "[scene][reduction]")
{
    for (auto m : all_modules)
    {
        INFO("module " << to_string(m));
        const Scene full = build(m);
        ReductionReport rep;
        // Setup-2 antennas sit below the barrier top, the case the outdoor rule targets
        const Scene red = reduce_scene(full, 1.0, 0.92, &rep);
        CHECK(rep.surfaces_before == full.surfaces.size());
        CHECK(rep.surfaces_after == red.surfaces.size());
        CHECK(rep.removed_percent() >= 40.0);
        CHECK(red.metadata.concise);
        CHECK(red.metadata.param("reduction.surfaces_before") == std::to_string(full.surfaces.size()));
        // Kept surfaces are unchanged copies of originals
        for (const auto &s : red.surfaces)
        {
            const auto &o = full.surface(s.id);
            REQUIRE(o.vertices == s.vertices);
            REQUIRE(o.object_id == s.object_id);
        }
        // Reducing twice changes nothing more
        CHECK(reduce_scene(red, 1.0, 0.92).surfaces.size() == red.surfaces.size());
        CHECK_FALSE(red.has_class(ObjectClass::track));
    }
    SECTION("antennas above the barriers keep everything but the tracks")
    {
        const Scene full = build(ModuleKind::m1);
        const Scene red = reduce_scene(full, 6.0, 4.5);
        std::size_t tracks = 0;
        for (const auto &f : full.surfaces)
            tracks += f.object_class == ObjectClass::track;
        CHECK(red.surfaces.size() == full.surfaces.size() - tracks);
        CHECK(red.has_class(ObjectClass::pylon));
    }
    SECTION("low antennas drop pylons and everything outside the barriers")
    {
        const Scene red = reduce_scene(build(ModuleKind::m3), 1.0, 0.92);
        CHECK_FALSE(red.has_class(ObjectClass::pylon));
        CHECK_FALSE(red.has_class(ObjectClass::building));
        CHECK(red.has_class(ObjectClass::barrier));
    }
    SECTION("tunnel furniture kept only above the area threshold")
    {
        ScenarioSpec t;
        t.module = ModuleKind::m5;
        t.furniture = {{50.0, 2.0, 1.0, 2.0}, {150.0, 0.5, 0.5, 0.5}};
        const auto red = reduce_scene(build_module(t), 6.0, 4.5);
        int furniture = 0;
        for (const auto &s : red.surfaces)
            furniture += s.object_class == ObjectClass::furniture;
        CHECK(furniture == 6);
    }
    SECTION("scene without corridor walls cannot be classified")
    {
        std::istringstream in(cube_mesh);
        CHECK_THROWS_AS(reduce_scene(import_mesh(in), 6.0, 4.5), classification_error);
    }
}

TEST_CASE("scene file round trip", "[scene][io][property]")
{
    for (auto m : all_modules)
    {
        const Scene s = reduce_scene(build(m), 1.0, 0.92);
        std::stringstream buf;
        write_scene(buf, s);
        const Scene r = read_scene(buf);
        CHECK(r == s);
        std::stringstream again;
        write_scene(again, r);
        CHECK(again.str() == buf.str());
    }
}

TEST_CASE("malformed scene files report the line", "[scene][io]")
{
    auto line_of = [](const std::string &text) -> std::size_t {
        std::istringstream in(text);
        try
        {
            read_scene(in);
        }
        catch (const parse_error &e)
        {
            return e.line;
        }
        return 0;
    };
    const std::string head = "RCSCENE 1\nmeta module m1\nmeta concise 0\n";
    CHECK(line_of("RCSCENE 2\n") == 1);
    CHECK(line_of(head + "o 1 ground\ns 1 Concrete 3 0 0 0 1 0 0\n") == 5);
    CHECK(line_of(head + "o 1 nowhere\n") == 4);
    CHECK(line_of(head + "o 1 ground\ns 1 Concrete 3 0 0 0 1 0 0 2 0 0\n") == 5);
    CHECK(line_of(head + "x 1\n") == 4);
    std::istringstream unknown_material(head + "o 1 ground\ns 1 Cheese 3 0 0 0 1 0 0 0 1 0\n");
    CHECK_THROWS_AS(read_scene(unknown_material), resolution_error);
    std::istringstream dup(head + "o 1 ground\ns 1 Concrete 3 0 0 0 1 0 0 0 1 0\ns 1 Concrete 3 0 0 1 1 0 1 0 1 1\n");
    CHECK_THROWS_WITH(read_scene(dup), Catch::Matchers::ContainsSubstring("duplicate surface id"));
}

TEST_CASE("mesh import errors", "[scene][io]")
{
    std::istringstream a("f 1 2 3\n");
    CHECK_THROWS_AS(import_mesh(a), parse_error);
    std::istringstream b("v 0 0 0\no 1 ground Concrete\nf 1 2 3\n");
    CHECK_THROWS_AS(import_mesh(b), parse_error);
    std::istringstream c("v 0 0 0\no 1 ground Cheese\n");
    CHECK_THROWS_AS(import_mesh(c), resolution_error);
}

TEST_CASE("lookups by id", "[scene]")
{
    const Scene s = build(ModuleKind::m6);
    const auto &first = s.surfaces.front();
    CHECK(s.surface(first.id).id == first.id);
    CHECK(s.surface_index(first.id) == 0);
    CHECK_THROWS_AS(s.surface(-5), lookup_error);
    CHECK(object_area(s, first.object_id) > 0.0);
    CHECK_THROWS_AS(object_area(s, 99999), lookup_error);
}
