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

#include "checks.hpp"

#include <railchan/tracer.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace railchan;
using namespace railchan::tracer;
using Catch::Approx;

namespace
{
    TraceConfig reflections_only(int order, double f = 64.32e9)
    {
        TraceConfig c;
        c.max_reflection_order = order;
        c.enable_diffraction = false;
        c.enable_scattering = false;
        c.center_frequency = f;
        return c;
    }

    scene::Scene module(scene::ModuleKind m)
    {
        scene::ScenarioSpec s;
        s.module = m;
        return scene::build_module(s);
    }
}

TEST_CASE("image method equals the exhaustive oracle", "[tracer][oracle]")
{
    for (int order = 0; order <= 3; ++order)
    {
        INFO("order " << order);
        const auto box = checks::oracle_sweep(oracle::box_room(), {0.3, 0.3, 0.3}, {9.7, 5.7, 3.7}, order, 25, 100 + order);
        CHECK(box.count_mismatches == 0);
        CHECK(box.max_delay_rel <= 1e-9);
        CHECK(box.max_gain_rel <= 1e-9);
        const auto cor = checks::oracle_sweep(oracle::corridor(), {1.0, -7.5, 0.3}, {59.0, 7.5, 4.7}, order, 25, 200 + order);
        CHECK(cor.count_mismatches == 0);
        CHECK(cor.max_delay_rel <= 1e-9);
        CHECK(cor.max_gain_rel <= 1e-9);
    }
    // Shoebox at order 2: LOS, 6 walls, 6 opposite pairs, one ordering per adjacent pair (12)
    const auto paths = oracle::trace(oracle::box_room(), {2, 2, 1.5}, {7, 4, 2.5}, 2, 64.32e9);
    CHECK(paths.size() == 25);
    CHECK(trace_all(oracle::box_room(), {2, 2, 1.5}, {7, 4, 2.5}, reflections_only(2)).size() == 25);
}

TEST_CASE("module M5 setup 1 at order 2 matches the oracle count", "[tracer][oracle]")
{
    const auto s = module(scene::ModuleKind::m5);
    scene::ScenarioSpec spec;
    const auto lay = scene::layout(spec);
    const Vec3 tx = lay.tx_anchor + Vec3(0, 0, 6.0);
    for (double x : {20.0, 75.0, 180.0, 420.0})
    {
        const Vec3 rx(x, lay.rx_track_y, 4.5);
        const auto c = oracle::compare(s, tx, rx, 2, 64.32e9);
        CHECK(c.identical(1e-9));
        const auto paths = trace_all(s, tx, rx, reflections_only(2));
        REQUIRE(!paths.empty());
        CHECK(paths.front().is_los());
        std::set<scene::ObjectClass> classes;
        for (const auto &p : paths)
            for (const auto &ip : p.chain)
                classes.insert(s.surface(ip.id).object_class);
        CHECK(classes.count(scene::ObjectClass::tunnel_wall));
        CHECK(classes.count(scene::ObjectClass::ground));
    }
}

TEST_CASE("reciprocity", "[tracer][property]")
{
    const auto m5 = module(scene::ModuleKind::m5);
    const Vec3 lo(1.0, -5.0, 0.5), hi(480.0, 0.0, 7.0);
    SECTION("reflections to order 3")
    {
        const auto r = checks::reciprocity(m5, reflections_only(3), lo, hi, 30, 7);
        CHECK(r.count_mismatches == 0);
        CHECK(r.max_delay_rel <= 1e-9);
        CHECK(r.max_gain_rel <= 1e-9);
    }
    SECTION("diffraction")
    {
        TraceConfig c = reflections_only(0);
        c.enable_diffraction = true;
        const auto r = checks::reciprocity(m5, c, lo, hi, 30, 8);
        CHECK(r.count_mismatches == 0);
        CHECK(r.max_gain_rel <= 1e-9);
    }
    SECTION("scattering with a shared phase seed")
    {
        TraceConfig c = reflections_only(0);
        c.enable_scattering = true;
        c.scatter_tile_size = 4.0;
        const auto r = checks::reciprocity(oracle::corridor(), c, {2, -7, 0.5}, {58, 7, 4.5}, 10, 9);
        CHECK(r.count_mismatches == 0);
        CHECK(r.max_gain_rel <= 1e-9);
    }
}

TEST_CASE("line of sight", "[tracer]")
{
    const auto s = oracle::box_room();
    const Vec3 tx(1, 1, 1), rx(4, 5, 1);
    const auto p = trace_los(s, tx, rx);
    REQUIRE(p);
    const cdouble a = em::free_space_gain(5.0, 64.32e9);
    CHECK(std::abs(p->gain(0, 0) - a) < 1e-15);
    CHECK(std::abs(p->gain(1, 1) + a) < 1e-15);
    CHECK(std::abs(p->gain(0, 1)) < 1e-15);
    CHECK(std::abs(p->gain(1, 0)) < 1e-15);
    CHECK(p->delay_s == Approx(5.0 / speed_of_light).epsilon(1e-15));
    CHECK(p->aod.azimuth_deg == Approx(std::atan2(4.0, 3.0) * deg_per_rad));
    CHECK(p->aoa.azimuth_deg == Approx(std::atan2(-4.0, -3.0) * deg_per_rad));
    CHECK(p->label() == "LOS");
    CHECK_THROWS_AS(trace_los(s, tx, tx), domain_error);

    // Blocked by the kiosk
    const auto c = oracle::corridor();
    CHECK_FALSE(trace_los(c, {25, 2, 1}, {35, 2, 1}));
    CHECK(trace_los(c, {25, -2, 1}, {35, -2, 1}));
}

TEST_CASE("antenna bases", "[tracer][property]")
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    for (int i = 0; i < 200; ++i)
    {
        const Vec3 u = Vec3(n(rng), n(rng), n(rng)).normalized();
        const auto b = vh_basis(u);
        const Vec3 v = b.col(0), h = b.col(1);
        REQUIRE(std::abs(v.norm() - 1.0) < 1e-12);
        REQUIRE(std::abs(h.norm() - 1.0) < 1e-12);
        REQUIRE(std::abs(v.dot(h)) < 1e-12);
        REQUIRE(std::abs(v.dot(u)) < 1e-12);
        REQUIRE((v.cross(h) - u).norm() < 1e-12);
        REQUIRE(std::abs(h.z()) < 1e-12); // horizontal polarization is horizontal
        const auto d = direction_of(u);
        REQUIRE((unit_vector(d) - u).norm() < 1e-12);
    }
    // zenith fallback stays orthonormal
    const auto z = vh_basis(Vec3::UnitZ());
    CHECK(std::abs(z.col(0).dot(z.col(1))) < 1e-12);
}

TEST_CASE("reflection dyadic", "[tracer]")
{
    // PEC limit: soft -1, hard +1 maps a field to its mirror image with a sign flip
    const Vec3 n = Vec3::UnitZ();
    const Vec3 ki = Vec3(1, 0, -1).normalized(), kr = Vec3(1, 0, 1).normalized();
    const Mat3c m = reflection_dyadic(ki, kr, n, -1.0, 1.0);
    const Vec3 e_h = Vec3::UnitY(); // perpendicular to the plane of incidence
    CHECK(((m * e_h.cast<cdouble>()) + e_h.cast<cdouble>()).norm() < 1e-12);
    const Vec3 e_p = Vec3::UnitY().cross(ki); // parallel
    const Eigen::Vector3cd out = m * e_p.cast<cdouble>();
    CHECK(std::abs(out.dot(kr.cast<cdouble>())) < 1e-12); // transverse to the reflected ray
    CHECK(out.norm() == Approx(1.0));
    // Normal incidence: independent of the fallback perpendicular
    const Mat3c nm = reflection_dyadic(-n, n, n, -0.5, 0.5);
    CHECK((nm.block<2, 2>(0, 0) + 0.5 * Eigen::Matrix2cd::Identity()).norm() < 1e-12);
}

TEST_CASE("UTD half-plane continuity at 30 GHz", "[tracer][utd]")
{
    const auto r = checks::utd_steps();
    CHECK(r.isb_db < 0.5);
    CHECK(r.rsb_db < 0.5);
    CHECK(r.sweep_max_step_db < 0.5);
    // Without diffraction the geometrical-optics field jumps
    CHECK(r.isb_go_db > 3.0);
    CHECK(r.rsb_go_db > 3.0);
}

TEST_CASE("diffraction paths", "[tracer][utd]")
{
    const auto s = checks::half_plane();
    TraceConfig c = reflections_only(0, 30e9);
    c.enable_diffraction = true;
    const Vec3 rx(0, 3, -2.5); // deep shadow: diffraction only
    const auto paths = trace_all(s, checks::half_plane_tx, rx, c);
    REQUIRE_FALSE(paths.empty());
    const PropagationPath *edge = nullptr;
    for (const auto &p : paths)
        if (p.chain.size() == 1 && p.chain[0].kind == Interaction::diffraction && p.chain[0].point.norm() < 1e-9)
            edge = &p;
    REQUIRE(edge);
    CHECK(edge->length_m == Approx((checks::half_plane_tx).norm() + rx.norm()));
    // Shadow region: weaker than free space over the same length
    CHECK(std::abs(edge->gain(0, 0)) < std::abs(em::free_space_gain(edge->length_m, 30e9)));
    CHECK(std::abs(edge->gain(0, 1)) < 1e-9 * std::abs(edge->gain(0, 0)));
    for (const auto &p : paths)
        CHECK_FALSE(p.is_los());
}

TEST_CASE("scattering", "[tracer][scatter]")
{
    const auto s = oracle::corridor();
    TraceConfig c = reflections_only(0);
    c.enable_scattering = true;
    c.scatter_tile_size = 2.0;
    const Tracer t(s, c);
    CHECK(t.tile_count() > 100);
    const Vec3 tx(5, -3, 3), rx(50, 3, 2);
    const auto a = t.scattering(tx, rx, {1, 0});
    const auto b = t.scattering(tx, rx, {1, 0});
    const auto d = t.scattering(tx, rx, {1, 1});
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() == d.size());
    REQUIRE_FALSE(a.empty());
    bool phase_differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        CHECK(a[i].gain == b[i].gain);
        CHECK(a[i].power() == Approx(d[i].power()).epsilon(1e-12));
        phase_differs = phase_differs || std::abs(a[i].gain(0, 0) - d[i].gain(0, 0)) > 1e-6 * std::abs(a[i].gain(0, 0));
        CHECK(a[i].chain.front().kind == Interaction::scattering);
        CHECK(a[i].chain.front().tile >= 0);
    }
    CHECK(phase_differs);
    // Tiles cover each surface exactly
    for (const auto &surf : s.surfaces)
    {
        double area = 0.0;
        for (const auto &[cen, ar] : tile_polygon(surf, 1.5))
            area += ar;
        CHECK(area == Approx(surf.area).epsilon(1e-9));
    }
    // Material with S = 0 scatters nothing
    scene::Scene glass;
    glass.materials = em::material_table();
    glass.materials[std::size_t(oracle::material_index(glass, "Metal"))].scatter_s = 0.0;
    oracle::quad(glass, {{0, -5, 0}, {10, -5, 0}, {10, 5, 0}, {0, 5, 0}}, Vec3::UnitZ(), "Metal", scene::ObjectClass::ground, 1);
    glass.finalize();
    CHECK(trace_scattering(glass, {1, 0, 1}, {9, 0, 1}, c, {}).empty());
}

TEST_CASE("vegetation attenuates and does not occlude", "[tracer]")
{
    scene::Scene s;
    s.materials = em::material_table();
    // 2 m thick vegetation slab across the link: a closed box x in [4, 6]
    const double x0 = 4, x1 = 6, y0 = -3, y1 = 3, z1 = 4;
    using scene::ObjectClass;
    oracle::quad(s, {{x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1}}, Vec3::UnitZ(), "Vegetation", ObjectClass::vegetation, 1);
    oracle::quad(s, {{x0, y0, 0}, {x1, y0, 0}, {x1, y1, 0}, {x0, y1, 0}}, -Vec3::UnitZ(), "Vegetation", ObjectClass::vegetation, 1);
    oracle::quad(s, {{x0, y0, 0}, {x1, y0, 0}, {x1, y0, z1}, {x0, y0, z1}}, -Vec3::UnitY(), "Vegetation", ObjectClass::vegetation, 1);
    oracle::quad(s, {{x0, y1, 0}, {x1, y1, 0}, {x1, y1, z1}, {x0, y1, z1}}, Vec3::UnitY(), "Vegetation", ObjectClass::vegetation, 1);
    oracle::quad(s, {{x0, y0, 0}, {x0, y1, 0}, {x0, y1, z1}, {x0, y0, z1}}, -Vec3::UnitX(), "Vegetation", ObjectClass::vegetation, 1);
    oracle::quad(s, {{x1, y0, 0}, {x1, y1, 0}, {x1, y1, z1}, {x1, y0, z1}}, Vec3::UnitX(), "Vegetation", ObjectClass::vegetation, 1);
    s.finalize();
    TraceConfig c = reflections_only(2);
    const Vec3 tx(0, 0, 2), rx(10, 0, 2);
    const auto p = trace_los(s, tx, rx, c);
    REQUIRE(p);
    const double loss_db = 20.0 * std::log10(std::abs(em::free_space_gain(10.0, c.center_frequency)) / std::abs(p->gain(0, 0)));
    CHECK(loss_db == Approx(2.0 * em::lookup_material("Vegetation").veg_atten).epsilon(1e-9));
    CHECK(trace_all(s, tx, rx, c).size() == 1); // no reflections from vegetation
    c.enable_vegetation = false;
    const auto q = trace_los(s, tx, rx, c);
    REQUIRE(q);
    CHECK(std::abs(q->gain(0, 0)) == Approx(std::abs(em::free_space_gain(10.0, c.center_frequency))));
}

TEST_CASE("canonical ordering and culling", "[tracer]")
{
    const auto s = oracle::box_room();
    auto paths = trace_all(s, {2, 2, 1}, {8, 3, 3}, reflections_only(3));
    for (std::size_t i = 1; i < paths.size(); ++i)
        CHECK(paths[i - 1].delay_s <= paths[i].delay_s);
    auto shuffled = paths;
    std::reverse(shuffled.begin(), shuffled.end());
    shuffled.push_back(shuffled.front());
    Tracer::canonical_sort(shuffled);
    REQUIRE(shuffled.size() == paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i)
        CHECK(paths[i].label() == shuffled[i].label());

    TraceConfig strict = reflections_only(3);
    strict.min_path_gain_db = -70.0;
    const auto culled = trace_all(s, {2, 2, 1}, {8, 3, 3}, strict);
    CHECK(culled.size() < paths.size());
    for (const auto &p : culled)
        CHECK(10.0 * std::log10(p.power()) >= -70.0);
}

TEST_CASE("trace configuration validation", "[tracer]")
{
    TraceConfig c;
    c.max_reflection_order = 11;
    CHECK_THROWS_AS(validate(c), validation_error);
    c = {};
    c.scatter_tile_size = 0.0;
    CHECK_THROWS_AS(validate(c), validation_error);
    c = {};
    c.center_frequency = -1.0;
    CHECK_THROWS_AS(Tracer(oracle::box_room(), c), validation_error);
}
