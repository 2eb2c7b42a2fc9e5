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

#include <railchan/em.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace railchan;
using namespace railchan::em;
using Catch::Approx;

namespace
{
    // Snell-law formulation with the complex transmission angle; independent of em::fresnel
    FresnelCoefficients fresnel_oracle(cdouble eps, double theta)
    {
        const cdouble n = std::sqrt(eps);
        const cdouble sin_t = std::sin(theta) / n;
        const cdouble cos_t = std::sqrt(1.0 - sin_t * sin_t);
        const double ci = std::cos(theta);
        return {(ci - n * cos_t) / (ci + n * cos_t), (n * ci - cos_t) / (n * ci + cos_t)};
    }

    // Composite Simpson rule
    template <class F> cdouble simpson(F f, double a, double b, int n)
    {
        const double h = (b - a) / n;
        cdouble s = f(a) + f(b);
        for (int i = 1; i < n; ++i)
            s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
        return s * h / 3.0;
    }
}

TEST_CASE("Fresnel coefficients match the Snell-law oracle", "[em][fresnel]")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> er(1.0, 30.0), td(0.0, 2.0), th(0.0, 1.55);
    for (int i = 0; i < 500; ++i)
    {
        const auto eps = ComplexPermittivity::from_loss_tangent(er(rng), td(rng));
        const double t = th(rng);
        const auto a = fresnel(eps, t);
        const auto b = fresnel_oracle(eps.value(), t);
        REQUIRE(std::abs(a.soft - b.soft) < 1e-12);
        REQUIRE(std::abs(a.hard - b.hard) < 1e-12);
    }
}

TEST_CASE("Fresnel physical properties", "[em][fresnel][property]")
{
    SECTION("passive media never amplify")
    {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> er(1.0, 80.0), td(0.0, 5.0), th(0.0, 1.5707);
        for (int i = 0; i < 2000; ++i)
        {
            const auto f = fresnel(ComplexPermittivity::from_loss_tangent(er(rng), td(rng)), th(rng));
            REQUIRE(std::abs(f.soft) <= 1.0 + 1e-12);
            REQUIRE(std::abs(f.hard) <= 1.0 + 1e-12);
        }
    }
    SECTION("normal incidence: hard = -soft")
    {
        for (const auto &m : material_table())
        {
            const auto f = fresnel(ComplexPermittivity::of(m), 0.0);
            REQUIRE(std::abs(f.hard + f.soft) < 1e-12);
        }
    }
    SECTION("grazing incidence tends to -1")
    {
        const auto f = fresnel(ComplexPermittivity::from_loss_tangent(5.0, 0.1), pi / 2 - 1e-7);
        REQUIRE(std::abs(f.soft + 1.0) < 1e-5);
        REQUIRE(std::abs(f.hard + 1.0) < 1e-5);
    }
    SECTION("vacuum reflects nothing")
    {
        const auto f = fresnel(ComplexPermittivity(1.0), 0.7);
        REQUIRE(std::abs(f.soft) < 1e-15);
        REQUIRE(std::abs(f.hard) < 1e-15);
    }
}

TEST_CASE("Fresnel reference values", "[em][fresnel]")
{
    // Brewster null for a lossless eps_r = 4
    const auto b = fresnel(ComplexPermittivity(4.0), std::atan(2.0));
    CHECK(std::abs(b.hard) < 1e-6);

    // Concrete at normal incidence
    const auto c = fresnel(ComplexPermittivity::of(lookup_material("Concrete")), 0.0);
    const cdouble n = std::sqrt(cdouble(1.06, -1.06 * 0.65));
    CHECK(std::abs(c.soft) == Approx(std::abs((1.0 - n) / (1.0 + n))).epsilon(1e-12));
    CHECK(std::abs(std::abs(c.soft) - 0.156) <= 0.002);

    // Metal is a strong reflector for the soft component at every angle
    const auto metal = ComplexPermittivity::of(lookup_material("Metal"));
    for (int deg = 0; deg < 90; ++deg)
        CHECK(std::abs(std::abs(fresnel(metal, deg / deg_per_rad).soft) - 1.0) < 1e-3);
}

TEST_CASE("Fresnel rejects invalid input", "[em][fresnel]")
{
    const auto eps = ComplexPermittivity(4.0);
    CHECK_THROWS_AS(fresnel(eps, -0.1), domain_error);
    CHECK_THROWS_AS(fresnel(eps, pi / 2), domain_error);
    CHECK_THROWS_AS(ComplexPermittivity(cdouble(0.5, 0.0)), domain_error);
    CHECK_THROWS_AS(ComplexPermittivity(cdouble(2.0, 0.1)), domain_error);
}

TEST_CASE("Fresnel integrals", "[em][utd]")
{
    // Tabulated values
    CHECK(fresnel_integral(1.0).real() == Approx(0.7798934003768228).epsilon(1e-12));
    CHECK(fresnel_integral(1.0).imag() == Approx(0.4382591473903548).epsilon(1e-12));
    CHECK(std::abs(fresnel_integral(1e4) - cdouble(0.5, 0.5)) < 1e-4);
    CHECK(std::abs(fresnel_integral(0.0)) == 0.0);

    // Quadrature oracle across the series / continued-fraction switch
    for (double x : {0.1, 0.7, 1.4, 1.5, 1.6, 2.5, 4.0})
    {
        const cdouble q = simpson([](double t) { return std::polar(1.0, pi * t * t / 2); }, 0.0, x, 20000);
        CHECK(std::abs(fresnel_integral(x) - q) < 1e-10);
        CHECK(fresnel_integral(-x) == -fresnel_integral(x));
    }
}

TEST_CASE("UTD transition function", "[em][utd]")
{
    // Large-argument asymptote 1 + j/(2X) - 3/(4X^2)
    for (double X : {30.0, 100.0, 1000.0})
    {
        const cdouble a = 1.0 + cdouble(0.0, 0.5 / X) - 0.75 / (X * X);
        CHECK(std::abs(utd_transition(X) - a) < 2.0 / (X * X * X));
    }
    // Small-argument behaviour sqrt(pi X) e^{j(pi/4 + X)} (leading order)
    for (double X : {1e-6, 1e-5})
    {
        const cdouble a = std::sqrt(pi * X) * std::polar(1.0, pi / 4 + X);
        CHECK(std::abs(utd_transition(X) - a) < 3.0 * X);
    }
    // Direct quadrature of the defining integral, truncated with the asymptotic tail
    for (double X : {0.3, 2.0, 8.0})
    {
        const double u = std::sqrt(X), U = 60.0;
        cdouble I = simpson([](double t) { return std::polar(1.0, -t * t); }, u, U, 400000);
        I += std::polar(1.0, -U * U) / cdouble(0.0, 2.0 * U); // int_U^inf e^{-j t^2} ~ e^{-jU^2}/(2jU)
        const cdouble F = cdouble(0.0, 2.0) * u * std::polar(1.0, X) * I;
        CHECK(std::abs(utd_transition(X) - F) < 1e-5);
    }
    CHECK_THROWS_AS(utd_transition(-1.0), domain_error);
}

TEST_CASE("UTD coefficient properties", "[em][utd][property]")
{
    const double k = 2 * pi / wavelength(30e9);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> nn(1.05, 2.0), u(0.0, 1.0);
    for (int i = 0; i < 300; ++i)
    {
        WedgeGeometry g;
        g.n = nn(rng);
        g.phi_incident = 0.02 + u(rng) * (g.n * pi - 0.04);
        g.phi_diffracted = 0.02 + u(rng) * (g.n * pi - 0.04);
        g.beta0 = 0.3 + u(rng) * (pi - 0.6);
        g.s_incident = 1.0 + 20.0 * u(rng);
        g.s_diffracted = 1.0 + 20.0 * u(rng);
        const auto d = utd_coefficient(g, k);
        REQUIRE(std::isfinite(std::abs(d(0, 0))));
        REQUIRE(std::isfinite(std::abs(d(1, 1))));
        REQUIRE(d(0, 1) == cdouble(0.0));

        // Reciprocity: exchanging source and observer leaves D unchanged
        WedgeGeometry r = g;
        std::swap(r.phi_incident, r.phi_diffracted);
        std::swap(r.s_incident, r.s_diffracted);
        const auto dr = utd_coefficient(r, k);
        REQUIRE(std::abs(dr(0, 0) - d(0, 0)) <= 1e-9 * std::abs(d(0, 0)) + 1e-15);
        REQUIRE(std::abs(dr(1, 1) - d(1, 1)) <= 1e-9 * std::abs(d(1, 1)) + 1e-15);
    }

    SECTION("soft coefficient vanishes with the source on a face")
    {
        WedgeGeometry g{2.0, 0.0, 2.0, pi / 2, 5.0, 5.0};
        CHECK(std::abs(utd_coefficient(g, k)(0, 0)) < 1e-12);
    }
    SECTION("jump across a shadow boundary cancels the geometrical-optics jump")
    {
        // Incident shadow boundary at phi = pi + phi'; the incident field at the observer
        // relative to the edge is s'/(s + s'), so |D+ - D-| * spreading = s'/(s + s')
        WedgeGeometry g{1.5, 0.6, pi + 0.6, pi / 2, 3.0, 4.0};
        const auto on = utd_coefficient(g, k);
        REQUIRE(std::isfinite(std::abs(on(1, 1))));
        g.phi_diffracted = pi + 0.6 - 1e-8;
        const auto lo = utd_coefficient(g, k);
        g.phi_diffracted = pi + 0.6 + 1e-8;
        const auto hi = utd_coefficient(g, k);
        const double L = 3.0 * 4.0 / 7.0;
        CHECK(std::abs(hi(1, 1) - lo(1, 1)) == Approx(std::sqrt(L)).epsilon(1e-3));
        CHECK(std::abs(hi(0, 0) - lo(0, 0)) == Approx(std::sqrt(L)).epsilon(1e-3));
    }
    SECTION("invalid geometry throws")
    {
        CHECK_THROWS_AS(utd_coefficient({2.5, 0.1, 0.2, pi / 2, 1, 1}, k), domain_error);
        CHECK_THROWS_AS(utd_coefficient({2.0, 0.1, 0.2, 0.0, 1, 1}, k), domain_error);
        CHECK_THROWS_AS(utd_coefficient({2.0, 0.1, 7.0, pi / 2, 1, 1}, k), domain_error);
        CHECK_THROWS_AS(utd_coefficient({2.0, 0.1, 0.2, pi / 2, 0, 1}, k), domain_error);
    }
    CHECK(utd_spreading(2.0, 3.0) == Approx(std::sqrt(2.0 / 15.0)));
}

TEST_CASE("Directive lobe normalization equals the hemisphere integral", "[em][scatter]")
{
    for (int alpha : {1, 2, 4, 7})
        for (double ti : {0.0, 0.4, 1.0, 1.45})
        {
            // Specular direction in the x-z plane, theta_i from the normal z
            const Vec3 spec(std::sin(ti), 0.0, std::cos(ti));
            const int nt = 600, np = 1200;
            double sum = 0.0;
            for (int a = 0; a < nt; ++a)
            {
                const double t = (a + 0.5) * (pi / 2) / nt;
                for (int b = 0; b < np; ++b)
                {
                    const double p = (b + 0.5) * 2 * pi / np;
                    const Vec3 d(std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t));
                    sum += directive_lobe(std::acos(std::clamp(d.dot(spec), -1.0, 1.0)), alpha) * std::sin(t);
                }
            }
            sum *= (pi / 2 / nt) * (2 * pi / np);
            CHECK(lobe_normalization(ti, alpha) == Approx(sum).epsilon(1e-4));
        }
    CHECK_THROWS_AS(lobe_normalization(0.2, 0), domain_error);
}

TEST_CASE("Scattering amplitude", "[em][scatter][property]")
{
    const double lambda = wavelength(64.32e9);
    ScatterGeometry g{0.3, 0.9, 0.5, 1.0, 10.0, 20.0};
    ScatterGeometry swapped{0.9, 0.3, 0.5, 1.0, 20.0, 10.0};
    CHECK(scatter_magnitude(g, 0.4, 4, lambda) == Approx(scatter_magnitude(swapped, 0.4, 4, lambda)).epsilon(1e-14));

    // Amplitude scales with S and sqrt(area), falls with both distances
    CHECK(scatter_magnitude(g, 0.8, 4, lambda) == Approx(2.0 * scatter_magnitude(g, 0.4, 4, lambda)));
    ScatterGeometry big = g;
    big.tile_area = 4.0;
    CHECK(scatter_magnitude(big, 0.4, 4, lambda) == Approx(2.0 * scatter_magnitude(g, 0.4, 4, lambda)));
    ScatterGeometry far = g;
    far.r_s = 40.0;
    CHECK(scatter_magnitude(far, 0.4, 4, lambda) == Approx(0.5 * scatter_magnitude(g, 0.4, 4, lambda)));
    CHECK(scatter_magnitude(g, 0.0, 4, lambda) == 0.0);

    // Specular direction of the lobe is the maximum
    ScatterGeometry off = g;
    off.psi_r = 0.0;
    CHECK(scatter_magnitude(off, 0.4, 4, lambda) > scatter_magnitude(g, 0.4, 4, lambda));

    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i)
    {
        const double ph = uniform_phase(rng);
        REQUIRE(ph >= 0.0);
        REQUIRE(ph < 2 * pi);
    }
    std::mt19937_64 r1(9), r2(9);
    CHECK(scatter_gain(g, 0.4, 4, lambda, r1) == scatter_gain(g, 0.4, 4, lambda, r2));
    CHECK(std::abs(scatter_gain(g, 0.4, 4, lambda, r1)) == Approx(scatter_magnitude(g, 0.4, 4, lambda)));
    CHECK_THROWS_AS(scatter_magnitude({0.3, 0.3, 0.0, 1.0, 0.0, 1.0}, 0.4, 4, lambda), domain_error);
    CHECK_THROWS_AS(scatter_magnitude({0.3, 2.0, 0.0, 1.0, 1.0, 1.0}, 0.4, 4, lambda), domain_error);
}

TEST_CASE("Free space and vegetation", "[em]")
{
    const double f = 64.32e9;
    // 1 m intercept at 64.32 GHz
    CHECK(free_space_loss_db(1.0, f) == Approx(20.0 * std::log10(4.0 * pi * f / 299792458.0)).epsilon(1e-12));
    CHECK(free_space_loss_db(1.0, f) == Approx(68.61).margin(0.01));
    for (double d : {1.0, 10.0, 123.4})
    {
        CHECK(-20.0 * std::log10(std::abs(free_space_gain(d, f))) == Approx(free_space_loss_db(d, f)).epsilon(1e-12));
        CHECK(free_space_loss_db(10.0 * d, f) - free_space_loss_db(d, f) == Approx(20.0));
    }
    // Phase advances by -k per metre
    const double k = 2 * pi * f / speed_of_light;
    const cdouble r = free_space_gain(2.0, f) / free_space_gain(1.0, f);
    CHECK(std::abs(r / std::abs(r) - std::polar(1.0, -k)) < 1e-9);
    CHECK_THROWS_AS(free_space_gain(0.0, f), domain_error);
    CHECK_THROWS_AS(free_space_loss_db(1.0, -1.0), domain_error);

    CHECK(vegetation_loss(0.0, 2.0) == 0.0);
    CHECK(vegetation_loss(5.0, 2.0) == Approx(10.0));
    CHECK_THROWS_AS(vegetation_loss(-1.0, 2.0), domain_error);
}

TEST_CASE("Material database", "[em][materials]")
{
    CHECK(material_table().size() == 8);
    const auto g = find_material("Tempered glass");
    REQUIRE(g);
    CHECK(g->eps_r == 10.0);
    CHECK(g->tan_delta == 0.43);
    CHECK(lookup_material("Ceramic_tile").eps_r == 1.85);
    CHECK_FALSE(find_material("Unobtainium"));
    CHECK_THROWS_AS(lookup_material("Unobtainium"), resolution_error);
    for (const auto &m : material_table())
        CHECK_NOTHROW(validate(m));

    std::istringstream ok("# custom\nWood 2.0 0.1 0.3 3 0\nMetal 1.0 1e7 0.2 6 0\n");
    const auto parsed = parse_materials(ok);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].name == "Wood");
    CHECK(parsed[1].scatter_alpha == 6);

    std::istringstream bad("Wood 2.0 0.1 0.3 3 0\nBrick 0.5 0.1 0.3 3 0\n");
    try
    {
        parse_materials(bad);
        FAIL("expected a parse error");
    }
    catch (const parse_error &e)
    {
        CHECK(e.line == 2);
    }
    std::istringstream short_line("Wood 2.0 0.1\n");
    CHECK_THROWS_AS(parse_materials(short_line), parse_error);
    CHECK_THROWS_AS(validate(Material{"X", 2.0, 0.1, 1.5, 4, 0.0}), validation_error);
}
