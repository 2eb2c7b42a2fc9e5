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

#include <railchan/stochgen.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace railchan;
using namespace railchan::stochgen;
using Catch::Approx;

namespace
{
    channel::TrajectorySpec straight(double x0, long n, double step)
    {
        channel::TrajectorySpec t;
        t.start = Vec3(x0, 0.0, 4.5);
        t.n_samples = n;
        t.sample_interval = step;
        return t;
    }

    const Vec3 tx(0.0, 0.0, 6.0);
}

TEST_CASE("parameter file round trip", "[stochgen][io]")
{
    StochasticParams p;
    p.pl = {61.25, 1.6, 2.7};
    p.k_db = {9.5, 2.25};
    p.as_log[2] = {0.8125, 0.1};
    p.n_clusters = 7;
    p.intra_cluster_decay = 1.0 / 3.0 * 1e-8;
    std::stringstream ss;
    write_params(ss, p);
    const auto q = read_params(ss);
    const auto a = param_entries(p), b = param_entries(q);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second == b[i].second);
    }

    std::stringstream partial("# only the exponent\npl.n = 1.7\n\n");
    CHECK(read_params(partial).pl.n == 1.7);
    std::stringstream unknown("pl.n = 2\nbogus = 1\n");
    CHECK_THROWS_AS(read_params(unknown), validation_error);
    std::stringstream noeq("pl.n 2\n");
    try
    {
        read_params(noeq);
        FAIL("no exception");
    }
    catch (const parse_error &e)
    {
        CHECK(e.line == 1);
    }
    std::stringstream badnum("pl.n = 2\nk_db.std = x\n");
    CHECK_THROWS_AS(read_params(badnum), parse_error);
    std::stringstream invalid("n_clusters = 0\nk_db.std = -1\n");
    try
    {
        read_params(invalid);
        FAIL("no exception");
    }
    catch (const validation_error &e)
    {
        const std::string m = e.what();
        CHECK(m.find("n_clusters") != std::string::npos);
        CHECK(m.find("k_db") != std::string::npos);
    }
}

TEST_CASE("fitting", "[stochgen]")
{
    SECTION("constant statistics give zero spreads")
    {
        std::vector<LinkSample> s;
        for (int i = 0; i < 60; ++i)
        {
            LinkSample l;
            l.distance_m = 10.0 + 3.0 * i;
            l.stats.path_loss_db = 60.0 + 20.0 * std::log10(l.distance_m);
            l.stats.k_factor_db = 6.0;
            l.stats.rms_delay_spread_s = 20e-9;
            l.stats.asa_deg = l.stats.asd_deg = 30.0;
            l.stats.esa_deg = l.stats.esd_deg = 5.0;
            s.push_back(l);
        }
        const auto p = fit_params(s);
        CHECK(p.k_db.std == 0.0);
        CHECK(p.ds_log.std == 0.0);
        CHECK(p.as_log[0].std == 0.0);
        CHECK(p.pl.n == Approx(2.0));
        CHECK(p.pl.sigma_sf_db < 1e-9);
        CHECK(p.k_db.mean == Approx(6.0));
        s.resize(49);
        CHECK_THROWS_AS(fit_params(s), fit_error);
    }
    SECTION("distance span")
    {
        std::vector<LinkSample> s(60);
        for (std::size_t i = 0; i < s.size(); ++i)
        {
            s[i].distance_m = 10.0 + 0.1 * double(i);
            s[i].stats.path_loss_db = 80.0;
        }
        CHECK_THROWS_AS(fit_params(s), fit_error);
    }
    SECTION("synthetic link statistics")
    {
        StochasticParams truth;
        std::mt19937_64 rng(17);
        std::normal_distribution<double> g;
        std::uniform_real_distribution<double> ld(1.0, 3.0);
        std::vector<LinkSample> s(10000);
        for (auto &l : s)
        {
            l.distance_m = std::pow(10.0, ld(rng));
            l.stats.path_loss_db = truth.pl.pl0_db + 10 * truth.pl.n * std::log10(l.distance_m) + truth.pl.sigma_sf_db * g(rng);
            l.stats.k_factor_db = truth.k_db.mean + truth.k_db.std * g(rng);
            l.stats.rms_delay_spread_s = std::pow(10.0, truth.ds_log.mean + truth.ds_log.std * g(rng));
            l.stats.asa_deg = std::pow(10.0, truth.as_log[0].mean + truth.as_log[0].std * g(rng));
            l.stats.asd_deg = std::pow(10.0, truth.as_log[1].mean + truth.as_log[1].std * g(rng));
            l.stats.esa_deg = std::pow(10.0, truth.as_log[2].mean + truth.as_log[2].std * g(rng));
            l.stats.esd_deg = std::pow(10.0, truth.as_log[3].mean + truth.as_log[3].std * g(rng));
        }
        const auto p = fit_params(s);
        auto rel = [](double a, double b) { return std::abs(a / b - 1.0); };
        CHECK(rel(p.pl.n, truth.pl.n) <= 0.03);
        CHECK(rel(p.pl.pl0_db, truth.pl.pl0_db) <= 0.03);
        CHECK(rel(p.pl.sigma_sf_db, truth.pl.sigma_sf_db) <= 0.10);
        CHECK(rel(p.k_db.mean, truth.k_db.mean) <= 0.03);
        CHECK(rel(p.k_db.std, truth.k_db.std) <= 0.10);
        CHECK(rel(p.ds_log.mean, truth.ds_log.mean) <= 0.03);
        CHECK(rel(p.ds_log.std, truth.ds_log.std) <= 0.10);
        for (std::size_t i = 0; i < 4; ++i)
        {
            CHECK(rel(p.as_log[i].mean, truth.as_log[i].mean) <= 0.03);
            CHECK(rel(p.as_log[i].std, truth.as_log[i].std) <= 0.10);
        }
    }
}

TEST_CASE("drawn link structure meets its targets", "[stochgen][property]")
{
    StochasticParams p;
    for (std::uint64_t link = 1; link <= 40; ++link)
    {
        std::vector<SynthSnapshot> snaps;
        synthesize_link(p, tx, straight(50.0, 1, 1.0), channel::BandSpec{}, 99, link, [&](SynthSnapshot &&s) { snaps.push_back(std::move(s)); });
        REQUIRE(snaps.size() == 1);
        const auto &paths = snaps[0].paths;
        auto rng = detail::stream_rng(99, link_stream, link);
        const auto d = draw_link(p, rng, tracer::direction_of(snaps[0].rx_position - tx), tracer::direction_of(tx - snaps[0].rx_position));
        REQUIRE(paths.size() == std::size_t(1 + p.n_clusters * rays_per_cluster));
        CHECK(stats::k_factor_rays(paths).k_linear == Approx(d.k_linear).epsilon(1e-9));
        CHECK(stats::rms_delay_spread(channel::pdp_from_paths(paths)) == Approx(d.delay_spread_s).epsilon(1e-6));
        CHECK(stats::angular_spread(paths, stats::Spread::asa) == Approx(d.spread_deg[0]).epsilon(1e-3));
        CHECK(stats::angular_spread(paths, stats::Spread::asd) == Approx(d.spread_deg[1]).epsilon(1e-3));
        CHECK(stats::angular_spread(paths, stats::Spread::esa) == Approx(d.spread_deg[2]).epsilon(1e-3));
        CHECK(stats::angular_spread(paths, stats::Spread::esd) == Approx(d.spread_deg[3]).epsilon(1e-3));
        // total power follows the path-loss model including the shadowing draw
        const double pl = p.pl.pl0_db + 10 * p.pl.n * std::log10(snaps[0].distance_m) + snaps[0].shadowing_db;
        CHECK(stats::incoherent_path_loss_db(paths) == Approx(pl).epsilon(1e-12));
    }
}

TEST_CASE("synthesis determinism", "[stochgen]")
{
    StochasticParams p;
    const channel::BandSpec band{64.32e9, 8e9, 101};
    auto run = [&](std::uint64_t seed) {
        std::vector<Eigen::MatrixXcd> out;
        synthesize(p, tx, straight(20.0, 50, 0.002), band, seed, [&](SynthSnapshot &&s) { out.push_back(s.ctf.H); });
        return out;
    };
    const auto a = run(5), b = run(5), c = run(6);
    REQUIRE(a.size() == 50);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        REQUIRE(std::memcmp(a[i].data(), b[i].data(), std::size_t(a[i].size()) * sizeof(cdouble)) == 0);
        differs = differs || !(a[i] == c[i]);
    }
    CHECK(differs);
    channel::TrajectorySpec at_tx = straight(0.0, 1, 1.0);
    at_tx.start = tx;
    CHECK_THROWS_AS(synthesize(p, tx, at_tx, band, 1, [](SynthSnapshot &&) {}), domain_error);
}

TEST_CASE("LOS-only limit", "[stochgen]")
{
    StochasticParams p;
    p.k_db = {std::numeric_limits<double>::infinity(), 0.0};
    const channel::BandSpec band;
    synthesize(p, tx, straight(30.0, 3, 0.5), band, 2, [&](SynthSnapshot &&s) {
        REQUIRE(s.paths.size() == 1);
        const Eigen::ArrayXd mag = s.ctf.H.col(0).cwiseAbs();
        CHECK((mag - mag(0)).abs().maxCoeff() <= 1e-12 * mag(0));
        CHECK(stats::rms_delay_spread(channel::pdp_from_paths(s.paths)) == 0.0);
    });
}

TEST_CASE("power normalization over 1e4 links", "[stochgen][property]")
{
    StochasticParams p;
    double acc = 0.0;
    const int n = 10000;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(20.0, 800.0);
    for (int l = 0; l < n; ++l)
        synthesize_link(
            p, tx, straight(d(rng), 1, 1.0), {}, 11, std::uint64_t(l), [&](SynthSnapshot &&s) {
                const double pl = p.pl.pl0_db + 10 * p.pl.n * std::log10(s.distance_m) + s.shadowing_db;
                acc += std::norm(channel::narrowband_gain(s.paths)[0]) / stats::from_db(-pl);
            },
            false);
    CHECK(std::abs(stats::to_db(acc / n)) <= 0.3);
}

TEST_CASE("shadowing autocorrelation", "[stochgen][property]")
{
    StochasticParams p;
    p.k_db = {std::numeric_limits<double>::infinity(), 0.0};
    std::vector<double> sh, dist, pl;
    synthesize_link(
        p, tx, straight(10.0, 10000, 1.0), {}, 21, 0, [&](SynthSnapshot &&s) {
            sh.push_back(s.shadowing_db);
            dist.push_back(s.distance_m);
            pl.push_back(stats::incoherent_path_loss_db(s.paths));
        },
        false);
    // exponential model fit over lags up to 3 decorrelation lengths
    const std::size_t n = sh.size();
    const double mean = std::accumulate(sh.begin(), sh.end(), 0.0) / double(n);
    std::vector<double> acf;
    for (std::size_t m = 0; m <= 75; ++m)
    {
        double s = 0.0;
        for (std::size_t i = 0; i + m < n; ++i)
            s += (sh[i] - mean) * (sh[i + m] - mean);
        acf.push_back(s / double(n - m));
    }
    double ss_res = 0.0, ss_tot = 0.0, am = 0.0;
    const double a0 = acf[0];
    for (auto &a : acf)
        am += a /= a0;
    am /= double(acf.size());
    for (std::size_t m = 0; m < acf.size(); ++m)
    {
        ss_res += std::pow(acf[m] - std::exp(-double(m) / p.shadow_decorrelation_m), 2);
        ss_tot += std::pow(acf[m] - am, 2);
    }
    CHECK(1.0 - ss_res / ss_tot > 0.95);
    CHECK(fit_shadow_decorrelation(dist, pl, 1.0) == Approx(p.shadow_decorrelation_m).margin(5.0));
}

TEST_CASE("small-scale envelope under fixed K", "[stochgen][property]")
{
    StochasticParams p;
    p.k_db = {6.0, 0.0};
    p.pl.sigma_sf_db = 0.0;
    p.as_log = {{{1.8, 0.0}, {1.8, 0.0}, {1.2, 0.0}, {1.2, 0.0}}};
    std::vector<cdouble> g;
    std::vector<double> x;
    const auto traj = straight(40.0, 30000, 0.002);
    synthesize_link(
        p, tx, traj, {}, 8, 3, [&](SynthSnapshot &&s) {
            g.push_back(channel::narrowband_gain(s.paths)[0]);
            x.push_back(double(s.index) * traj.sample_interval);
        },
        false);
    const auto f = stats::separate_fading(g, x, speed_of_light / p.f_center);
    const auto r = stats::fit_ricean(f.small_scale);
    CHECK(std::abs(r.k_db() - 6.0) <= 0.5);
}

TEST_CASE("round trip on a small ensemble", "[stochgen]")
{
    StochasticParams p;
    const auto tiny = validate_roundtrip(p, 10, 4);
    CHECK(tiny.wide_confidence);
    CHECK_FALSE(tiny.within_tolerance);
    const auto a = validate_roundtrip(p, 2000, 4);
    const auto b = validate_roundtrip(p, 2000, 4);
    CHECK(a.fitted.k_db.mean == b.fitted.k_db.mean);
    CHECK(std::abs(a.k_mean_delta_db) <= 0.5);
    CHECK(std::abs(a.ds_log_mean_delta) <= 0.05);
    CHECK(std::abs(a.decorrelation_rel_delta) <= 0.2);
}
