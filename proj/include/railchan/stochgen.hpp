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

// Minimal geometry-based stochastic channel model: fitting from ray-traced link statistics,
// CTF synthesis along trajectories and a fit -> synthesize -> re-fit round trip.
//
// Model per link: log-distance path loss with AR(1) lognormal shadowing along the trajectory,
// a Ricean LOS component with per-link K, n_clusters NLOS clusters with exponentially decaying
// power whose delays are scaled to a drawn RMS delay spread, and cluster angles drawn Gaussian
// around the LOS direction and scaled to drawn angular spreads. Each cluster carries 20 rays.

#include "channel.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "stats.hpp"
#include "tracer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace railchan::stochgen
{
    using tracer::PropagationPath;

    struct NormalParam
    {
        double mean = 0;
        double std = 0;
    };

    struct StochasticParams
    {
        stats::PathLossFit pl{68.6, 1.8, 2.9};
        NormalParam k_db{8.0, 3.0};
        NormalParam ds_log{-8.0, 0.25};                                         // log10(delay spread / s)
        std::array<NormalParam, 4> as_log{{{1.4, 0.2}, {1.3, 0.2}, {1.0, 0.15}, {0.9, 0.15}}}; // log10(spread / deg): ASA, ASD, ESA, ESD
        int n_clusters = 5;
        double intra_cluster_decay = 20e-9;  // s
        double shadow_decorrelation_m = 25.0;
        double f_center = 64.32e9;           // carrier of the synthesized phases
    };

    inline void validate(const StochasticParams &p)
    {
        std::vector<std::string> bad;
        auto chk = [&](const NormalParam &x, const std::string &name) {
            if (!(x.std >= 0.0) || std::isnan(x.mean))
                bad.push_back(name);
        };
        chk(p.k_db, "k_db");
        chk(p.ds_log, "ds_log");
        static const std::array<const char *, 4> as_names = {"as_log.asa", "as_log.asd", "as_log.esa", "as_log.esd"};
        for (int i = 0; i < 4; ++i)
            chk(p.as_log[std::size_t(i)], as_names[std::size_t(i)]);
        if (!(p.pl.sigma_sf_db >= 0.0))
            bad.emplace_back("pl.sigma_sf_db");
        if (p.n_clusters < 1)
            bad.emplace_back("n_clusters");
        if (!(p.intra_cluster_decay > 0.0))
            bad.emplace_back("intra_cluster_decay");
        if (!(p.shadow_decorrelation_m > 0.0))
            bad.emplace_back("shadow_decorrelation_m");
        if (!(p.f_center > 0.0))
            bad.emplace_back("f_center");
        if (!bad.empty())
        {
            std::string msg = "invalid stochastic parameters:";
            for (const auto &b : bad)
                msg += " " + b;
            throw validation_error(msg);
        }
    }

    // ---------------------------------------------------------------------------------------------
    // Fitting

    struct LinkSample
    {
        double distance_m = 0;
        stats::LinkStats stats;
    };

    inline constexpr double k_clamp_db = 30.0;

    inline NormalParam fit_normal(const std::vector<double> &x)
    {
        NormalParam p;
        if (x.empty())
            return p;
        // shifted by the first sample so constant input gives exactly zero spread
        const double x0 = x.front();
        double s = 0.0;
        for (double v : x)
            s += v - x0;
        const double m = s / double(x.size());
        p.mean = x0 + m;
        if (x.size() > 1)
        {
            double ss = 0.0;
            for (double v : x)
                ss += (v - x0 - m) * (v - x0 - m);
            p.std = std::sqrt(ss / double(x.size() - 1));
        }
        return p;
    }

    inline constexpr std::size_t min_fit_samples = 50;

    // Fits every parameter except the shadow decorrelation distance, which needs a uniformly
    // sampled trajectory (see fit_shadow_decorrelation) and is taken from `base`.
    inline StochasticParams fit_params(const std::vector<LinkSample> &samples, const StochasticParams &base = {})
    {
        if (samples.size() < min_fit_samples)
            throw fit_error("fit_params: at least 50 link samples required");
        double dmin = stats::inf, dmax = 0.0;
        for (const auto &s : samples)
        {
            dmin = std::min(dmin, s.distance_m);
            dmax = std::max(dmax, s.distance_m);
        }
        if (!(dmin > 0.0) || dmax < 10.0 * dmin * (1.0 - 1e-12))
            throw fit_error("fit_params: link distances must span at least a decade");

        StochasticParams p = base;
        std::vector<std::pair<double, double>> pl;
        std::vector<double> k, ds;
        std::array<std::vector<double>, 4> as;
        for (const auto &s : samples)
        {
            if (std::isfinite(s.stats.path_loss_db))
                pl.emplace_back(s.distance_m, s.stats.path_loss_db);
            k.push_back(std::clamp(s.stats.k_factor_db, -k_clamp_db, k_clamp_db));
            if (s.stats.rms_delay_spread_s > 0.0)
                ds.push_back(std::log10(s.stats.rms_delay_spread_s));
            const std::array<double, 4> a = {s.stats.asa_deg, s.stats.asd_deg, s.stats.esa_deg, s.stats.esd_deg};
            for (std::size_t i = 0; i < 4; ++i)
                if (a[i] > 0.0)
                    as[i].push_back(std::log10(a[i]));
        }
        p.pl = stats::fit_path_loss(pl);
        p.k_db = fit_normal(k);
        if (!ds.empty())
            p.ds_log = fit_normal(ds);
        for (std::size_t i = 0; i < 4; ++i)
            if (!as[i].empty())
                p.as_log[i] = fit_normal(as[i]);
        return p;
    }

    // Shadow decorrelation distance from path loss sampled every `spacing` metres along a trajectory
    inline double fit_shadow_decorrelation(const std::vector<double> &distances, const std::vector<double> &path_loss_db, double spacing)
    {
        if (distances.size() != path_loss_db.size())
            throw fit_error("fit_shadow_decorrelation: trace length mismatch");
        std::vector<std::pair<double, double>> s;
        s.reserve(distances.size());
        for (std::size_t i = 0; i < distances.size(); ++i)
            s.emplace_back(distances[i], path_loss_db[i]);
        std::vector<double> residuals;
        stats::fit_path_loss(s, &residuals);
        return stats::decorrelation_distance(residuals, spacing);
    }

    // ---------------------------------------------------------------------------------------------
    // Synthesis

    inline constexpr int rays_per_cluster = 20;

    struct LinkDraw
    {
        double k_linear = 0;
        double delay_spread_s = 0;
        std::array<double, 4> spread_deg{}; // realized ASA, ASD, ESA, ESD
        std::vector<double> cluster_delay_s;
        std::vector<double> cluster_power; // fractions of the total power
        // per ray: arrival / departure angles (deg) and initial phase
        std::vector<double> aoa_az, aoa_el, aod_az, aod_el, phase;
    };

    namespace detail
    {
        inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0)
        {
            std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(stream >> 32),
                              std::uint32_t(sub), std::uint32_t(sub >> 32)};
            return std::mt19937_64(seq);
        }

        // Ray offsets within a cluster, symmetric, unit RMS
        inline const std::array<double, rays_per_cluster> &ray_offsets()
        {
            static const std::array<double, rays_per_cluster> off = [] {
                std::array<double, rays_per_cluster> o{};
                double ss = 0.0;
                for (int m = 0; m < rays_per_cluster; ++m)
                {
                    o[std::size_t(m)] = (m - (rays_per_cluster - 1) / 2.0);
                    ss += o[std::size_t(m)] * o[std::size_t(m)];
                }
                const double rms = std::sqrt(ss / rays_per_cluster);
                for (auto &v : o)
                    v /= rms;
                return o;
            }();
            return off;
        }

        inline constexpr double intra_cluster_spread_deg = 2.0;

        // Angles los + s * x_c + ray offset; s chosen so the power-weighted spread including the LOS
        // component equals the target. Targets beyond the reachable maximum (a strong LOS caps the
        // spread) saturate at the widest spread found; `achieved` receives the realized value.
        inline std::vector<double> scaled_angles(double los_deg, const std::vector<double> &x, double target, bool azimuth,
                                                 const std::vector<double> &ray_power, double los_power, double &achieved)
        {
            const std::size_t nc = x.size();
            const auto &off = ray_offsets();
            auto make = [&](double s) {
                std::vector<double> a;
                a.reserve(nc * rays_per_cluster + 1);
                a.push_back(los_deg);
                for (std::size_t c = 0; c < nc; ++c)
                    for (int m = 0; m < rays_per_cluster; ++m)
                    {
                        double v = los_deg + s * x[c] + intra_cluster_spread_deg * off[std::size_t(m)];
                        v = azimuth ? stats::wrap_deg(v) : std::clamp(v, -90.0, 90.0);
                        if (azimuth && v == 180.0)
                            v = -180.0;
                        a.push_back(v);
                    }
                return a;
            };
            std::vector<double> w;
            w.reserve(ray_power.size() + 1);
            w.push_back(los_power);
            w.insert(w.end(), ray_power.begin(), ray_power.end());
            auto spread = [&](double s) { return stats::angular_spread(make(s), w, azimuth); };
            auto finish = [&](double s) {
                auto a = make(s);
                achieved = stats::angular_spread(a, w, azimuth);
                return std::vector<double>(a.begin() + 1, a.end());
            };

            double best_s = 0.0, best = spread(0.0);
            if (best >= target)
                return finish(0.0);
            // geometric scan for the first bracket, then bisection
            double lo = 0.0;
            for (double hi = 0.25; hi <= 1024.0; hi *= 1.05)
            {
                const double v = spread(hi);
                if (v >= target)
                {
                    for (int it = 0; it < 80; ++it)
                    {
                        const double mid = 0.5 * (lo + hi);
                        if (spread(mid) < target)
                            lo = mid;
                        else
                            hi = mid;
                    }
                    return finish(0.5 * (lo + hi));
                }
                if (v > best)
                {
                    best = v;
                    best_s = hi;
                }
                lo = hi;
            }
            return finish(best_s);
        }
    }

    // Per-link random structure; `los_aoa` / `los_aod` are the LOS directions at the link start
    inline LinkDraw draw_link(const StochasticParams &p, std::mt19937_64 &rng, const tracer::Direction &los_aod,
                              const tracer::Direction &los_aoa)
    {
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        LinkDraw d;
        const double k_db = p.k_db.mean + p.k_db.std * gauss(rng);
        d.k_linear = std::isinf(k_db) && k_db > 0 ? stats::inf : stats::from_db(k_db);
        d.delay_spread_s = std::pow(10.0, p.ds_log.mean + p.ds_log.std * gauss(rng));
        for (std::size_t i = 0; i < 4; ++i)
            d.spread_deg[i] = std::pow(10.0, p.as_log[i].mean + p.as_log[i].std * gauss(rng));

        const int nc = p.n_clusters;
        std::vector<double> raw(static_cast<std::size_t>(nc));
        for (auto &t : raw)
            t = -p.intra_cluster_decay * std::log(1.0 - uni(rng));
        std::sort(raw.begin(), raw.end());
        std::array<std::vector<double>, 4> x;
        for (auto &v : x)
        {
            v.resize(std::size_t(nc));
            for (auto &e : v)
                e = gauss(rng);
        }
        d.phase.resize(std::size_t(nc * rays_per_cluster));
        for (auto &ph : d.phase)
            ph = 2.0 * pi * uni(rng);

        if (std::isinf(d.k_linear))
            return d; // LOS only

        const double los_frac = d.k_linear / (d.k_linear + 1.0);
        d.cluster_power.resize(std::size_t(nc));
        double sum = 0.0;
        for (int c = 0; c < nc; ++c)
            sum += d.cluster_power[std::size_t(c)] = std::exp(-raw[std::size_t(c)] / p.intra_cluster_decay);
        for (auto &pw : d.cluster_power)
            pw *= (1.0 - los_frac) / sum;

        // scale delays so the RMS delay spread including the LOS tap hits the drawn value
        channel::PowerDelayProfile pdp;
        pdp.delays.push_back(0.0);
        pdp.powers.push_back(los_frac);
        for (int c = 0; c < nc; ++c)
        {
            pdp.delays.push_back(raw[std::size_t(c)]);
            pdp.powers.push_back(d.cluster_power[std::size_t(c)]);
        }
        const double ds0 = stats::rms_delay_spread(pdp);
        const double scale = ds0 > 0.0 ? d.delay_spread_s / ds0 : 0.0;
        d.cluster_delay_s.resize(std::size_t(nc));
        for (int c = 0; c < nc; ++c)
            d.cluster_delay_s[std::size_t(c)] = raw[std::size_t(c)] * scale;
        if (!(ds0 > 0.0))
            d.delay_spread_s = 0.0;

        std::vector<double> ray_power;
        for (int c = 0; c < nc; ++c)
            for (int m = 0; m < rays_per_cluster; ++m)
                ray_power.push_back(d.cluster_power[std::size_t(c)] / rays_per_cluster);
        d.aoa_az = detail::scaled_angles(los_aoa.azimuth_deg, x[0], d.spread_deg[0], true, ray_power, los_frac, d.spread_deg[0]);
        d.aod_az = detail::scaled_angles(los_aod.azimuth_deg, x[1], d.spread_deg[1], true, ray_power, los_frac, d.spread_deg[1]);
        d.aoa_el = detail::scaled_angles(los_aoa.elevation_deg, x[2], d.spread_deg[2], false, ray_power, los_frac, d.spread_deg[2]);
        d.aod_el = detail::scaled_angles(los_aod.elevation_deg, x[3], d.spread_deg[3], false, ray_power, los_frac, d.spread_deg[3]);
        return d;
    }

    struct SynthSnapshot
    {
        long index = 0;
        Vec3 rx_position = Vec3::Zero();
        double distance_m = 0;
        double shadowing_db = 0;
        std::vector<PropagationPath> paths;
        channel::CTF ctf;
    };

    inline constexpr std::uint64_t link_stream = 0x6c696e6b; // per-link structure
    inline constexpr std::uint64_t shadow_stream = 0x73686477;

    // Synthesizes one link along `traj` with its structure drawn from stream `link`
    inline void synthesize_link(const StochasticParams &p, const Vec3 &tx, const channel::TrajectorySpec &traj, const channel::BandSpec &band,
                                std::uint64_t seed, std::uint64_t link, const std::function<void(SynthSnapshot &&)> &sink,
                                bool with_ctf = true)
    {
        validate(p);
        channel::validate(traj);
        if (with_ctf)
            channel::validate(band);
        const Vec3 r0 = traj.position(0);
        if (!((r0 - tx).norm() > 0.0))
            throw domain_error("synthesize: trajectory starts at the transmitter");
        auto rng = detail::stream_rng(seed, link_stream, link);
        const tracer::Direction los_aod = tracer::direction_of(r0 - tx);
        const tracer::Direction los_aoa = tracer::direction_of(tx - r0);
        const LinkDraw d = draw_link(p, rng, los_aod, los_aoa);

        auto srng = detail::stream_rng(seed, shadow_stream, link);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double rho = std::exp(-traj.sample_interval / p.shadow_decorrelation_m);
        const double innov = std::sqrt(1.0 - rho * rho);
        const double k = 2.0 * pi * p.f_center / speed_of_light;
        const bool los_only = std::isinf(d.k_linear);
        const double los_frac = los_only ? 1.0 : d.k_linear / (d.k_linear + 1.0);

        std::vector<Vec3> ray_u;
        for (std::size_t r = 0; r < d.aoa_az.size(); ++r)
            ray_u.push_back(tracer::unit_vector({d.aoa_az[r], d.aoa_el[r]}));

        double shadow = 0.0;
        for (long i = 0; i < traj.n_samples; ++i)
        {
            const double z = gauss(srng);
            shadow = i == 0 ? p.pl.sigma_sf_db * z : rho * shadow + innov * p.pl.sigma_sf_db * z;
            SynthSnapshot s;
            s.index = i;
            s.rx_position = traj.position(i);
            const Vec3 rel = s.rx_position - tx;
            s.distance_m = rel.norm();
            if (!(s.distance_m > 0.0))
                throw domain_error("synthesize: receiver reaches the transmitter");
            s.shadowing_db = shadow;
            const double pl = p.pl.pl0_db + 10.0 * p.pl.n * std::log10(s.distance_m) + shadow;
            const double total = std::pow(10.0, -pl / 10.0);
            const double tau_los = s.distance_m / speed_of_light;

            PropagationPath los;
            los.length_m = s.distance_m;
            los.delay_s = tau_los;
            los.aod = tracer::direction_of(rel);
            los.aoa = tracer::direction_of(-rel);
            const cdouble a_los = std::polar(std::sqrt(total * los_frac), -k * s.distance_m);
            los.gain = em::Dyadic2x2::Zero();
            los.gain(0, 0) = a_los;
            los.gain(1, 1) = a_los;
            s.paths.push_back(los);

            if (!los_only)
            {
                const Vec3 dr = s.rx_position - r0;
                for (int c = 0; c < p.n_clusters; ++c)
                    for (int m = 0; m < rays_per_cluster; ++m)
                    {
                        const std::size_t r = std::size_t(c * rays_per_cluster + m);
                        PropagationPath ray;
                        ray.delay_s = tau_los + d.cluster_delay_s[std::size_t(c)];
                        ray.length_m = ray.delay_s * speed_of_light;
                        ray.aod = {d.aod_az[r], d.aod_el[r]};
                        ray.aoa = {d.aoa_az[r], d.aoa_el[r]};
                        const double amp = std::sqrt(total * d.cluster_power[std::size_t(c)] / rays_per_cluster);
                        const cdouble g = std::polar(amp, d.phase[r] - k * s.distance_m + k * ray_u[r].dot(dr));
                        ray.gain = em::Dyadic2x2::Zero();
                        ray.gain(0, 0) = g;
                        ray.gain(1, 1) = g;
                        ray.chain.push_back({tracer::Interaction::scattering, c, m, Vec3::Zero()});
                        s.paths.push_back(std::move(ray));
                    }
            }
            tracer::Tracer::canonical_sort(s.paths);
            if (with_ctf)
                s.ctf = channel::assemble_ctf(s.paths, band);
            sink(std::move(s));
        }
    }

    // One link along the whole trajectory; snapshots handed to `sink` in index order
    inline void synthesize(const StochasticParams &p, const Vec3 &tx, const channel::TrajectorySpec &traj, const channel::BandSpec &band,
                           std::uint64_t seed, const std::function<void(SynthSnapshot &&)> &sink)
    {
        synthesize_link(p, tx, traj, band, seed, 0, sink);
    }

    // ---------------------------------------------------------------------------------------------
    // Round trip

    struct RoundtripReport
    {
        StochasticParams input, fitted;
        std::size_t n_links = 0;
        double k_mean_delta_db = 0;
        double k_std_delta_db = 0;
        double ds_log_mean_delta = 0;
        double ds_log_std_delta = 0;
        std::array<double, 4> as_log_mean_delta{};
        double pl_n_delta = 0;
        double sigma_sf_delta_db = 0;
        double decorrelation_rel_delta = 0;
        double k_mean_ci_db = 0;   // 95 % half-width of the K mean
        double ds_log_mean_ci = 0; // 95 % half-width of the log-DS mean
        bool wide_confidence = false;
        bool within_tolerance = false;
    };

    inline constexpr double k_mean_tolerance_db = 0.5;
    inline constexpr double ds_log_mean_tolerance = 0.05;
    inline constexpr double decorrelation_tolerance = 0.2;

    struct RoundtripOptions
    {
        double min_distance_m = 10.0;
        double max_distance_m = 1000.0;
        double tx_height_m = 6.0;
        double rx_height_m = 4.5;
        double decorrelation_spacing_m = 1.0;
        long decorrelation_samples = 0; // 0: max(n_links, 2000)
    };

    // Synthesizes n_links single-snapshot links at log-uniform distances, re-extracts their
    // statistics, re-fits, and separately estimates the shadow decorrelation on one long trajectory.
    inline RoundtripReport validate_roundtrip(const StochasticParams &p, std::size_t n_links, std::uint64_t seed,
                                              const RoundtripOptions &opt = {})
    {
        validate(p);
        RoundtripReport rep;
        rep.input = p;
        rep.n_links = n_links;
        const Vec3 tx(0.0, 0.0, opt.tx_height_m);
        channel::BandSpec band{p.f_center, 1e9, 64};
        auto drng = detail::stream_rng(seed, 0x64697374);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::vector<LinkSample> samples;
        samples.reserve(n_links);
        const double l0 = std::log10(opt.min_distance_m), l1 = std::log10(opt.max_distance_m);
        for (std::size_t l = 0; l < n_links; ++l)
        {
            const double d = std::pow(10.0, l0 + (l1 - l0) * uni(drng));
            channel::TrajectorySpec traj;
            traj.start = Vec3(d, 0.0, opt.rx_height_m);
            traj.n_samples = 1;
            synthesize_link(
                p, tx, traj, band, seed, l + 1,
                [&](SynthSnapshot &&s) {
                    const auto ctf = channel::assemble_ctf(s.paths, band);
                    samples.push_back({s.distance_m, stats::link_stats(s.paths, ctf)});
                },
                false);
        }
        if (n_links >= min_fit_samples)
        {
            rep.fitted = fit_params(samples, p);
            rep.k_mean_delta_db = rep.fitted.k_db.mean - p.k_db.mean;
            rep.k_std_delta_db = rep.fitted.k_db.std - p.k_db.std;
            rep.ds_log_mean_delta = rep.fitted.ds_log.mean - p.ds_log.mean;
            rep.ds_log_std_delta = rep.fitted.ds_log.std - p.ds_log.std;
            for (std::size_t i = 0; i < 4; ++i)
                rep.as_log_mean_delta[i] = rep.fitted.as_log[i].mean - p.as_log[i].mean;
            rep.pl_n_delta = rep.fitted.pl.n - p.pl.n;
            rep.sigma_sf_delta_db = rep.fitted.pl.sigma_sf_db - p.pl.sigma_sf_db;
            rep.k_mean_ci_db = 1.96 * rep.fitted.k_db.std / std::sqrt(double(n_links));
            rep.ds_log_mean_ci = 1.96 * rep.fitted.ds_log.std / std::sqrt(double(n_links));
        }
        else
        {
            rep.fitted = p;
            rep.k_mean_ci_db = stats::inf;
            rep.ds_log_mean_ci = stats::inf;
        }

        // decorrelation: one long trajectory
        channel::TrajectorySpec traj;
        traj.start = Vec3(opt.min_distance_m, 0.0, opt.rx_height_m);
        traj.sample_interval = opt.decorrelation_spacing_m;
        traj.n_samples = opt.decorrelation_samples > 0 ? opt.decorrelation_samples : std::max<long>(long(n_links), 2000);
        std::vector<double> dist, pl;
        synthesize_link(
            p, tx, traj, band, seed, 0,
            [&](SynthSnapshot &&s) {
                dist.push_back(s.distance_m);
                pl.push_back(stats::incoherent_path_loss_db(s.paths));
            },
            false);
        rep.fitted.shadow_decorrelation_m = fit_shadow_decorrelation(dist, pl, traj.sample_interval);
        rep.decorrelation_rel_delta = rep.fitted.shadow_decorrelation_m / p.shadow_decorrelation_m - 1.0;

        rep.wide_confidence = n_links < 100 || rep.k_mean_ci_db > k_mean_tolerance_db || rep.ds_log_mean_ci > ds_log_mean_tolerance;
        rep.within_tolerance = n_links >= min_fit_samples && std::abs(rep.k_mean_delta_db) <= k_mean_tolerance_db &&
                               std::abs(rep.ds_log_mean_delta) <= ds_log_mean_tolerance &&
                               std::abs(rep.decorrelation_rel_delta) <= decorrelation_tolerance;
        return rep;
    }

    // ---------------------------------------------------------------------------------------------
    // Parameter file: one "key = value" per line, '#' comments

    inline std::vector<std::pair<std::string, double>> param_entries(const StochasticParams &p)
    {
        std::vector<std::pair<std::string, double>> e = {
            {"pl.pl0_db", p.pl.pl0_db},
            {"pl.n", p.pl.n},
            {"pl.sigma_sf_db", p.pl.sigma_sf_db},
            {"k_db.mean", p.k_db.mean},
            {"k_db.std", p.k_db.std},
            {"ds_log.mean", p.ds_log.mean},
            {"ds_log.std", p.ds_log.std},
        };
        static const std::array<const char *, 4> names = {"asa", "asd", "esa", "esd"};
        for (std::size_t i = 0; i < 4; ++i)
        {
            e.emplace_back(std::string("as_log.") + names[i] + ".mean", p.as_log[i].mean);
            e.emplace_back(std::string("as_log.") + names[i] + ".std", p.as_log[i].std);
        }
        e.emplace_back("n_clusters", p.n_clusters);
        e.emplace_back("intra_cluster_decay_s", p.intra_cluster_decay);
        e.emplace_back("shadow_decorrelation_m", p.shadow_decorrelation_m);
        e.emplace_back("f_center_hz", p.f_center);
        return e;
    }

    inline void write_params(std::ostream &os, const StochasticParams &p)
    {
        char buf[64];
        for (const auto &[k, v] : param_entries(p))
        {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << k << " = " << buf << "\n";
        }
    }

    inline StochasticParams read_params(std::istream &in)
    {
        StochasticParams p;
        std::map<std::string, double *> slots = {
            {"pl.pl0_db", &p.pl.pl0_db},          {"pl.n", &p.pl.n},
            {"pl.sigma_sf_db", &p.pl.sigma_sf_db}, {"k_db.mean", &p.k_db.mean},
            {"k_db.std", &p.k_db.std},             {"ds_log.mean", &p.ds_log.mean},
            {"ds_log.std", &p.ds_log.std},         {"intra_cluster_decay_s", &p.intra_cluster_decay},
            {"shadow_decorrelation_m", &p.shadow_decorrelation_m}, {"f_center_hz", &p.f_center},
        };
        static const std::array<const char *, 4> names = {"asa", "asd", "esa", "esd"};
        for (std::size_t i = 0; i < 4; ++i)
        {
            slots[std::string("as_log.") + names[i] + ".mean"] = &p.as_log[i].mean;
            slots[std::string("as_log.") + names[i] + ".std"] = &p.as_log[i].std;
        }
        std::string line;
        std::size_t line_no = 0;
        std::vector<std::string> unknown;
        while (std::getline(in, line))
        {
            ++line_no;
            if (auto h = line.find('#'); h != std::string::npos)
                line.erase(h);
            const auto eq = line.find('=');
            std::string key = line.substr(0, eq);
            key.erase(0, key.find_first_not_of(" \t"));
            key.erase(key.find_last_not_of(" \t\r") + 1);
            if (key.empty())
                continue;
            if (eq == std::string::npos)
                throw parse_error("expected 'key = value'", line_no);
            double v = 0;
            std::istringstream vs(line.substr(eq + 1));
            if (!(vs >> v))
                throw parse_error("bad number for '" + key + "'", line_no);
            if (key == "n_clusters")
                p.n_clusters = int(v);
            else if (auto it = slots.find(key); it != slots.end())
                *it->second = v;
            else
                unknown.push_back(key);
        }
        if (!unknown.empty())
        {
            std::string msg = "unknown parameter keys:";
            for (const auto &k : unknown)
                msg += " " + k;
            throw validation_error(msg);
        }
        validate(p);
        return p;
    }
}
