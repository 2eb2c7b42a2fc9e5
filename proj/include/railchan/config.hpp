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

// Run configuration: a flat "dotted.key = value" text file, resolved against a fixed schema
// with defaults. Unknown keys are rejected. The resolved configuration can be written back
// in canonical form (used for the manifest hash).

#include "channel.hpp"
#include "error.hpp"
#include "scene.hpp"
#include "tracer.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <tuple>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace railchan::config
{
    struct AntennaSetup
    {
        double tx_height_m;
        double rx_height_m;
    };

    // Trackside transmitter on the pylon line, receiver at the train windshield
    inline constexpr AntennaSetup setup_1{6.0, 4.5};
    inline constexpr AntennaSetup setup_2{1.0, 0.92};

    struct RunConfig
    {
        scene::ScenarioSpec scenario;
        bool concise = false;
        std::string materials_file;
        tracer::TraceConfig trace;
        channel::BandSpec band;
        double speed_kmh = 500.0;
        double interval_mm = 2.0;
        long samples = 1000;
        double start_m = 20.0; // receiver start, metres along the track from the Tx
        int setup = 1;
        double tx_height_m = setup_1.tx_height_m;
        double rx_height_m = setup_1.rx_height_m;
        double tx_power_dbm = 0.0;
        double noise_floor_dbm = -68.0;
        double cb_level = 0.5;
        std::optional<std::uint64_t> seed;
        int jobs = 1;
        std::string out = "out";

        channel::TrajectorySpec trajectory() const
        {
            const auto lay = scene::layout(scenario);
            channel::TrajectorySpec t;
            t.start = Vec3(lay.tx_anchor.x() + start_m, lay.rx_track_y, rx_height_m);
            t.direction = Vec3::UnitX();
            t.speed = speed_kmh / 3.6;
            t.sample_interval = interval_mm * 1e-3;
            t.n_samples = samples;
            return t;
        }

        Vec3 tx_position() const { return scene::layout(scenario).tx_anchor + Vec3(0.0, 0.0, tx_height_m); }
    };

    // Key/value pairs with the line they came from (0 = command line)
    using RawEntries = std::vector<std::tuple<std::string, std::string, std::size_t>>;

    inline std::string trim(std::string s)
    {
        s.erase(0, s.find_first_not_of(" \t\r\n"));
        s.erase(s.find_last_not_of(" \t\r\n") + 1);
        return s;
    }

    inline RawEntries parse_config_text(std::istream &in)
    {
        RawEntries out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line))
        {
            ++line_no;
            if (auto h = line.find('#'); h != std::string::npos)
                line.erase(h);
            line = trim(line);
            if (line.empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw validation_error("config line " + std::to_string(line_no) + ": expected 'key = value'");
            std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
            if (key.empty())
                throw validation_error("config line " + std::to_string(line_no) + ": empty key");
            out.emplace_back(key, value, line_no);
        }
        return out;
    }

    inline RawEntries load_config_file(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw validation_error("cannot read config file '" + path + "'");
        return parse_config_text(f);
    }

    namespace detail
    {
        inline std::string num(double v)
        {
            char buf[40];
            auto r = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, r.ptr);
        }

        struct Field
        {
            std::function<void(RunConfig &, const std::string &)> set;
            std::function<std::string(const RunConfig &)> get;
        };

        inline double to_double(const std::string &key, const std::string &v)
        {
            std::size_t pos = 0;
            double d = 0;
            try
            {
                d = std::stod(v, &pos);
            }
            catch (const std::exception &)
            {
                pos = 0;
            }
            if (pos != v.size() || v.empty())
                throw validation_error("config key '" + key + "': '" + v + "' is not a number");
            return d;
        }
        inline long to_long(const std::string &key, const std::string &v)
        {
            const double d = to_double(key, v);
            if (d != std::floor(d) || std::abs(d) > 9e15)
                throw validation_error("config key '" + key + "': '" + v + "' is not an integer");
            return long(d);
        }
        inline bool to_bool(const std::string &key, const std::string &v)
        {
            if (v == "true" || v == "1" || v == "yes" || v == "on")
                return true;
            if (v == "false" || v == "0" || v == "no" || v == "off")
                return false;
            throw validation_error("config key '" + key + "': '" + v + "' is not a boolean");
        }

        // Schema in canonical output order
        inline const std::vector<std::pair<std::string, Field>> &schema()
        {
            using K = std::pair<std::string, Field>;
            static const std::vector<K> s = [] {
                std::vector<K> v;
                auto add_real = [&](const std::string &key, auto getter) {
                    v.emplace_back(key, Field{[key, getter](RunConfig &c, const std::string &x) { getter(c) = to_double(key, x); },
                                              [getter](const RunConfig &c) { return num(getter(const_cast<RunConfig &>(c))); }});
                };
                auto add_int = [&](const std::string &key, auto getter) {
                    v.emplace_back(key, Field{[key, getter](RunConfig &c, const std::string &x) { getter(c) = decltype(+getter(c))(to_long(key, x)); },
                                              [getter](const RunConfig &c) { return std::to_string(getter(const_cast<RunConfig &>(c))); }});
                };
                auto add_bool = [&](const std::string &key, auto getter) {
                    v.emplace_back(key, Field{[key, getter](RunConfig &c, const std::string &x) { getter(c) = to_bool(key, x); },
                                              [getter](const RunConfig &c) {
                                                  return std::string(getter(const_cast<RunConfig &>(c)) ? "true" : "false");
                                              }});
                };
                v.emplace_back("scene.module", Field{[](RunConfig &c, const std::string &x) {
                                                         auto m = scene::parse_module(x);
                                                         if (!m)
                                                             throw validation_error("config key 'scene.module': '" + x + "' is not one of m1..m6");
                                                         c.scenario.module = *m;
                                                     },
                                                     [](const RunConfig &c) { return std::string(scene::to_string(c.scenario.module)); }});
                add_real("scene.length_m", [](RunConfig &c) -> double & { return c.scenario.length_m; });
                add_real("scene.margin_m", [](RunConfig &c) -> double & { return c.scenario.margin_m; });
                add_real("scene.barrier_height_m", [](RunConfig &c) -> double & { return c.scenario.barrier_height_m; });
                add_real("scene.pylon_spacing_m", [](RunConfig &c) -> double & { return c.scenario.pylon_spacing_m; });
                add_real("scene.track_spacing_m", [](RunConfig &c) -> double & { return c.scenario.track_spacing_m; });
                add_real("scene.tunnel_width_m", [](RunConfig &c) -> double & { return c.scenario.tunnel_width_m; });
                add_real("scene.tunnel_height_m", [](RunConfig &c) -> double & { return c.scenario.tunnel_height_m; });
                v.emplace_back("scene.tunnel_shape", Field{[](RunConfig &c, const std::string &x) {
                                                               if (x == "rectangular")
                                                                   c.scenario.tunnel_shape = scene::TunnelShape::rectangular;
                                                               else if (x == "arched")
                                                                   c.scenario.tunnel_shape = scene::TunnelShape::arched;
                                                               else
                                                                   throw validation_error("config key 'scene.tunnel_shape': '" + x +
                                                                                          "' is not rectangular|arched");
                                                           },
                                                           [](const RunConfig &c) {
                                                               return std::string(c.scenario.tunnel_shape == scene::TunnelShape::rectangular
                                                                                      ? "rectangular"
                                                                                      : "arched");
                                                           }});
                add_int("scene.arch_segments", [](RunConfig &c) -> int & { return c.scenario.arch_segments; });
                add_real("scene.building_offset_m", [](RunConfig &c) -> double & { return c.scenario.building_offset_m; });
                add_real("scene.building_spacing_m", [](RunConfig &c) -> double & { return c.scenario.building_spacing_m; });
                add_real("scene.station_length_m", [](RunConfig &c) -> double & { return c.scenario.station_length_m; });
                add_real("scene.platform_width_m", [](RunConfig &c) -> double & { return c.scenario.platform_width_m; });
                add_bool("scene.concise", [](RunConfig &c) -> bool & { return c.concise; });
                v.emplace_back("scene.materials_file", Field{[](RunConfig &c, const std::string &x) { c.materials_file = x; },
                                                             [](const RunConfig &c) { return c.materials_file; }});
                add_int("trace.max_order", [](RunConfig &c) -> int & { return c.trace.max_reflection_order; });
                add_bool("trace.diffraction", [](RunConfig &c) -> bool & { return c.trace.enable_diffraction; });
                add_bool("trace.scattering", [](RunConfig &c) -> bool & { return c.trace.enable_scattering; });
                add_bool("trace.vegetation", [](RunConfig &c) -> bool & { return c.trace.enable_vegetation; });
                add_real("trace.tile_size_m", [](RunConfig &c) -> double & { return c.trace.scatter_tile_size; });
                add_real("trace.min_gain_db", [](RunConfig &c) -> double & { return c.trace.min_path_gain_db; });
                add_real("band.fc_hz", [](RunConfig &c) -> double & { return c.band.f_center; });
                add_real("band.bw_hz", [](RunConfig &c) -> double & { return c.band.bandwidth; });
                add_int("band.points", [](RunConfig &c) -> int & { return c.band.n_points; });
                add_real("traj.speed_kmh", [](RunConfig &c) -> double & { return c.speed_kmh; });
                add_real("traj.interval_mm", [](RunConfig &c) -> double & { return c.interval_mm; });
                add_int("traj.samples", [](RunConfig &c) -> long & { return c.samples; });
                add_real("traj.start_m", [](RunConfig &c) -> double & { return c.start_m; });
                v.emplace_back("antenna.setup", Field{[](RunConfig &c, const std::string &x) {
                                                          const long s = to_long("antenna.setup", x);
                                                          if (s != 1 && s != 2)
                                                              throw validation_error("config key 'antenna.setup': must be 1 or 2");
                                                          c.setup = int(s);
                                                          const AntennaSetup a = s == 1 ? setup_1 : setup_2;
                                                          c.tx_height_m = a.tx_height_m;
                                                          c.rx_height_m = a.rx_height_m;
                                                      },
                                                      [](const RunConfig &c) { return std::to_string(c.setup); }});
                add_real("antenna.tx_height_m", [](RunConfig &c) -> double & { return c.tx_height_m; });
                add_real("antenna.rx_height_m", [](RunConfig &c) -> double & { return c.rx_height_m; });
                add_real("link.tx_power_dbm", [](RunConfig &c) -> double & { return c.tx_power_dbm; });
                add_real("link.noise_floor_dbm", [](RunConfig &c) -> double & { return c.noise_floor_dbm; });
                add_real("stats.cb_level", [](RunConfig &c) -> double & { return c.cb_level; });
                v.emplace_back("run.seed", Field{[](RunConfig &c, const std::string &x) {
                                                     const long s = to_long("run.seed", x);
                                                     if (s < 0)
                                                         throw validation_error("config key 'run.seed': must be non-negative");
                                                     c.seed = std::uint64_t(s);
                                                 },
                                                 [](const RunConfig &c) { return c.seed ? std::to_string(*c.seed) : std::string(); }});
                add_int("run.jobs", [](RunConfig &c) -> int & { return c.jobs; });
                v.emplace_back("run.out", Field{[](RunConfig &c, const std::string &x) { c.out = x; },
                                                [](const RunConfig &c) { return c.out; }});
                return v;
            }();
            return s;
        }
    }

    // Keys excluded from the reproducibility hash (they do not change any output byte)
    inline bool hash_neutral(const std::string &key) { return key == "run.jobs" || key == "run.out"; }

    // Applies entries in order; "antenna.setup" is applied before explicit heights so that an
    // explicit height always wins over the preset regardless of its position.
    inline RunConfig resolve(const RawEntries &entries)
    {
        RunConfig c;
        const auto &s = detail::schema();
        std::vector<std::string> unknown;
        for (const auto &[k, v, line] : entries)
        {
            bool found = false;
            for (const auto &f : s)
                if (f.first == k)
                    found = true;
            if (!found)
                unknown.push_back(line ? k + " (line " + std::to_string(line) + ")" : k);
        }
        if (!unknown.empty())
        {
            std::string msg = "unknown config keys:";
            for (const auto &u : unknown)
                msg += " " + u;
            throw validation_error(msg);
        }
        auto apply = [&](const std::string &key, const std::string &value) {
            for (const auto &f : s)
                if (f.first == key)
                {
                    try
                    {
                        f.second.set(c, value);
                    }
                    catch (const validation_error &e)
                    {
                        const std::string what = e.what();
                        if (what.rfind("config key", 0) == 0)
                            throw;
                        throw validation_error("config key '" + key + "': " + what);
                    }
                }
        };
        for (const auto &[k, v, line] : entries)
            if (k == "antenna.setup")
                apply(k, v);
        for (const auto &[k, v, line] : entries)
            if (k != "antenna.setup")
                apply(k, v);

        c.trace.center_frequency = c.band.f_center;
        scene::validate(c.scenario);
        tracer::validate(c.trace);
        channel::validate(c.band);
        std::vector<std::string> bad;
        if (!(c.speed_kmh > 0.0))
            bad.emplace_back("traj.speed_kmh");
        if (!(c.interval_mm > 0.0))
            bad.emplace_back("traj.interval_mm");
        if (c.samples < 1)
            bad.emplace_back("traj.samples");
        if (!(c.start_m > 0.0))
            bad.emplace_back("traj.start_m");
        if (!(c.tx_height_m > 0.0))
            bad.emplace_back("antenna.tx_height_m");
        if (!(c.rx_height_m > 0.0))
            bad.emplace_back("antenna.rx_height_m");
        if (!(c.cb_level > 0.0 && c.cb_level < 1.0))
            bad.emplace_back("stats.cb_level");
        if (c.jobs < 1)
            bad.emplace_back("run.jobs");
        if (!bad.empty())
        {
            std::string msg = "invalid config values:";
            for (const auto &b : bad)
                msg += " " + b;
            throw validation_error(msg);
        }
        return c;
    }

    // Every key with its resolved value, in schema order
    inline std::vector<std::pair<std::string, std::string>> entries(const RunConfig &c)
    {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto &[k, f] : detail::schema())
            out.emplace_back(k, f.get(c));
        return out;
    }

    inline std::string canonical_text(const RunConfig &c, bool include_neutral = true)
    {
        std::string s;
        for (const auto &[k, v] : entries(c))
            if (include_neutral || !hash_neutral(k))
                s += k + " = " + v + "\n";
        return s;
    }

    // 64-bit FNV-1a
    inline std::uint64_t fnv1a(const std::string &s)
    {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char ch : s)
        {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    inline std::string config_hash(const RunConfig &c)
    {
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_text(c, false))));
        return buf;
    }
}
