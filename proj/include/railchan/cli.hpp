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

// Command-line front end. Every subcommand resolves a RunConfig (config file, then flags),
// writes its outputs into the run directory and finishes with manifest.json.
//
// Exit codes: 0 success, 1 invalid input (usage, config, malformed files), 2 runtime failure.

#include "channel.hpp"
#include "config.hpp"
#include "error.hpp"
#include "scene.hpp"
#include "stats.hpp"
#include "stochgen.hpp"
#include "tracer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace railchan::cli
{
    inline constexpr const char *version = "1.0.0";

    enum exit_code : int
    {
        ok = 0,
        invalid_input = 1,
        runtime_failure = 2,
    };

    namespace fs = std::filesystem;
    using json = nlohmann::ordered_json;

    inline std::shared_ptr<spdlog::logger> logger()
    {
        static std::shared_ptr<spdlog::logger> log = [] {
            auto l = spdlog::get("railchan");
            if (!l)
                l = spdlog::stderr_color_mt("railchan");
            return l;
        }();
        const char *lvl = std::getenv("RAILCHAN_LOG");
        log->set_level(lvl ? spdlog::level::from_str(lvl) : spdlog::level::warn);
        return log;
    }

    inline std::string num(double v)
    {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    // Splits one CSV line (no quoting)
    inline std::vector<std::string> split_csv(const std::string &line)
    {
        std::vector<std::string> f;
        std::size_t pos = 0;
        for (;;)
        {
            const auto c = line.find(',', pos);
            f.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
            if (c == std::string::npos)
                return f;
            pos = c + 1;
        }
    }

    // Reads a CSV with a header into named numeric columns
    struct Table
    {
        std::vector<std::string> header;
        std::vector<std::vector<double>> rows;

        std::size_t column(const std::string &name) const
        {
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == name)
                    return i;
            throw parse_error("missing column '" + name + "'", 1);
        }
        std::vector<double> values(const std::string &name) const
        {
            const auto c = column(name);
            std::vector<double> v;
            v.reserve(rows.size());
            for (const auto &r : rows)
                v.push_back(r[c]);
            return v;
        }
    };

    inline Table read_table(const fs::path &path)
    {
        std::ifstream f(path);
        if (!f)
            throw validation_error("cannot read '" + path.string() + "'");
        Table t;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line))
        {
            ++line_no;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (line.empty())
                continue;
            auto fields = split_csv(line);
            if (t.header.empty())
            {
                t.header = std::move(fields);
                continue;
            }
            if (fields.size() != t.header.size())
                throw parse_error(path.filename().string() + ": expected " + std::to_string(t.header.size()) + " fields", line_no);
            std::vector<double> row;
            for (const auto &x : fields)
            {
                try
                {
                    std::size_t used = 0;
                    row.push_back(std::stod(x, &used));
                    if (used != x.size())
                        throw std::invalid_argument(x);
                }
                catch (const std::exception &)
                {
                    throw parse_error(path.filename().string() + ": bad number '" + x + "'", line_no);
                }
            }
            t.rows.push_back(std::move(row));
        }
        return t;
    }

    // Two-column numeric trace (position, value); an optional non-numeric header is skipped
    inline std::vector<std::pair<double, double>> read_trace(const fs::path &path)
    {
        std::ifstream f(path);
        if (!f)
            throw validation_error("cannot read '" + path.string() + "'");
        std::vector<std::pair<double, double>> out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line))
        {
            ++line_no;
            if (auto h = line.find('#'); h != std::string::npos)
                line.erase(h);
            if (line.find_first_not_of(" \t\r") == std::string::npos)
                continue;
            const auto fields = split_csv(line);
            if (fields.size() < 2)
                throw parse_error(path.filename().string() + ": expected at least two columns", line_no);
            try
            {
                out.emplace_back(std::stod(fields[0]), std::stod(fields[1]));
            }
            catch (const std::exception &)
            {
                if (out.empty() && line_no == 1)
                    continue;
                throw parse_error(path.filename().string() + ": bad number", line_no);
            }
        }
        return out;
    }

    // State shared by one subcommand invocation
    class Run
    {
      public:
        Run(std::string command, config::RunConfig cfg) : command_(std::move(command)), cfg_(std::move(cfg)), out_(cfg_.out)
        {
            fs::create_directories(out_);
        }

        const config::RunConfig &cfg() const { return cfg_; }
        const fs::path &dir() const { return out_; }

        std::ofstream open(const std::string &name, bool binary = false)
        {
            outputs_.push_back(name);
            std::ofstream f(out_ / name, binary ? std::ios::binary : std::ios::out);
            if (!f)
                throw std::runtime_error("cannot write '" + (out_ / name).string() + "'");
            return f;
        }

        void write_json(const std::string &name, const json &j)
        {
            auto f = open(name);
            f << j.dump(2) << "\n";
        }

        void require_seed() const
        {
            if (!cfg_.seed)
                throw validation_error(command_ + ": a seed is required (--seed or run.seed)");
        }
        std::uint64_t seed() const { return cfg_.seed.value_or(0); }

        // Resolved configuration minus the keys that cannot change any output byte
        void finish(const json &extra = json::object())
        {
            json m;
            m["tool"] = "railchan";
            m["version"] = version;
            m["command"] = command_;
            m["config_hash"] = config::config_hash(cfg_);
            if (cfg_.seed)
                m["seed"] = *cfg_.seed;
            else
                m["seed"] = nullptr;
            json c = json::object();
            for (const auto &[k, v] : config::entries(cfg_))
                if (!config::hash_neutral(k))
                    c[k] = v;
            m["config"] = c;
            m["outputs"] = outputs_;
            for (auto it = extra.begin(); it != extra.end(); ++it)
                m[it.key()] = it.value();
            std::ofstream f(out_ / "manifest.json");
            if (!f)
                throw std::runtime_error("cannot write manifest");
            f << m.dump(2) << "\n";
        }

      private:
        std::string command_;
        config::RunConfig cfg_;
        fs::path out_;
        std::vector<std::string> outputs_;
    };

    // Scenario, optional materials file (replaces same-named database entries), optional reduction
    inline scene::Scene build_scene(const config::RunConfig &cfg, scene::ReductionReport *report = nullptr)
    {
        scene::Scene s = scene::build_module(cfg.scenario);
        if (!cfg.materials_file.empty())
        {
            for (const auto &m : em::load_materials(cfg.materials_file))
                for (auto &sm : s.materials)
                    if (sm.name == m.name)
                        sm = m;
        }
        if (cfg.concise)
            s = scene::reduce_scene(s, cfg.tx_height_m, cfg.rx_height_m, report);
        return s;
    }

    // ---------------------------------------------------------------------------------------------
    // Subcommands

    inline void cmd_scene(Run &run, std::ostream &out)
    {
        scene::ReductionReport rep;
        const auto s = build_scene(run.cfg(), &rep);
        {
            auto f = run.open("scene.rcs");
            scene::write_scene(f, s);
        }
        json j;
        j["module"] = std::string(scene::to_string(run.cfg().scenario.module));
        j["concise"] = run.cfg().concise;
        j["surfaces"] = s.surfaces.size();
        j["wedges"] = s.wedges.size();
        j["expected_surfaces"] = scene::expected_surface_count(run.cfg().scenario);
        if (run.cfg().concise)
            j["reduction"] = {{"surfaces_before", rep.surfaces_before},
                              {"surfaces_after", rep.surfaces_after},
                              {"removed_percent", rep.removed_percent()}};
        run.write_json("scene_report.json", j);
        run.finish();
        out << "scene " << j["module"].get<std::string>() << ": " << s.surfaces.size() << " surfaces, " << s.wedges.size()
            << " wedges\n";
    }

    inline void cmd_trace(Run &run, double position_m, std::ostream &out)
    {
        const auto &cfg = run.cfg();
        if (cfg.trace.enable_scattering)
            run.require_seed();
        const auto s = build_scene(cfg);
        auto traj = cfg.trajectory();
        const Vec3 tx = cfg.tx_position();
        const Vec3 rx(tx.x() + position_m, traj.start.y(), traj.start.z());
        const auto paths = tracer::trace_all(s, tx, rx, cfg.trace, {run.seed(), 0});
        {
            auto f = run.open("paths.csv");
            channel::write_paths_header(f);
            channel::write_paths_rows(f, 0, paths);
        }
        const auto ctf = channel::assemble_ctf(paths, cfg.band);
        const auto ls = stats::link_stats(paths, ctf, cfg.cb_level);
        json j;
        j["position_m"] = position_m;
        j["n_paths"] = paths.size();
        j["path_loss_db"] = num(ls.path_loss_db);
        j["k_factor_db"] = num(ls.k_factor_db);
        j["rms_delay_spread_s"] = ls.rms_delay_spread_s;
        run.write_json("trace_summary.json", j);
        run.finish();
        out << "trace: " << paths.size() << " paths, path loss " << num(ls.path_loss_db) << " dB\n";
    }

    inline void write_snapshot_header(std::ostream &f)
    {
        f << "snapshot_id,time_s,position_m,rx_x,rx_y,rx_z,distance_m,n_paths,outside_scene";
        for (const char *p : channel::pol_names)
            f << ",nb_" << p << "_re,nb_" << p << "_im";
        f << '\n';
    }

    inline void cmd_sweep(Run &run, std::ostream &out)
    {
        const auto &cfg = run.cfg();
        if (cfg.trace.enable_scattering)
            run.require_seed();
        const auto s = build_scene(cfg);
        const auto traj = cfg.trajectory();
        const Vec3 tx = cfg.tx_position();
        auto fsnap = run.open("snapshots.csv");
        auto fp = run.open("paths.csv");
        auto fc = run.open("ctf.bin", true);
        write_snapshot_header(fsnap);
        channel::write_paths_header(fp);
        long n = 0, outside = 0;
        channel::SweepOptions opt;
        opt.jobs = cfg.jobs;
        opt.seed = run.seed();
        channel::sweep(s, tx, traj, cfg.trace, opt, [&](channel::ChannelSnapshot &&snap) {
            const auto nb = channel::narrowband_gain(snap);
            fsnap << snap.index << ',' << num(snap.time_s) << ',' << num(snap.rx_position.x() - tx.x()) << ','
               << num(snap.rx_position.x()) << ',' << num(snap.rx_position.y()) << ',' << num(snap.rx_position.z()) << ','
               << num((snap.rx_position - tx).norm()) << ',' << snap.paths.size() << ',' << (snap.outside_scene ? 1 : 0);
            for (int k = 0; k < channel::n_pol; ++k)
                fsnap << ',' << num(nb[k].real()) << ',' << num(nb[k].imag());
            fsnap << '\n';
            channel::write_paths_rows(fp, snap.index, snap.paths);
            channel::write_ctf(fc, channel::assemble_ctf(snap, cfg.band));
            outside += snap.outside_scene;
            ++n;
        });
        if (outside)
            logger()->warn("{} of {} receiver positions lie outside the scene", outside, n);
        fsnap.close();
        fp.close();
        fc.close();
        run.finish({{"snapshots", n}});
        out << "sweep: " << n << " snapshots\n";
    }

    // stats.csv from `stats --out <in>` or from the default `stats` subdirectory
    inline fs::path stats_table_path(const fs::path &in)
    {
        return fs::exists(in / "stats.csv") ? in / "stats.csv" : in / "stats" / "stats.csv";
    }

    inline void cmd_stats(Run &run, const fs::path &in, std::ostream &out)
    {
        const auto &cfg = run.cfg();
        const Table snaps = read_table(in / "snapshots.csv");
        std::map<long, std::vector<tracer::PropagationPath>> paths;
        {
            std::ifstream f(in / "paths.csv");
            if (!f)
                throw validation_error("cannot read '" + (in / "paths.csv").string() + "'");
            for (auto &[id, p] : channel::read_paths_csv(f))
                paths[id] = std::move(p);
        }
        std::ifstream fc(in / "ctf.bin", std::ios::binary);
        if (!fc)
            throw validation_error("cannot read '" + (in / "ctf.bin").string() + "'");

        const auto id_col = snaps.column("snapshot_id"), pos_col = snaps.column("position_m"), d_col = snaps.column("distance_m");
        const auto re_col = snaps.column("nb_vv_re"), im_col = snaps.column("nb_vv_im");
        auto f = run.open("stats.csv");
        f << "snapshot_id,position_m,distance_m,path_loss_db,k_factor_db,rms_delay_spread_s,coherence_bw_hz,asa_deg,asd_deg,"
             "esa_deg,esd_deg,snr_db\n";
        std::vector<std::pair<double, double>> pl;
        std::vector<double> positions;
        std::vector<cdouble> gain;
        double ds_sum = 0, k_sum = 0;
        std::size_t n_valid = 0;
        for (const auto &r : snaps.rows)
        {
            const long id = long(r[id_col]);
            channel::CTF ctf;
            ctf.band = cfg.band;
            if (!channel::read_ctf(fc, ctf.H))
                throw parse_error("ctf.bin has fewer records than snapshots.csv", 0);
            if (ctf.H.rows() != cfg.band.n_points)
                throw validation_error("ctf.bin record length does not match band.points");
            static const std::vector<tracer::PropagationPath> none;
            const auto it = paths.find(id);
            const auto &p = it == paths.end() ? none : it->second;
            const auto ls = stats::link_stats(p, ctf, cfg.cb_level);
            const double snr = stats::snr_db(ls.path_loss_db, cfg.tx_power_dbm, cfg.noise_floor_dbm);
            f << id << ',' << num(r[pos_col]) << ',' << num(r[d_col]) << ',' << num(ls.path_loss_db) << ',' << num(ls.k_factor_db) << ','
              << num(ls.rms_delay_spread_s) << ',' << num(ls.coherence_bw_hz) << ',' << num(ls.asa_deg) << ',' << num(ls.asd_deg) << ','
              << num(ls.esa_deg) << ',' << num(ls.esd_deg) << ',' << num(snr) << '\n';
            if (std::isfinite(ls.path_loss_db))
            {
                pl.emplace_back(r[d_col], ls.path_loss_db);
                ds_sum += ls.rms_delay_spread_s;
                k_sum += std::clamp(ls.k_factor_db, -stats::k_cap_db, stats::k_cap_db);
                ++n_valid;
            }
            positions.push_back(r[pos_col]);
            gain.emplace_back(r[re_col], r[im_col]);
        }
        f.close();

        json j;
        j["snapshots"] = snaps.rows.size();
        j["valid_snapshots"] = n_valid;
        j["mean_rms_delay_spread_s"] = n_valid ? ds_sum / double(n_valid) : 0.0;
        j["mean_k_factor_db"] = n_valid ? k_sum / double(n_valid) : 0.0;
        try
        {
            std::vector<double> res;
            const auto fit = stats::fit_path_loss(pl, &res);
            j["path_loss_fit"] = {{"pl0_db", fit.pl0_db}, {"n", fit.n}, {"sigma_sf_db", fit.sigma_sf_db}};
        }
        catch (const std::exception &e)
        {
            logger()->info("path-loss fit skipped: {}", e.what());
            j["path_loss_fit"] = nullptr;
        }
        try
        {
            const auto fd = stats::separate_fading(gain, positions, cfg.band.wavelength());
            const auto rf = stats::fit_ricean(fd.small_scale);
            j["small_scale_ricean"] = {{"k_db", rf.k_db()}, {"omega", rf.omega}, {"ks_distance", rf.ks_distance}, {"degenerate", rf.degenerate}};
        }
        catch (const std::exception &e)
        {
            logger()->info("Ricean fit skipped: {}", e.what());
            j["small_scale_ricean"] = nullptr;
        }
        run.write_json("stats_summary.json", j);
        run.finish();
        out << "stats: " << snaps.rows.size() << " snapshots\n";
    }

    inline void cmd_fit(Run &run, const fs::path &in, const std::string &params_in, std::ostream &out)
    {
        const auto &cfg = run.cfg();
        const Table t = read_table(stats_table_path(in));
        stochgen::StochasticParams base;
        if (!params_in.empty())
        {
            std::ifstream pf(params_in);
            if (!pf)
                throw validation_error("cannot read '" + params_in + "'");
            base = stochgen::read_params(pf);
        }
        base.f_center = cfg.band.f_center;
        const auto c = [&](const char *n) { return t.column(n); };
        const auto cd = c("distance_m"), cp = c("path_loss_db"), ck = c("k_factor_db"), cds = c("rms_delay_spread_s");
        const auto ca = c("asa_deg"), cad = c("asd_deg"), ce = c("esa_deg"), ced = c("esd_deg");
        std::vector<stochgen::LinkSample> samples;
        std::vector<double> dist, pl;
        for (const auto &r : t.rows)
        {
            if (!std::isfinite(r[cp]))
                continue;
            stochgen::LinkSample s;
            s.distance_m = r[cd];
            s.stats.path_loss_db = r[cp];
            s.stats.k_factor_db = r[ck];
            s.stats.rms_delay_spread_s = r[cds];
            s.stats.asa_deg = r[ca];
            s.stats.asd_deg = r[cad];
            s.stats.esa_deg = r[ce];
            s.stats.esd_deg = r[ced];
            samples.push_back(s);
            dist.push_back(r[cd]);
            pl.push_back(r[cp]);
        }
        auto p = stochgen::fit_params(samples, base);
        json j;
        try
        {
            p.shadow_decorrelation_m = stochgen::fit_shadow_decorrelation(dist, pl, cfg.interval_mm * 1e-3);
            j["shadow_decorrelation_source"] = "fitted";
        }
        catch (const std::exception &e)
        {
            logger()->warn("shadow decorrelation kept at {} m: {}", p.shadow_decorrelation_m, e.what());
            j["shadow_decorrelation_source"] = "default";
        }
        stochgen::validate(p);
        {
            auto f = run.open("params.txt");
            stochgen::write_params(f, p);
        }
        j["samples"] = samples.size();
        for (const auto &[k, v] : stochgen::param_entries(p))
            j["params"][k] = v;
        run.write_json("fit_report.json", j);
        run.finish();
        out << "fit: " << samples.size() << " samples, PL0 " << num(p.pl.pl0_db) << " dB, n " << num(p.pl.n) << "\n";
    }

    inline void cmd_synth(Run &run, const std::string &params_in, std::ostream &out)
    {
        const auto &cfg = run.cfg();
        run.require_seed();
        stochgen::StochasticParams p;
        if (!params_in.empty())
        {
            std::ifstream pf(params_in);
            if (!pf)
                throw validation_error("cannot read '" + params_in + "'");
            p = stochgen::read_params(pf);
        }
        stochgen::validate(p);
        const Vec3 tx = cfg.tx_position();
        auto fsnap = run.open("synth_snapshots.csv");
        auto fp = run.open("paths.csv");
        auto fc = run.open("ctf.bin", true);
        fsnap << "snapshot_id,position_m,distance_m,shadowing_db,n_paths,path_loss_db\n";
        channel::write_paths_header(fp);
        long n = 0;
        stochgen::synthesize(p, tx, cfg.trajectory(), cfg.band, run.seed(), [&](stochgen::SynthSnapshot &&s) {
            fsnap << s.index << ',' << num(s.rx_position.x() - tx.x()) << ',' << num(s.distance_m) << ',' << num(s.shadowing_db) << ','
               << s.paths.size() << ',' << num(stats::incoherent_path_loss_db(s.paths)) << '\n';
            channel::write_paths_rows(fp, s.index, s.paths);
            channel::write_ctf(fc, s.ctf);
            ++n;
        });
        fsnap.close();
        fp.close();
        fc.close();
        run.finish({{"snapshots", n}, {"params", params_in.empty() ? "default" : "file"}});
        out << "synth: " << n << " snapshots\n";
    }

    inline void cmd_compare(Run &run, const std::string &model, const std::string &measured, std::ostream &out)
    {
        if (model.empty() || measured.empty())
            throw validation_error("compare: --model and --measured are required");
        const auto c = stats::compare_traces(read_trace(model), read_trace(measured));
        json j;
        j["mean_error_db"] = c.mean_error_db;
        j["std_error_db"] = c.std_error_db;
        j["n_points"] = c.n_points;
        run.write_json("compare.json", j);
        run.finish();
        out << "compare: mean error " << num(c.mean_error_db) << " dB, std " << num(c.std_error_db) << " dB over " << c.n_points
            << " points\n";
    }

    // Tables behind the standard figures
    inline void cmd_plots(Run &run, const fs::path &in, std::ostream &out)
    {
        const auto &cfg = run.cfg();
        const Table snaps = read_table(in / "snapshots.csv");
        const Table st = read_table(stats_table_path(in));
        const auto pos = snaps.values("position_m");

        {
            std::ifstream fc(in / "ctf.bin", std::ios::binary);
            if (!fc)
                throw validation_error("cannot read '" + (in / "ctf.bin").string() + "'");
            auto f = run.open("pdp_heat.csv");
            f << "position_m";
            const double dtau = 1.0 / (double(cfg.band.n_points) * cfg.band.spacing());
            for (int k = 0; k < cfg.band.n_points; ++k)
                f << ",tau_" << num(k * dtau * 1e9) << "ns";
            f << '\n';
            channel::CTF ctf;
            ctf.band = cfg.band;
            for (std::size_t i = 0; i < snaps.rows.size(); ++i)
            {
                if (!channel::read_ctf(fc, ctf.H))
                    throw parse_error("ctf.bin has fewer records than snapshots.csv", 0);
                const auto p = channel::pdp(channel::ctf_to_cir(ctf, channel::Window::hann));
                f << num(pos[i]);
                for (double v : p.powers)
                    f << ',' << num(v > 0.0 ? stats::to_db(v) : -400.0);
                f << '\n';
            }
        }
        {
            auto f = run.open("angular_spread.csv");
            f << "position_m,asa_deg,asd_deg,esa_deg,esd_deg\n";
            const auto p = st.values("position_m"), a = st.values("asa_deg"), ad = st.values("asd_deg"), e = st.values("esa_deg"),
                       ed = st.values("esd_deg");
            for (std::size_t i = 0; i < p.size(); ++i)
                f << num(p[i]) << ',' << num(a[i]) << ',' << num(ad[i]) << ',' << num(e[i]) << ',' << num(ed[i]) << '\n';
        }
        {
            auto f = run.open("snr.csv");
            f << "position_m,snr_db\n";
            const auto p = st.values("position_m"), s = st.values("snr_db");
            for (std::size_t i = 0; i < p.size(); ++i)
                f << num(p[i]) << ',' << num(s[i]) << '\n';
        }
        std::vector<cdouble> gain;
        const auto re = snaps.values("nb_vv_re"), im = snaps.values("nb_vv_im");
        for (std::size_t i = 0; i < re.size(); ++i)
            gain.emplace_back(re[i], im[i]);
        try
        {
            const auto fd = stats::separate_fading(gain, pos, cfg.band.wavelength());
            {
                auto f = run.open("large_scale.csv");
                f << "position_m,large_scale_db\n";
                for (std::size_t i = 0; i < fd.centers_m.size(); ++i)
                    f << num(fd.centers_m[i]) << ',' << num(fd.large_scale_db[i]) << '\n';
            }
            // Histogram density of the normalised small-scale envelope; integrates to 1
            auto f = run.open("small_scale_pdf.csv");
            f << "bin_lo,bin_hi,density\n";
            double hi = 0.0;
            std::vector<double> v;
            for (double x : fd.small_scale)
                if (std::isfinite(x))
                {
                    v.push_back(x);
                    hi = std::max(hi, x);
                }
            const int bins = 50;
            if (!v.empty() && hi > 0.0)
            {
                const double w = hi * (1.0 + 1e-12) / bins;
                std::vector<double> c(bins, 0.0);
                for (double x : v)
                    c[std::min(bins - 1, int(x / w))] += 1.0;
                for (int b = 0; b < bins; ++b)
                    f << num(b * w) << ',' << num((b + 1) * w) << ',' << num(c[std::size_t(b)] / (double(v.size()) * w)) << '\n';
            }
        }
        catch (const estimation_error &e)
        {
            logger()->warn("fading tables skipped: {}", e.what());
        }
        run.finish({{"snapshots", snaps.rows.size()}});
        out << "plots: tables for " << snaps.rows.size() << " snapshots\n";
    }

    // ---------------------------------------------------------------------------------------------
    // Entry point

    namespace detail
    {
        // Flag name -> config key; every subcommand accepts all of them
        struct FlagSpec
        {
            const char *flag;
            const char *key;
            const char *help;
        };
        inline const std::vector<FlagSpec> &value_flags()
        {
            static const std::vector<FlagSpec> f = {
                {"--jobs", "run.jobs", "worker threads (output does not depend on it)"},
                {"--seed", "run.seed", "RNG seed, required by stochastic stages"},
                {"--out", "run.out", "output directory"},
                {"--setup", "antenna.setup", "antenna preset: 1 (6 m / 4.5 m) or 2 (1 m / 0.92 m)"},
                {"--module", "scene.module", "scenario module m1..m6"},
                {"--order", "trace.max_order", "maximum reflection order"},
                {"--fc", "band.fc_hz", "centre frequency in Hz"},
                {"--bw", "band.bw_hz", "bandwidth in Hz"},
                {"--points", "band.points", "frequency points"},
                {"--cb-level", "stats.cb_level", "coherence bandwidth correlation level"},
                {"--length", "scene.length_m", "corridor length in m"},
                {"--barrier-height", "scene.barrier_height_m", "barrier height in m"},
                {"--speed-kmh", "traj.speed_kmh", "train speed in km/h"},
                {"--interval-mm", "traj.interval_mm", "sampling interval in mm"},
                {"--samples", "traj.samples", "number of trajectory samples"},
            };
            return f;
        }

        // Reads the "config" object of a previous run's manifest as base entries
        inline config::RawEntries manifest_entries(const fs::path &dir)
        {
            config::RawEntries e;
            std::ifstream f(dir / "manifest.json");
            if (!f)
                return e;
            json m;
            try
            {
                m = json::parse(f);
            }
            catch (const json::exception &ex)
            {
                throw parse_error("manifest.json: " + std::string(ex.what()), 0);
            }
            if (m.contains("config") && m["config"].is_object())
                for (auto it = m["config"].begin(); it != m["config"].end(); ++it)
                {
                    const auto v = it.value().get<std::string>();
                    if (!(it.key() == "run.seed" && v.empty()))
                        e.emplace_back(it.key(), v, 0);
                }
            return e;
        }
    }

    inline int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr)
    {
        CLI::App app{"High-speed railway mmWave channel simulator"};
        app.set_version_flag("--version", version);
        app.require_subcommand(1);

        struct Sub
        {
            CLI::App *app = nullptr;
            std::string config_file;
            std::map<std::string, std::string> values;
            std::map<std::string, CLI::Option *> options;
            bool concise = false;
            CLI::Option *concise_opt = nullptr;
        };
        std::map<std::string, Sub> subs;
        std::string in_dir, params_file, model_file, measured_file;
        double position = -1.0;

        const std::vector<std::pair<std::string, std::string>> names = {
            {"scene", "build a scenario module and write its surface file"},
            {"trace", "trace all paths at one receiver position"},
            {"sweep", "trace every trajectory sample; paths, CTFs, snapshot table"},
            {"stats", "per-snapshot link statistics of a sweep"},
            {"fit", "fit stochastic model parameters to sweep statistics"},
            {"synth", "synthesise a link from stochastic parameters"},
            {"compare", "compare a model trace with a measured trace"},
            {"plots", "write the figure tables of a sweep"},
        };
        for (const auto &[name, help] : names)
        {
            Sub &s = subs[name];
            s.app = app.add_subcommand(name, help);
            s.app->add_option("--config", s.config_file, "config file (dotted key = value)");
            for (const auto &f : detail::value_flags())
                s.options[f.key] = s.app->add_option(f.flag, s.values[f.key], f.help);
            s.concise_opt = s.app->add_flag("--concise", s.concise, "reduce the scene to propagation-relevant surfaces");
            if (name == "trace")
                s.app->add_option("--position", position, "receiver position in m along the track (default traj.start_m)");
            if (name == "stats" || name == "fit" || name == "plots")
                s.app->add_option("--in", in_dir, "directory of a previous run")->required();
            if (name == "fit" || name == "synth")
                s.app->add_option("--params", params_file, "stochastic parameter file");
            if (name == "compare")
            {
                s.app->add_option("--model", model_file, "model trace CSV (position, value)")->required();
                s.app->add_option("--measured", measured_file, "measured trace CSV (position, value)")->required();
            }
        }

        try
        {
            app.parse(argc, argv);
        }
        catch (const CLI::ParseError &e)
        {
            const int code = app.exit(e, out, err);
            return code == 0 ? ok : invalid_input;
        }

        auto log = logger();
        try
        {
            std::string name;
            for (auto &[n, s] : subs)
                if (s.app->parsed())
                    name = n;
            Sub &s = subs[name];

            config::RawEntries entries;
            if (!in_dir.empty())
                entries = detail::manifest_entries(in_dir);
            if (!s.config_file.empty())
                for (auto &e : config::load_config_file(s.config_file))
                    entries.push_back(std::move(e));
            for (const auto &f : detail::value_flags())
                if (s.options[f.key]->count())
                    entries.emplace_back(f.key, s.values[f.key], 0);
            if (s.concise_opt->count())
                entries.emplace_back("scene.concise", s.concise ? "true" : "false", 0);
            // Derived runs default to a subdirectory of their input
            bool out_given = s.options["run.out"]->count() > 0;
            for (const auto &e : entries)
                if (std::get<0>(e) == "run.out" && std::get<2>(e) != 0)
                    out_given = true;
            if (!in_dir.empty() && !out_given)
                entries.emplace_back("run.out", (fs::path(in_dir) / name).string(), 0);

            const auto cfg = config::resolve(entries);
            log->info("{}: config hash {}", name, config::config_hash(cfg));
            Run r(name, cfg);
            if (name == "scene")
                cmd_scene(r, out);
            else if (name == "trace")
                cmd_trace(r, position >= 0.0 ? position : cfg.start_m, out);
            else if (name == "sweep")
                cmd_sweep(r, out);
            else if (name == "stats")
                cmd_stats(r, in_dir, out);
            else if (name == "fit")
                cmd_fit(r, in_dir, params_file, out);
            else if (name == "synth")
                cmd_synth(r, params_file, out);
            else if (name == "compare")
                cmd_compare(r, model_file, measured_file, out);
            else if (name == "plots")
                cmd_plots(r, in_dir, out);
            return ok;
        }
        catch (const validation_error &e)
        {
            err << "error: " << e.what() << "\n";
            return invalid_input;
        }
        catch (const parse_error &e)
        {
            err << "error: " << e.what() << "\n";
            return invalid_input;
        }
        catch (const resolution_error &e)
        {
            err << "error: " << e.what() << "\n";
            return invalid_input;
        }
        catch (const std::exception &e)
        {
            err << "error: " << e.what() << "\n";
            return runtime_failure;
        }
    }
}
