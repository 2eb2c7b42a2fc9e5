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

// Trajectory sweep, wideband CTF assembly, CIR/PDP synthesis, narrowband gain and Doppler.

#include "error.hpp"
#include "geometry.hpp"
#include "scene.hpp"
#include "tracer.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <exception>
#include <functional>
#include <mutex>
#include <istream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace railchan::channel
{
    using tracer::PropagationPath;

    inline constexpr int n_pol = 4; // VV, VH, HV, HH
    inline constexpr std::array<const char *, 4> pol_names = {"vv", "vh", "hv", "hh"};

    // Column index of a polarization pair in CTF/CIR matrices
    inline cdouble pol_entry(const em::Dyadic2x2 &g, int pol)
    {
        switch (pol)
        {
        case 0: return g(0, 0);
        case 1: return g(1, 0);
        case 2: return g(0, 1);
        default: return g(1, 1);
        }
    }

    struct BandSpec
    {
        double f_center = 64.32e9;
        double bandwidth = 8e9;
        int n_points = 801;

        double spacing() const { return bandwidth / double(n_points - 1); }
        double frequency(int i) const { return f_center - 0.5 * bandwidth + i * spacing(); }
        double wavelength() const { return speed_of_light / f_center; }
    };

    inline void validate(const BandSpec &b)
    {
        std::vector<std::string> bad;
        if (!(b.f_center > 0.0))
            bad.emplace_back("f_center");
        if (!(b.bandwidth > 0.0))
            bad.emplace_back("bandwidth");
        if (b.n_points < 2)
            bad.emplace_back("n_points");
        if (b.bandwidth >= 2.0 * b.f_center)
            bad.emplace_back("bandwidth (exceeds 2 f_center)");
        if (!bad.empty())
        {
            std::string msg = "invalid band:";
            for (const auto &x : bad)
                msg += " " + x;
            throw validation_error(msg);
        }
    }

    struct TrajectorySpec
    {
        Vec3 start = Vec3::Zero();
        Vec3 direction = Vec3::UnitX();
        double speed = 500.0 / 3.6;     // m/s
        double sample_interval = 0.002; // m
        long n_samples = 1000;

        double time_step() const { return sample_interval / speed; }
        Vec3 position(long i) const { return start + direction.normalized() * (double(i) * sample_interval); }
        double time(long i) const { return double(i) * sample_interval / speed; }
        Vec3 velocity() const { return direction.normalized() * speed; }
    };

    inline void validate(const TrajectorySpec &t)
    {
        std::vector<std::string> bad;
        if (!(t.speed > 0.0))
            bad.emplace_back("speed");
        if (!(t.sample_interval > 0.0))
            bad.emplace_back("sample_interval");
        if (t.n_samples < 1)
            bad.emplace_back("n_samples");
        if (!(t.direction.norm() > 0.0))
            bad.emplace_back("direction");
        if (!bad.empty())
        {
            std::string msg = "invalid trajectory:";
            for (const auto &x : bad)
                msg += " " + x;
            throw validation_error(msg);
        }
    }

    struct ChannelSnapshot
    {
        long index = 0;
        Vec3 rx_position = Vec3::Zero();
        double time_s = 0;
        bool outside_scene = false; // rx left the scene bounding box
        std::vector<PropagationPath> paths;
    };

    enum class DelayOrigin
    {
        first_path, // tau0 = min path delay (PDPs comparable across snapshots)
        absolute,   // tau0 = 0
    };

    struct CTF
    {
        Eigen::MatrixXcd H; // n_points x 4, columns VV, VH, HV, HH
        BandSpec band;
        double delay_origin = 0; // s, subtracted from every path delay before the frequency phase
    };

    // H(f_i, pol) = sum_p g_p[pol] exp(-j 2 pi (f_i - f_c)(tau_p - tau0))
    inline CTF assemble_ctf(const std::vector<PropagationPath> &paths, const BandSpec &band, DelayOrigin origin = DelayOrigin::first_path)
    {
        validate(band);
        CTF c;
        c.band = band;
        c.H = Eigen::MatrixXcd::Zero(band.n_points, n_pol);
        if (origin == DelayOrigin::first_path && !paths.empty())
        {
            c.delay_origin = paths.front().delay_s;
            for (const auto &p : paths)
                c.delay_origin = std::min(c.delay_origin, p.delay_s);
        }
        const double df = band.spacing();
        const double f0 = -0.5 * band.bandwidth;
        for (const auto &p : paths)
        {
            const double tau = p.delay_s - c.delay_origin;
            // phase recursion along the grid, re-anchored every 64 points to bound rounding drift
            const cdouble step = std::polar(1.0, -2.0 * pi * df * tau);
            cdouble rot;
            for (int i = 0; i < band.n_points; ++i)
            {
                if (i % 64 == 0)
                    rot = std::polar(1.0, -2.0 * pi * (f0 + i * df) * tau);
                for (int k = 0; k < n_pol; ++k)
                    c.H(i, k) += pol_entry(p.gain, k) * rot;
                rot *= step;
            }
        }
        return c;
    }

    inline CTF assemble_ctf(const ChannelSnapshot &snap, const BandSpec &band, DelayOrigin origin = DelayOrigin::first_path)
    {
        return assemble_ctf(snap.paths, band, origin);
    }

    enum class Window
    {
        rect,
        hann,
    };

    inline std::vector<double> window_weights(Window w, int n)
    {
        std::vector<double> out(std::size_t(n), 1.0);
        if (w == Window::hann && n > 1)
            for (int i = 0; i < n; ++i)
                out[std::size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * pi * i / (n - 1));
        return out;
    }

    struct CIR
    {
        Eigen::MatrixXcd taps; // n_points x 4
        double tap_spacing = 0; // s, 1 / (n_points * spacing)
        double delay_origin = 0;
        double resolution = 0;  // s, 1 / bandwidth

        double delay(int k) const { return delay_origin + k * tap_spacing; }
        double span() const { return double(taps.rows()) * tap_spacing; }
    };

    // Inverse DFT of each (windowed) column, scaled 1/N so that sum |h|^2 = mean |W H|^2
    inline CIR ctf_to_cir(const CTF &ctf, Window window = Window::rect)
    {
        const int n = int(ctf.H.rows());
        const auto w = window_weights(window, n);
        CIR c;
        c.taps.resize(n, n_pol);
        c.tap_spacing = 1.0 / (double(n) * ctf.band.spacing());
        c.resolution = 1.0 / ctf.band.bandwidth;
        c.delay_origin = ctf.delay_origin;
        Eigen::FFT<double> fft;
        std::vector<cdouble> in(static_cast<std::size_t>(n)), out;
        for (int k = 0; k < n_pol; ++k)
        {
            for (int i = 0; i < n; ++i)
                in[std::size_t(i)] = ctf.H(i, k) * w[std::size_t(i)];
            fft.inv(out, in);
            for (int i = 0; i < n; ++i)
                c.taps(i, k) = out[std::size_t(i)];
        }
        return c;
    }

    struct PowerDelayProfile
    {
        std::vector<double> delays; // s
        std::vector<double> powers; // linear
    };

    inline PowerDelayProfile pdp(const CIR &cir, int pol = 0)
    {
        PowerDelayProfile p;
        const int n = int(cir.taps.rows());
        p.delays.resize(std::size_t(n));
        p.powers.resize(std::size_t(n));
        for (int i = 0; i < n; ++i)
        {
            p.delays[std::size_t(i)] = cir.delay(i);
            p.powers[std::size_t(i)] = std::norm(cir.taps(i, pol));
        }
        return p;
    }

    // Exact path-domain PDP: one tap per path at its delay
    inline PowerDelayProfile pdp_from_paths(const std::vector<PropagationPath> &paths, int pol = 0)
    {
        PowerDelayProfile p;
        for (const auto &x : paths)
        {
            p.delays.push_back(x.delay_s);
            p.powers.push_back(std::norm(pol_entry(x.gain, pol)));
        }
        return p;
    }

    // Sum of path gains per polarization (VV, VH, HV, HH)
    inline Eigen::Vector4cd narrowband_gain(const std::vector<PropagationPath> &paths)
    {
        Eigen::Vector4cd g = Eigen::Vector4cd::Zero();
        for (const auto &p : paths)
            for (int k = 0; k < n_pol; ++k)
                g[k] += pol_entry(p.gain, k);
        return g;
    }

    inline Eigen::Vector4cd narrowband_gain(const ChannelSnapshot &snap) { return narrowband_gain(snap.paths); }

    // (speed / lambda) cos(angle between velocity and the arrival direction)
    inline double doppler(const PropagationPath &path, const TrajectorySpec &traj, double f_center)
    {
        const Vec3 u = tracer::unit_vector(path.aoa);
        const Vec3 v = traj.direction.normalized();
        return traj.speed / (speed_of_light / f_center) * std::clamp(u.dot(v), -1.0, 1.0);
    }

    // ---------------------------------------------------------------------------------------------
    // Sweep

    struct SweepOptions
    {
        int jobs = 1;
        std::uint64_t seed = 0;
        long block = 64; // snapshots per ordered block and worker
    };

    // Traces every trajectory sample with `jobs` workers and hands the snapshots to `sink` in
    // index order. Output is independent of the worker count.
    inline void sweep(const scene::Scene &scene, const Vec3 &tx, const TrajectorySpec &traj, const tracer::TraceConfig &cfg,
                      const SweepOptions &opt, const std::function<void(ChannelSnapshot &&)> &sink)
    {
        validate(traj);
        const tracer::Tracer tr(scene, cfg);
        const int jobs = std::max(1, opt.jobs);
        const long block = std::max<long>(1, opt.block) * jobs;
        std::vector<ChannelSnapshot> buf;
        for (long first = 0; first < traj.n_samples; first += block)
        {
            const long count = std::min(block, traj.n_samples - first);
            buf.assign(std::size_t(count), {});
            std::atomic<long> next{0};
            std::exception_ptr failure;
            std::mutex failure_mutex;
            auto work = [&] {
                for (long i; (i = next.fetch_add(1)) < count;)
                {
                    try
                    {
                        ChannelSnapshot &s = buf[std::size_t(i)];
                        s.index = first + i;
                        s.rx_position = traj.position(s.index);
                        s.time_s = traj.time(s.index);
                        s.outside_scene = !scene.bbox.contains(s.rx_position, 1e-9);
                        s.paths = tr.all(tx, s.rx_position, {opt.seed, std::uint64_t(s.index)});
                    }
                    catch (...)
                    {
                        std::lock_guard lk(failure_mutex);
                        if (!failure)
                            failure = std::current_exception();
                    }
                }
            };
            if (jobs == 1)
                work();
            else
            {
                std::vector<std::thread> pool;
                for (int j = 0; j < jobs; ++j)
                    pool.emplace_back(work);
                for (auto &t : pool)
                    t.join();
            }
            if (failure)
                std::rethrow_exception(failure);
            for (auto &s : buf)
                sink(std::move(s));
        }
    }

    inline std::vector<ChannelSnapshot> sweep(const scene::Scene &scene, const Vec3 &tx, const TrajectorySpec &traj,
                                              const tracer::TraceConfig &cfg, const SweepOptions &opt = {})
    {
        std::vector<ChannelSnapshot> out;
        out.reserve(std::size_t(traj.n_samples));
        sweep(scene, tx, traj, cfg, opt, [&](ChannelSnapshot &&s) { out.push_back(std::move(s)); });
        return out;
    }

    // ---------------------------------------------------------------------------------------------
    // File formats

    // Path dump CSV
    inline void write_paths_header(std::ostream &os)
    {
        os << "snapshot_id,path_id,mechanism_chain,delay_s,length_m,aod_az_deg,aod_el_deg,aoa_az_deg,aoa_el_deg,"
              "gain_vv_re,gain_vv_im,gain_vh_re,gain_vh_im,gain_hv_re,gain_hv_im,gain_hh_re,gain_hh_im\n";
    }

    inline void write_paths_rows(std::ostream &os, long snapshot_id, const std::vector<PropagationPath> &paths)
    {
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << ',' << buf;
        };
        for (std::size_t i = 0; i < paths.size(); ++i)
        {
            const auto &p = paths[i];
            os << snapshot_id << ',' << i << ',' << p.label();
            num(p.delay_s);
            num(p.length_m);
            num(p.aod.azimuth_deg);
            num(p.aod.elevation_deg);
            num(p.aoa.azimuth_deg);
            num(p.aoa.elevation_deg);
            for (int k = 0; k < n_pol; ++k)
            {
                const cdouble g = pol_entry(p.gain, k);
                num(g.real());
                num(g.imag());
            }
            os << '\n';
        }
    }

    // Flat binary CTF record: magic "RCCTF1", uint32 LE n_points, then the VV, VH, HV, HH
    // columns one after the other, each as n_points float64 LE (re, im) pairs.
    inline constexpr char ctf_magic[6] = {'R', 'C', 'C', 'T', 'F', '1'};

    namespace detail
    {
        inline void put_le(std::ostream &os, std::uint64_t v, int bytes)
        {
            char b[8];
            for (int i = 0; i < bytes; ++i)
                b[i] = char((v >> (8 * i)) & 0xff);
            os.write(b, bytes);
        }
        inline std::uint64_t get_le(std::istream &is, int bytes)
        {
            unsigned char b[8] = {};
            if (!is.read(reinterpret_cast<char *>(b), bytes))
                throw parse_error("truncated CTF record", 0);
            std::uint64_t v = 0;
            for (int i = 0; i < bytes; ++i)
                v |= std::uint64_t(b[i]) << (8 * i);
            return v;
        }
        inline void put_f64(std::ostream &os, double d)
        {
            std::uint64_t u;
            std::memcpy(&u, &d, 8);
            put_le(os, u, 8);
        }
        inline double get_f64(std::istream &is)
        {
            const std::uint64_t u = get_le(is, 8);
            double d;
            std::memcpy(&d, &u, 8);
            return d;
        }
    }

    inline void write_ctf(std::ostream &os, const CTF &ctf)
    {
        os.write(ctf_magic, 6);
        detail::put_le(os, std::uint64_t(ctf.H.rows()), 4);
        for (int k = 0; k < n_pol; ++k)
            for (Eigen::Index i = 0; i < ctf.H.rows(); ++i)
            {
                detail::put_f64(os, ctf.H(i, k).real());
                detail::put_f64(os, ctf.H(i, k).imag());
            }
    }

    // Reads one record; returns false at a clean end of stream
    inline bool read_ctf(std::istream &is, Eigen::MatrixXcd &H)
    {
        char magic[6];
        if (!is.read(magic, 6))
        {
            if (is.gcount() == 0)
                return false;
            throw parse_error("truncated CTF record header", 0);
        }
        if (std::memcmp(magic, ctf_magic, 6) != 0)
            throw parse_error("bad CTF magic", 0);
        const auto n = Eigen::Index(detail::get_le(is, 4));
        H.resize(n, n_pol);
        for (int k = 0; k < n_pol; ++k)
            for (Eigen::Index i = 0; i < n; ++i)
            {
                const double re = detail::get_f64(is);
                const double im = detail::get_f64(is);
                H(i, k) = {re, im};
            }
        return true;
    }
    // Inverse of PropagationPath::label(); interaction points are left at the origin
    inline std::vector<tracer::InteractionPoint> parse_chain(const std::string &label)
    {
        std::vector<tracer::InteractionPoint> chain;
        if (label == "LOS")
            return chain;
        std::size_t pos = 0;
        while (pos <= label.size())
        {
            std::size_t end = label.find('-', pos);
            if (end == std::string::npos)
                end = label.size();
            const std::string tok = label.substr(pos, end - pos);
            if (tok.size() < 2 || (tok[0] != 'R' && tok[0] != 'D' && tok[0] != 'S'))
                throw parse_error("bad mechanism chain '" + label + "'", 0);
            tracer::InteractionPoint ip;
            ip.kind = tok[0] == 'R' ? tracer::Interaction::reflection
                      : tok[0] == 'D' ? tracer::Interaction::diffraction
                                      : tracer::Interaction::scattering;
            try
            {
                std::size_t used = 0;
                ip.id = std::stoi(tok.substr(1), &used);
                const std::string rest = tok.substr(1 + used);
                if (ip.kind == tracer::Interaction::scattering)
                {
                    if (rest.size() < 2 || rest[0] != '#')
                        throw parse_error("", 0);
                    std::size_t used2 = 0;
                    ip.tile = std::stoi(rest.substr(1), &used2);
                    if (used2 + 1 != rest.size())
                        throw parse_error("", 0);
                }
                else if (!rest.empty())
                    throw parse_error("", 0);
            }
            catch (const std::exception &)
            {
                throw parse_error("bad mechanism chain '" + label + "'", 0);
            }
            chain.push_back(ip);
            pos = end + 1;
        }
        return chain;
    }

    // Reads a path dump written by write_paths_header/write_paths_rows. Snapshots appear in
    // file order; snapshots without paths are absent.
    inline std::vector<std::pair<long, std::vector<PropagationPath>>> read_paths_csv(std::istream &is)
    {
        std::vector<std::pair<long, std::vector<PropagationPath>>> out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line))
        {
            ++line_no;
            if (line_no == 1 && line.rfind("snapshot_id", 0) == 0)
                continue;
            if (line.empty())
                continue;
            std::vector<std::string> f;
            std::size_t pos = 0;
            for (;;)
            {
                const auto c = line.find(',', pos);
                f.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
                if (c == std::string::npos)
                    break;
                pos = c + 1;
            }
            if (f.size() != 17)
                throw parse_error("path dump: expected 17 fields", line_no);
            PropagationPath p;
            long snap = 0;
            try
            {
                snap = std::stol(f[0]);
                p.chain = parse_chain(f[2]);
                p.delay_s = std::stod(f[3]);
                p.length_m = std::stod(f[4]);
                p.aod = {std::stod(f[5]), std::stod(f[6])};
                p.aoa = {std::stod(f[7]), std::stod(f[8])};
                for (int k = 0; k < n_pol; ++k)
                {
                    const cdouble g(std::stod(f[9 + 2 * k]), std::stod(f[10 + 2 * k]));
                    p.gain(k == 0 || k == 2 ? 0 : 1, k < 2 ? 0 : 1) = g;
                }
            }
            catch (const parse_error &)
            {
                throw parse_error("path dump: bad mechanism chain '" + f[2] + "'", line_no);
            }
            catch (const std::exception &)
            {
                throw parse_error("path dump: bad number", line_no);
            }
            if (out.empty() || out.back().first != snap)
                out.emplace_back(snap, std::vector<PropagationPath>{});
            out.back().second.push_back(std::move(p));
        }
        return out;
    }
}
