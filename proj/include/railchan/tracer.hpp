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

// Deterministic multipath search: LOS, image-method specular reflections, single UTD
// wedge diffraction and single-bounce directive scattering. Every path carries a 2x2
// polarimetric gain at the centre frequency mapping Tx (V, H) to Rx (V, H).

#include "em.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

namespace railchan::tracer
{
    using em::Dyadic2x2;
    using Mat3c = Eigen::Matrix3cd;

    enum class Interaction
    {
        reflection,
        diffraction,
        scattering,
    };

    struct InteractionPoint
    {
        Interaction kind = Interaction::reflection;
        int id = 0;   // surface id (reflection, scattering) or wedge index (diffraction)
        int tile = -1; // scattering tile index within the surface
        Vec3 point = Vec3::Zero();

        bool same_element(const InteractionPoint &o) const { return kind == o.kind && id == o.id && tile == o.tile; }
    };

    struct Direction
    {
        double azimuth_deg = 0;   // [-180, 180)
        double elevation_deg = 0; // [-90, 90]
    };

    inline Direction direction_of(const Vec3 &v)
    {
        const Vec3 u = v.normalized();
        double az = std::atan2(u.y(), u.x()) * deg_per_rad;
        if (az >= 180.0)
            az -= 360.0;
        return {az, std::asin(std::clamp(u.z(), -1.0, 1.0)) * deg_per_rad};
    }

    inline Vec3 unit_vector(const Direction &d)
    {
        const double az = d.azimuth_deg / deg_per_rad, el = d.elevation_deg / deg_per_rad;
        return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
    }

    struct PropagationPath
    {
        std::vector<InteractionPoint> chain; // empty for LOS
        double delay_s = 0;
        double length_m = 0;
        Direction aod; // at Tx, along the first segment
        Direction aoa; // at Rx, pointing back along the last segment
        Dyadic2x2 gain = Dyadic2x2::Zero();

        bool is_los() const { return chain.empty(); }
        double power() const { return gain.cwiseAbs2().maxCoeff(); }

        // "LOS", "R12-R7", "D3", "S45#17"
        std::string label() const
        {
            if (chain.empty())
                return "LOS";
            std::string s;
            for (const auto &c : chain)
            {
                if (!s.empty())
                    s += '-';
                s += c.kind == Interaction::reflection ? 'R' : c.kind == Interaction::diffraction ? 'D' : 'S';
                s += std::to_string(c.id);
                if (c.kind == Interaction::scattering)
                    s += "#" + std::to_string(c.tile);
            }
            return s;
        }
    };

    struct TraceConfig
    {
        int max_reflection_order = 2;
        bool enable_diffraction = true;
        bool enable_scattering = true;
        bool enable_vegetation = true;
        double scatter_tile_size = 1.0;   // m
        double center_frequency = 64.32e9; // Hz
        double min_path_gain_db = -250.0;  // paths whose strongest gain entry is weaker are dropped
    };

    inline constexpr int max_supported_order = 10;

    inline void validate(const TraceConfig &c)
    {
        std::vector<std::string> bad;
        if (c.max_reflection_order < 0 || c.max_reflection_order > max_supported_order)
            bad.emplace_back("max_reflection_order");
        if (!(c.scatter_tile_size > 0.0))
            bad.emplace_back("scatter_tile_size");
        if (!(c.center_frequency > 0.0))
            bad.emplace_back("center_frequency");
        if (std::isnan(c.min_path_gain_db))
            bad.emplace_back("min_path_gain_db");
        if (!bad.empty())
        {
            std::string msg = "invalid trace config:";
            for (const auto &b : bad)
                msg += " " + b;
            throw validation_error(msg);
        }
    }

    // Seeds the per-tile scattering phase from (master seed, snapshot, surface, tile) so the
    // phase does not depend on iteration order or on which end is the transmitter.
    struct PhaseSeed
    {
        std::uint64_t seed = 0;
        std::uint64_t snapshot = 0;

        std::mt19937_64 tile_rng(int surface_id, int tile) const
        {
            std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(snapshot), std::uint32_t(snapshot >> 32),
                              std::uint32_t(surface_id), std::uint32_t(tile)};
            return std::mt19937_64(seq);
        }
    };

    inline constexpr double occlusion_eps = 1e-6;
    inline constexpr double inside_tol = 1e-9;

    // ---------------------------------------------------------------------------------------------
    // Polarization bases

    // Antenna-frame basis for a ray direction u: columns (v, h) = (-theta_hat, phi_hat)
    inline Eigen::Matrix<double, 3, 2> vh_basis(const Vec3 &u)
    {
        Vec3 h(-u.y(), u.x(), 0.0);
        double hn = h.norm();
        if (hn < 1e-12)
            h = Vec3::UnitY(); // zenith / nadir: azimuth taken as 0
        else
            h /= hn;
        const Vec3 v = h.cross(u); // -theta_hat = phi_hat x r_hat
        Eigen::Matrix<double, 3, 2> b;
        b.col(0) = v;
        b.col(1) = h;
        return b;
    }

    // Projects the 3D dyadic onto the Tx / Rx antenna bases. `departure` is the first segment
    // direction, `arrival` the unit vector from the Rx back along the last segment.
    inline Dyadic2x2 to_antenna_frame(const Mat3c &m, const Vec3 &departure, const Vec3 &arrival)
    {
        const auto bt = vh_basis(departure);
        const auto br = vh_basis(arrival);
        return br.transpose().cast<cdouble>() * m * bt.cast<cdouble>();
    }

    // Perpendicular unit vector for the plane of incidence spanned by k and n, with a
    // deterministic fallback at normal incidence
    inline Vec3 perpendicular_unit(const Vec3 &k, const Vec3 &n, const Vec3 *fallback_k = nullptr)
    {
        Vec3 s = k.cross(n);
        double l = s.norm();
        if (l > 1e-12)
            return s / l;
        if (fallback_k)
        {
            s = fallback_k->cross(n);
            l = s.norm();
            if (l > 1e-12)
                return s / l;
        }
        return geom::any_perpendicular(n);
    }

    // Specular reflection dyadic for incident/reflected unit directions on a plane with normal n
    inline Mat3c reflection_dyadic(const Vec3 &ki, const Vec3 &kr, const Vec3 &n, cdouble g_soft, cdouble g_hard)
    {
        const Vec3 s = perpendicular_unit(ki, n);
        const Vec3 pi_ = s.cross(ki), pr = s.cross(kr);
        return g_soft * (s * s.transpose()).cast<cdouble>() + g_hard * (pr * pi_.transpose()).cast<cdouble>();
    }

    // Polarization transfer of a diffuse scattering event (specular limit = PEC reflection)
    inline Mat3c scattering_dyadic(const Vec3 &ki, const Vec3 &ko, const Vec3 &n)
    {
        const Vec3 si = perpendicular_unit(ki, n, &ko);
        const Vec3 so = perpendicular_unit(ko, n, &ki);
        const Vec3 pi_ = si.cross(ki), po = so.cross(ko);
        return (-(so * si.transpose()) + po * pi_.transpose()).cast<cdouble>();
    }

    // ---------------------------------------------------------------------------------------------
    // Precomputed scene view shared by all queries

    struct Tile
    {
        int surface_index = 0;
        int tile = 0;
        Vec3 center = Vec3::Zero();
        double area = 0;
    };

    struct VegetationVolume
    {
        std::vector<std::pair<Vec3, double>> planes; // outward normal, offset
        double atten_db_per_m = 0;
    };

    // Splits a convex polygon into square-grid tiles of edge `size` in its own plane
    inline std::vector<std::pair<Vec3, double>> tile_polygon(const scene::Surface &s, double size)
    {
        const Vec3 u = (s.vertices[1] - s.vertices[0]).normalized();
        const Vec3 w = s.normal.cross(u);
        const Vec3 o = s.vertices[0];
        double umin = 1e300, umax = -1e300, wmin = 1e300, wmax = -1e300;
        for (const auto &v : s.vertices)
        {
            const double a = (v - o).dot(u), b = (v - o).dot(w);
            umin = std::min(umin, a);
            umax = std::max(umax, a);
            wmin = std::min(wmin, b);
            wmax = std::max(wmax, b);
        }
        const int nu = std::max(1, int(std::ceil((umax - umin) / size - 1e-9)));
        const int nw = std::max(1, int(std::ceil((wmax - wmin) / size - 1e-9)));
        std::vector<std::pair<Vec3, double>> out;
        out.reserve(std::size_t(nu) * std::size_t(nw));
        for (int j = 0; j < nw; ++j)
            for (int i = 0; i < nu; ++i)
            {
                const double a0 = umin + i * size, a1 = std::min(umax, a0 + size);
                const double b0 = wmin + j * size, b1 = std::min(wmax, b0 + size);
                std::vector<Vec3> poly = s.vertices;
                poly = geom::clip_halfspace(poly, u, u.dot(o) + a1);
                poly = geom::clip_halfspace(poly, -u, -(u.dot(o) + a0));
                poly = geom::clip_halfspace(poly, w, w.dot(o) + b1);
                poly = geom::clip_halfspace(poly, -w, -(w.dot(o) + b0));
                if (poly.size() < 3)
                {
                    out.emplace_back(Vec3::Zero(), 0.0);
                    continue;
                }
                const double area = geom::polygon_area(poly);
                out.emplace_back(area > 1e-12 ? geom::polygon_centroid(poly) : Vec3::Zero(), area);
            }
        return out;
    }

    class Tracer
    {
      public:
        Tracer(const scene::Scene &scene, const TraceConfig &cfg) : scene_(scene), cfg_(cfg)
        {
            validate(cfg);
            k_ = 2.0 * pi * cfg.center_frequency / speed_of_light;
            lambda_ = speed_of_light / cfg.center_frequency;
            const auto &surfs = scene.surfaces;
            for (std::size_t i = 0; i < surfs.size(); ++i)
            {
                const auto &s = surfs[i];
                const bool veg = is_vegetation(s);
                if (!veg)
                {
                    opaque_.push_back(int(i));
                    reflectors_.push_back(int(i));
                }
            }
            if (cfg.enable_vegetation)
            {
                std::map<int, VegetationVolume> vols;
                for (const auto &s : surfs)
                    if (is_vegetation(s))
                    {
                        auto &v = vols[s.object_id];
                        v.planes.emplace_back(s.normal, s.offset);
                        v.atten_db_per_m = scene.material_of(s).veg_atten;
                    }
                for (auto &[id, v] : vols)
                    if (v.atten_db_per_m > 0.0)
                        vegetation_.push_back(std::move(v));
            }
            // reflection successor lists: half-space tests only
            next_.resize(surfs.size());
            for (int a : reflectors_)
                for (int b : reflectors_)
                    if (can_follow(surfs[std::size_t(a)], surfs[std::size_t(b)]))
                        next_[std::size_t(a)].push_back(b);
            if (cfg.enable_scattering)
                for (std::size_t i = 0; i < surfs.size(); ++i)
                {
                    const auto &s = surfs[i];
                    const auto &m = scene.material_of(s);
                    if (is_vegetation(s) || !(m.scatter_s > 0.0))
                        continue;
                    const auto tiles = tile_polygon(s, cfg.scatter_tile_size);
                    for (std::size_t t = 0; t < tiles.size(); ++t)
                        if (tiles[t].second > 1e-12)
                            tiles_.push_back({int(i), int(t), tiles[t].first, tiles[t].second});
                }
        }

        const TraceConfig &config() const { return cfg_; }
        const scene::Scene &scene() const { return scene_; }
        std::size_t tile_count() const { return tiles_.size(); }

        // True if the open segment a->b hits an opaque surface other than the excluded ones.
        // Intersections within occlusion_eps of a polygon boundary count as hits.
        bool blocked(const Vec3 &a, const Vec3 &b, int skip0 = -1, int skip1 = -1, int skip2 = -1) const
        {
            const auto &surfs = scene_.surfaces;
            for (int idx : opaque_)
            {
                if (idx == skip0 || idx == skip1 || idx == skip2)
                    continue;
                const auto &s = surfs[std::size_t(idx)];
                if (!s.box.overlaps_segment(a, b, occlusion_eps))
                    continue;
                if (segment_hits(s, a, b))
                    return true;
            }
            return false;
        }

        // Amplitude factor of vegetation volumes crossed by the segment
        double vegetation_factor(const Vec3 &a, const Vec3 &b) const
        {
            if (vegetation_.empty())
                return 1.0;
            double loss_db = 0.0;
            const Vec3 d = b - a;
            const double len = d.norm();
            for (const auto &v : vegetation_)
            {
                double t0 = 0.0, t1 = 1.0;
                for (const auto &[n, off] : v.planes)
                {
                    const double num = off - n.dot(a), den = n.dot(d);
                    if (std::abs(den) < 1e-300)
                    {
                        if (num < 0.0)
                        {
                            t1 = -1.0;
                            break;
                        }
                        continue;
                    }
                    const double t = num / den;
                    if (den > 0.0)
                        t1 = std::min(t1, t);
                    else
                        t0 = std::max(t0, t);
                    if (t0 >= t1)
                        break;
                }
                if (t1 > t0)
                    loss_db += em::vegetation_loss((t1 - t0) * len, v.atten_db_per_m);
            }
            return std::pow(10.0, -loss_db / 20.0);
        }

        std::optional<PropagationPath> los(const Vec3 &tx, const Vec3 &rx) const
        {
            const Vec3 d = rx - tx;
            const double len = d.norm();
            if (!(len > 0.0))
                throw domain_error("trace_los: tx and rx coincide");
            if (blocked(tx, rx))
                return std::nullopt;
            PropagationPath p;
            p.length_m = len;
            p.delay_s = len / speed_of_light;
            const Vec3 u = d / len;
            p.aod = direction_of(u);
            p.aoa = direction_of(-u);
            const cdouble a = em::free_space_gain(len, cfg_.center_frequency) * vegetation_factor(tx, rx);
            p.gain = to_antenna_frame(Mat3c::Identity() * a, u, -u);
            return p;
        }

        std::vector<PropagationPath> reflections(const Vec3 &tx, const Vec3 &rx) const
        {
            std::vector<PropagationPath> out;
            if (cfg_.max_reflection_order < 1)
                return out;
            std::vector<int> seq;
            std::vector<Vec3> images{tx};
            seq.reserve(std::size_t(cfg_.max_reflection_order));
            images.reserve(std::size_t(cfg_.max_reflection_order) + 1);
            std::vector<Vec3> pts;
            for (int s : reflectors_)
                dfs(s, tx, rx, seq, images, pts, out);
            return out;
        }

        std::vector<PropagationPath> diffractions(const Vec3 &tx, const Vec3 &rx) const
        {
            std::vector<PropagationPath> out;
            if (!cfg_.enable_diffraction)
                return out;
            for (std::size_t w = 0; w < scene_.wedges.size(); ++w)
                if (auto p = diffract(int(w), tx, rx))
                    out.push_back(std::move(*p));
            return out;
        }

        std::vector<PropagationPath> scattering(const Vec3 &tx, const Vec3 &rx, const PhaseSeed &seed) const
        {
            std::vector<PropagationPath> out;
            if (!cfg_.enable_scattering)
                return out;
            for (const auto &t : tiles_)
                if (auto p = scatter(t, tx, rx, seed))
                    out.push_back(std::move(*p));
            return out;
        }

        std::vector<PropagationPath> all(const Vec3 &tx, const Vec3 &rx, const PhaseSeed &seed) const
        {
            std::vector<PropagationPath> out;
            if (auto l = los(tx, rx))
                out.push_back(std::move(*l));
            auto r = reflections(tx, rx);
            auto d = diffractions(tx, rx);
            auto s = scattering(tx, rx, seed);
            out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
            out.insert(out.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
            out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
            cull(out);
            canonical_sort(out);
            return out;
        }

        void cull(std::vector<PropagationPath> &paths) const
        {
            const double thr = cfg_.min_path_gain_db;
            if (thr == -std::numeric_limits<double>::infinity())
                return;
            std::erase_if(paths, [&](const PropagationPath &p) { return 10.0 * std::log10(p.power()) < thr; });
        }

        static bool chain_less(const PropagationPath &a, const PropagationPath &b)
        {
            const std::size_t n = std::min(a.chain.size(), b.chain.size());
            for (std::size_t i = 0; i < n; ++i)
            {
                const auto &x = a.chain[i], &y = b.chain[i];
                if (x.kind != y.kind)
                    return x.kind < y.kind;
                if (x.id != y.id)
                    return x.id < y.id;
                if (x.tile != y.tile)
                    return x.tile < y.tile;
            }
            return a.chain.size() < b.chain.size();
        }

        static bool same_chain(const PropagationPath &a, const PropagationPath &b)
        {
            if (a.chain.size() != b.chain.size())
                return false;
            for (std::size_t i = 0; i < a.chain.size(); ++i)
                if (!a.chain[i].same_element(b.chain[i]))
                    return false;
            return true;
        }

        // Sort by (delay, interaction ids) and drop duplicate chains
        static void canonical_sort(std::vector<PropagationPath> &paths)
        {
            std::stable_sort(paths.begin(), paths.end(), [](const PropagationPath &a, const PropagationPath &b) {
                if (a.delay_s != b.delay_s)
                    return a.delay_s < b.delay_s;
                return chain_less(a, b);
            });
            std::vector<PropagationPath> unique;
            unique.reserve(paths.size());
            for (auto &p : paths)
            {
                bool dup = false;
                for (auto it = unique.rbegin(); it != unique.rend() && it->delay_s == p.delay_s; ++it)
                    if (same_chain(*it, p))
                    {
                        dup = true;
                        break;
                    }
                if (!dup)
                    unique.push_back(std::move(p));
            }
            paths = std::move(unique);
        }

      private:
        static bool is_vegetation(const scene::Surface &s) { return s.object_class == scene::ObjectClass::vegetation; }

        static bool coplanar(const scene::Surface &a, const scene::Surface &b)
        {
            const double c = a.normal.dot(b.normal);
            if (std::abs(std::abs(c) - 1.0) > 1e-12)
                return false;
            return std::abs(a.offset - (c > 0 ? b.offset : -b.offset)) < 1e-9;
        }

        static bool has_vertex_in_front(const scene::Surface &of, const scene::Surface &plane)
        {
            for (const auto &v : of.vertices)
                if (plane.signed_distance(v) > inside_tol)
                    return true;
            return false;
        }

        // A reflection on b can follow one on a only if each lies partly in front of the other
        static bool can_follow(const scene::Surface &a, const scene::Surface &b)
        {
            if (a.id == b.id || coplanar(a, b))
                return false;
            return has_vertex_in_front(b, a) && has_vertex_in_front(a, b);
        }

        bool segment_hits(const scene::Surface &s, const Vec3 &a, const Vec3 &b) const
        {
            const double da = s.signed_distance(a), db = s.signed_distance(b);
            if ((da > occlusion_eps && db > occlusion_eps) || (da < -occlusion_eps && db < -occlusion_eps))
                return false;
            if (std::abs(da) <= occlusion_eps && std::abs(db) <= occlusion_eps)
            {
                // segment lies in the plane: blocked if it touches the polygon (grazing)
                const std::size_t m = s.vertices.size();
                double t0 = 0.0, t1 = 1.0;
                const Vec3 d = b - a;
                for (std::size_t i = 0; i < m; ++i)
                {
                    const Vec3 e = s.vertices[(i + 1) % m] - s.vertices[i];
                    const double len = e.norm();
                    if (len == 0.0)
                        continue;
                    const Vec3 inward = s.normal.cross(e) / len;
                    const double num = inward.dot(a - s.vertices[i]) + occlusion_eps, den = inward.dot(d);
                    if (std::abs(den) < 1e-300)
                    {
                        if (num < 0.0)
                            return false;
                        continue;
                    }
                    const double t = -num / den;
                    if (den > 0.0)
                        t0 = std::max(t0, t);
                    else
                        t1 = std::min(t1, t);
                    if (t0 > t1)
                        return false;
                }
                return true;
            }
            double t;
            if (std::abs(da - db) < 1e-300)
                return false;
            t = da / (da - db);
            t = std::clamp(t, 0.0, 1.0);
            const Vec3 p = a + t * (b - a);
            return s.contains(p, occlusion_eps);
        }

        void dfs(int si, const Vec3 &tx, const Vec3 &rx, std::vector<int> &seq, std::vector<Vec3> &images, std::vector<Vec3> &pts,
                 std::vector<PropagationPath> &out) const
        {
            const auto &s = scene_.surfaces[std::size_t(si)];
            // one-sided: the current image must be in front of the next surface
            if (!(s.signed_distance(images.back()) > inside_tol))
                return;
            seq.push_back(si);
            images.push_back(geom::mirror(images.back(), s.normal, s.offset));
            if (s.signed_distance(rx) > inside_tol)
                if (auto p = build_reflection(tx, rx, seq, images, pts))
                    out.push_back(std::move(*p));
            if (int(seq.size()) < cfg_.max_reflection_order)
                for (int nx : next_[std::size_t(si)])
                    dfs(nx, tx, rx, seq, images, pts, out);
            seq.pop_back();
            images.pop_back();
        }

        std::optional<PropagationPath> build_reflection(const Vec3 &tx, const Vec3 &rx, const std::vector<int> &seq,
                                                        const std::vector<Vec3> &images, std::vector<Vec3> &pts) const
        {
            const auto &surfs = scene_.surfaces;
            const std::size_t n = seq.size();
            pts.assign(n, Vec3::Zero());
            Vec3 target = rx;
            for (std::size_t k = n; k-- > 0;)
            {
                const auto &s = surfs[std::size_t(seq[k])];
                const Vec3 &img = images[k + 1];
                const double dt = s.signed_distance(target), di = s.signed_distance(img);
                if (!(dt > inside_tol) || !(di < -inside_tol))
                    return std::nullopt;
                const double t = dt / (dt - di);
                const Vec3 p = target + t * (img - target);
                if (!s.contains(p, inside_tol))
                    return std::nullopt;
                pts[k] = p;
                target = p;
            }
            // every interaction point must see its neighbours from the front side
            for (std::size_t k = 0; k < n; ++k)
            {
                const auto &s = surfs[std::size_t(seq[k])];
                const Vec3 &prev = k == 0 ? tx : pts[k - 1];
                const Vec3 &next = k + 1 == n ? rx : pts[k + 1];
                if (!(s.signed_distance(prev) > inside_tol) || !(s.signed_distance(next) > inside_tol))
                    return std::nullopt;
            }
            // occlusion of each segment, excluding the surfaces at its ends
            double veg = 1.0;
            for (std::size_t k = 0; k <= n; ++k)
            {
                const Vec3 &a = k == 0 ? tx : pts[k - 1];
                const Vec3 &b = k == n ? rx : pts[k];
                const int sa = k == 0 ? -1 : seq[k - 1];
                const int sb = k == n ? -1 : seq[k];
                if (blocked(a, b, sa, sb))
                    return std::nullopt;
                veg *= vegetation_factor(a, b);
            }
            // polarimetric gain
            Mat3c m = Mat3c::Identity();
            double length = 0.0;
            Vec3 kin = (pts[0] - tx);
            length += kin.norm();
            kin.normalize();
            const Vec3 departure = kin;
            for (std::size_t k = 0; k < n; ++k)
            {
                const auto &s = surfs[std::size_t(seq[k])];
                const Vec3 &next = k + 1 == n ? rx : pts[k + 1];
                Vec3 kout = next - pts[k];
                length += kout.norm();
                kout.normalize();
                const double cos_i = std::clamp(-kin.dot(s.normal), 0.0, 1.0);
                const auto g = gamma(std::size_t(seq[k]), std::acos(cos_i));
                m = reflection_dyadic(kin, kout, s.normal, g.soft, g.hard) * m;
                kin = kout;
            }
            PropagationPath p;
            p.length_m = length;
            p.delay_s = length / speed_of_light;
            p.aod = direction_of(departure);
            p.aoa = direction_of(-kin);
            const cdouble a = em::free_space_gain(length, cfg_.center_frequency) * veg;
            p.gain = to_antenna_frame(m * a, departure, -kin);
            p.chain.reserve(n);
            for (std::size_t k = 0; k < n; ++k)
                p.chain.push_back({Interaction::reflection, surfs[std::size_t(seq[k])].id, -1, pts[k]});
            return p;
        }

        em::FresnelCoefficients gamma(std::size_t surface_index, double theta) const
        {
            const auto &m = scene_.material_of(scene_.surfaces[surface_index]);
            return em::fresnel(em::ComplexPermittivity::of(m), std::min(theta, std::nextafter(pi / 2, 0.0)));
        }

        // Angle of a point around the edge, measured from face 0 through the exterior
        static double wedge_angle(const Vec3 &rel, const Vec3 &t0, const Vec3 &n0)
        {
            double a = std::atan2(rel.dot(n0), rel.dot(t0));
            if (a < 0.0)
                a += 2.0 * pi;
            return a;
        }

        std::optional<PropagationPath> diffract(int wi, const Vec3 &tx, const Vec3 &rx) const
        {
            const auto &w = scene_.wedges[std::size_t(wi)];
            const std::size_t ia = scene_.surface_index(w.face_a), ib = scene_.surface_index(w.face_b);
            const auto &fa = scene_.surfaces[ia];
            const Vec3 edge = w.end - w.start;
            const double elen = edge.norm();
            if (!(elen > 0.0))
                return std::nullopt;
            Vec3 e = edge / elen;
            // face-0 in-plane direction pointing into face a
            const Vec3 centroid = geom::polygon_centroid(fa.vertices);
            Vec3 t0 = fa.normal.cross(e);
            if (t0.dot(centroid - w.start) < 0.0)
                t0 = -t0;
            const Vec3 &n0 = fa.normal;
            e = t0.cross(n0); // phi increases counterclockwise about e

            const double sS = (tx - w.start).dot(e), sR = (rx - w.start).dot(e);
            const double rhoS = (tx - w.start - sS * e).norm(), rhoR = (rx - w.start - sR * e).norm();
            if (!(rhoS > 1e-9) || !(rhoR > 1e-9))
                return std::nullopt;
            const double t = (sS * rhoR + sR * rhoS) / (rhoS + rhoR);
            const double tlo = std::min(0.0, (w.end - w.start).dot(e)), thi = std::max(0.0, (w.end - w.start).dot(e));
            if (!(t > tlo + inside_tol && t < thi - inside_tol))
                return std::nullopt;
            const Vec3 q = w.start + t * e;

            const double phi_s = wedge_angle(tx - q, t0, n0);
            const double phi_r = wedge_angle(rx - q, t0, n0);
            const double lim = w.n * pi;
            if (phi_s > lim - 1e-12 || phi_r > lim - 1e-12 || phi_s < 1e-12 || phi_r < 1e-12)
                return std::nullopt;

            const int skip_a = int(ia), skip_b = int(ib);
            if (blocked(tx, q, skip_a, skip_b) || blocked(q, rx, skip_a, skip_b))
                return std::nullopt;

            Vec3 si = q - tx;
            const double s_inc = si.norm();
            si /= s_inc;
            Vec3 sd = rx - q;
            const double s_dif = sd.norm();
            sd /= s_dif;
            const double beta0 = std::acos(std::clamp(si.dot(e), -1.0, 1.0));
            if (!(std::sin(beta0) > 1e-9))
                return std::nullopt;

            em::WedgeGeometry g;
            g.n = w.n;
            g.phi_incident = phi_s;
            g.phi_diffracted = phi_r;
            g.beta0 = beta0;
            g.s_incident = s_inc;
            g.s_diffracted = s_dif;
            const Dyadic2x2 d = em::utd_coefficient(g, k_);

            const Vec3 phi_i = -(e.cross(si)).normalized();
            const Vec3 beta_i = si.cross(phi_i);
            const Vec3 phi_d = e.cross(sd).normalized();
            const Vec3 beta_d = sd.cross(phi_d);
            const Mat3c dy = d(0, 0) * (beta_d * beta_i.transpose()).cast<cdouble>() + d(1, 1) * (phi_d * phi_i.transpose()).cast<cdouble>();

            const double length = s_inc + s_dif;
            const cdouble amp = lambda_ / (4.0 * pi) / s_inc * em::utd_spreading(s_inc, s_dif) * std::polar(1.0, -k_ * length) *
                                vegetation_factor(tx, q) * vegetation_factor(q, rx);

            PropagationPath p;
            p.length_m = length;
            p.delay_s = length / speed_of_light;
            p.aod = direction_of(si);
            p.aoa = direction_of(-sd);
            p.gain = to_antenna_frame(dy * amp, si, -sd);
            p.chain.push_back({Interaction::diffraction, wi, -1, q});
            return p;
        }

        std::optional<PropagationPath> scatter(const Tile &t, const Vec3 &tx, const Vec3 &rx, const PhaseSeed &seed) const
        {
            const auto &s = scene_.surfaces[std::size_t(t.surface_index)];
            const Vec3 &c = t.center;
            const double dtx = s.signed_distance(tx), drx = s.signed_distance(rx);
            if (!(dtx > inside_tol) || !(drx > inside_tol))
                return std::nullopt;
            Vec3 ki = c - tx;
            const double ri = ki.norm();
            ki /= ri;
            Vec3 ko = rx - c;
            const double rs = ko.norm();
            ko /= rs;
            const Vec3 kr = ki - 2.0 * ki.dot(s.normal) * s.normal;
            em::ScatterGeometry g;
            g.theta_i = std::acos(std::clamp(-ki.dot(s.normal), 0.0, 1.0));
            g.theta_s = std::acos(std::clamp(ko.dot(s.normal), 0.0, 1.0));
            g.psi_r = std::acos(std::clamp(kr.dot(ko), -1.0, 1.0));
            g.tile_area = t.area;
            g.r_i = ri;
            g.r_s = rs;
            const auto &m = scene_.material_of(s);
            const double mag = em::scatter_magnitude(g, m.scatter_s, m.scatter_alpha, lambda_);
            if (!(mag > 0.0))
                return std::nullopt;
            if (cfg_.min_path_gain_db != -std::numeric_limits<double>::infinity() && 20.0 * std::log10(mag) < cfg_.min_path_gain_db)
                return std::nullopt; // the polarization dyadic has unit norm, so this cull is exact
            if (blocked(tx, c, t.surface_index) || blocked(c, rx, t.surface_index))
                return std::nullopt;
            auto rng = seed.tile_rng(s.id, t.tile);
            const cdouble a = em::scatter_gain(g, m.scatter_s, m.scatter_alpha, lambda_, rng) * vegetation_factor(tx, c) *
                              vegetation_factor(c, rx);
            PropagationPath p;
            p.length_m = ri + rs;
            p.delay_s = p.length_m / speed_of_light;
            p.aod = direction_of(ki);
            p.aoa = direction_of(-ko);
            p.gain = to_antenna_frame(scattering_dyadic(ki, ko, s.normal) * a, ki, -ko);
            p.chain.push_back({Interaction::scattering, s.id, t.tile, c});
            return p;
        }

        const scene::Scene &scene_;
        TraceConfig cfg_;
        double k_ = 0, lambda_ = 0;
        std::vector<int> opaque_, reflectors_;
        std::vector<std::vector<int>> next_;
        std::vector<VegetationVolume> vegetation_;
        std::vector<Tile> tiles_;
    };

    // ---------------------------------------------------------------------------------------------
    // Free-function entry points (build a Tracer per call; reuse a Tracer for sweeps)

    inline std::optional<PropagationPath> trace_los(const scene::Scene &scene, const Vec3 &tx, const Vec3 &rx,
                                                    const TraceConfig &cfg = {})
    {
        TraceConfig c = cfg;
        c.enable_scattering = false;
        return Tracer(scene, c).los(tx, rx);
    }

    inline std::vector<PropagationPath> trace_reflections(const scene::Scene &scene, const Vec3 &tx, const Vec3 &rx, const TraceConfig &cfg)
    {
        TraceConfig c = cfg;
        c.enable_scattering = false;
        auto out = Tracer(scene, c).reflections(tx, rx);
        Tracer::canonical_sort(out);
        return out;
    }

    inline std::vector<PropagationPath> trace_diffraction(const scene::Scene &scene, const Vec3 &tx, const Vec3 &rx, const TraceConfig &cfg)
    {
        TraceConfig c = cfg;
        c.enable_scattering = false;
        auto out = Tracer(scene, c).diffractions(tx, rx);
        Tracer::canonical_sort(out);
        return out;
    }

    inline std::vector<PropagationPath> trace_scattering(const scene::Scene &scene, const Vec3 &tx, const Vec3 &rx, const TraceConfig &cfg,
                                                         const PhaseSeed &seed)
    {
        auto out = Tracer(scene, cfg).scattering(tx, rx, seed);
        Tracer::canonical_sort(out);
        return out;
    }

    inline std::vector<PropagationPath> trace_all(const scene::Scene &scene, const Vec3 &tx, const Vec3 &rx, const TraceConfig &cfg,
                                                  const PhaseSeed &seed = {})
    {
        return Tracer(scene, cfg).all(tx, rx, seed);
    }
}
