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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace railchan
{
    using Vec3 = Eigen::Vector3d;
    using cdouble = std::complex<double>;

    inline constexpr double speed_of_light = 299792458.0; // m/s
    inline constexpr double pi = std::numbers::pi;
    inline constexpr double deg_per_rad = 180.0 / pi;

    namespace geom
    {
        // Newell normal (unnormalized, length = 2 * area for planar polygons)
        inline Vec3 newell_normal(std::span<const Vec3> v)
        {
            Vec3 n = Vec3::Zero();
            const std::size_t m = v.size();
            for (std::size_t i = 0; i < m; ++i)
            {
                const Vec3 &a = v[i];
                const Vec3 &b = v[(i + 1) % m];
                n.x() += (a.y() - b.y()) * (a.z() + b.z());
                n.y() += (a.z() - b.z()) * (a.x() + b.x());
                n.z() += (a.x() - b.x()) * (a.y() + b.y());
            }
            return n;
        }

        inline double polygon_area(std::span<const Vec3> v)
        {
            return 0.5 * newell_normal(v).norm();
        }

        inline Vec3 polygon_centroid(std::span<const Vec3> v)
        {
            // Area-weighted centroid via fan triangulation
            if (v.size() < 3)
                return v.empty() ? Vec3::Zero() : Vec3(v[0]);
            Vec3 acc = Vec3::Zero();
            double w = 0.0;
            for (std::size_t i = 1; i + 1 < v.size(); ++i)
            {
                const double a = 0.5 * (v[i] - v[0]).cross(v[i + 1] - v[0]).norm();
                acc += a * (v[0] + v[i] + v[i + 1]) / 3.0;
                w += a;
            }
            if (w <= 0.0)
            {
                for (const auto &p : v)
                    acc += p;
                return acc / double(v.size());
            }
            return acc / w;
        }

        // Largest distance of any vertex from the plane through v[0] with normal n
        inline double planarity_deviation(std::span<const Vec3> v, const Vec3 &unit_normal)
        {
            double dev = 0.0;
            for (const auto &p : v)
                dev = std::max(dev, std::abs(unit_normal.dot(p - v[0])));
            return dev;
        }

        // Convex with counterclockwise winding about unit_normal
        inline bool is_convex_ccw(std::span<const Vec3> v, const Vec3 &unit_normal)
        {
            const std::size_t m = v.size();
            for (std::size_t i = 0; i < m; ++i)
            {
                const Vec3 e1 = v[(i + 1) % m] - v[i];
                const Vec3 e2 = v[(i + 2) % m] - v[(i + 1) % m];
                if (e1.cross(e2).dot(unit_normal) < -1e-12 * e1.norm() * e2.norm())
                    return false;
            }
            return true;
        }

        // Inclusive point-in-convex-polygon test for a point (assumed) on the polygon plane.
        // Points within tol of the boundary count as inside.
        inline bool inside_convex(std::span<const Vec3> v, const Vec3 &unit_normal, const Vec3 &p, double tol)
        {
            const std::size_t m = v.size();
            for (std::size_t i = 0; i < m; ++i)
            {
                const Vec3 e = v[(i + 1) % m] - v[i];
                const double len = e.norm();
                if (len == 0.0)
                    continue;
                // signed distance of p to the edge line, positive towards the interior
                const double d = e.cross(p - v[i]).dot(unit_normal) / len;
                if (d < -tol)
                    return false;
            }
            return true;
        }

        inline Vec3 mirror(const Vec3 &p, const Vec3 &unit_normal, double offset)
        {
            // plane: n.x = offset
            return p - 2.0 * (unit_normal.dot(p) - offset) * unit_normal;
        }

        struct Aabb
        {
            Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
            Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

            void extend(const Vec3 &p)
            {
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
            bool contains(const Vec3 &p, double tol = 0.0) const
            {
                return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
            }
            bool empty() const { return lo.x() > hi.x(); }

            // Slab test for segment a->b against the box inflated by tol
            bool overlaps_segment(const Vec3 &a, const Vec3 &b, double tol) const
            {
                double t0 = 0.0, t1 = 1.0;
                for (int k = 0; k < 3; ++k)
                {
                    const double d = b[k] - a[k];
                    const double l = lo[k] - tol, h = hi[k] + tol;
                    if (std::abs(d) < 1e-300)
                    {
                        if (a[k] < l || a[k] > h)
                            return false;
                        continue;
                    }
                    double ta = (l - a[k]) / d, tb = (h - a[k]) / d;
                    if (ta > tb)
                        std::swap(ta, tb);
                    t0 = std::max(t0, ta);
                    t1 = std::min(t1, tb);
                    if (t0 > t1)
                        return false;
                }
                return true;
            }
        };

        // Sutherland-Hodgman clip of a convex polygon against the half-space n.x <= offset
        inline std::vector<Vec3> clip_halfspace(const std::vector<Vec3> &poly, const Vec3 &n, double offset)
        {
            std::vector<Vec3> out;
            const std::size_t m = poly.size();
            for (std::size_t i = 0; i < m; ++i)
            {
                const Vec3 &a = poly[i];
                const Vec3 &b = poly[(i + 1) % m];
                const double da = n.dot(a) - offset, db = n.dot(b) - offset;
                if (da <= 0.0)
                    out.push_back(a);
                if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0))
                    out.push_back(a + (b - a) * (da / (da - db)));
            }
            return out;
        }

        // Unit vector perpendicular to v (deterministic choice)
        inline Vec3 any_perpendicular(const Vec3 &v)
        {
            const Vec3 axis = std::abs(v.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
            return v.cross(axis).normalized();
        }
    }
}
