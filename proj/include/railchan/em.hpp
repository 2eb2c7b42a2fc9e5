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

// Electromagnetic primitives: material database, Fresnel reflection, UTD wedge
// diffraction, directive scattering lobe, vegetation attenuation, free-space spreading.
//
// Time convention: exp(+j*omega*t). A wave travelling a distance d picks up exp(-j*k*d)
// and lossy media have eps = eps' * (1 - j*tan_delta), i.e. Im(eps) <= 0.

#include "error.hpp"
#include "geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace railchan::em
{
    struct Material
    {
        std::string name;
        double eps_r = 1.0;         // relative permittivity (real part)
        double tan_delta = 0.0;     // loss tangent
        double scatter_s = 0.4;     // scattering coefficient S
        int scatter_alpha = 4;      // lobe exponent
        double veg_atten = 0.0;     // dB/m, vegetation only

        bool operator==(const Material &) const = default;
    };

    // Throws validation_error naming the offending field
    inline void validate(const Material &m)
    {
        std::string bad;
        if (m.name.empty() || m.name.find_first_of(" \t\r\n") != std::string::npos)
            bad += " name";
        if (!(m.eps_r >= 1.0))
            bad += " eps_r";
        if (!(m.tan_delta >= 0.0))
            bad += " tan_delta";
        if (!(m.scatter_s >= 0.0 && m.scatter_s <= 1.0))
            bad += " scatter_s";
        if (m.scatter_alpha < 1)
            bad += " scatter_alpha";
        if (!(m.veg_atten >= 0.0))
            bad += " veg_atten";
        if (!bad.empty())
            throw validation_error("material '" + m.name + "' has invalid field(s):" + bad);
    }

    // Built-in database of railway materials (relative permittivity, loss tangent).
    // Scattering parameters are engineering defaults; vegetation carries the
    // path-length attenuation instead of a scattering lobe.
    inline const std::vector<Material> &material_table()
    {
        static const std::vector<Material> table = {
            {"Metal", 1.00, 1e7, 0.4, 4, 0.0},
            {"Concrete", 1.06, 0.65, 0.4, 4, 0.0},
            {"Aluminium_alloy", 1.29, 1e7, 0.4, 4, 0.0},
            {"LED", 3.74, 3.14, 0.4, 4, 0.0},
            {"Tempered_glass", 10.00, 0.43, 0.4, 4, 0.0},
            {"Vegetation", 29.12, 0.278, 0.0, 1, 2.0},
            {"Smooth_marble", 1.96, 0.30, 0.4, 4, 0.0},
            {"Ceramic_tile", 1.85, 0.07, 0.4, 4, 0.0},
        };
        return table;
    }

    // Name lookup; spaces and underscores are interchangeable ("Tempered glass")
    inline std::optional<Material> find_material(std::string_view name, const std::vector<Material> &table = material_table())
    {
        std::string key(name);
        std::replace(key.begin(), key.end(), ' ', '_');
        for (const auto &m : table)
            if (m.name == key)
                return m;
        return std::nullopt;
    }

    inline Material lookup_material(std::string_view name, const std::vector<Material> &table = material_table())
    {
        auto m = find_material(name, table);
        if (!m)
            throw resolution_error("unknown material '" + std::string(name) + "'");
        return *m;
    }

    // Materials file: one record per line "name eps_r tan_delta S alpha veg_atten", '#' comments.
    inline std::vector<Material> parse_materials(std::istream &in)
    {
        std::vector<Material> out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line))
        {
            ++line_no;
            if (auto h = line.find('#'); h != std::string::npos)
                line.erase(h);
            std::istringstream ls(line);
            Material m;
            if (!(ls >> m.name))
                continue;
            if (!(ls >> m.eps_r >> m.tan_delta >> m.scatter_s >> m.scatter_alpha >> m.veg_atten))
                throw parse_error("material record needs: name eps_r tan_delta S alpha veg_atten", line_no);
            std::string extra;
            if (ls >> extra)
                throw parse_error("trailing token '" + extra + "' in material record", line_no);
            try
            {
                validate(m);
            }
            catch (const validation_error &e)
            {
                throw parse_error(e.what(), line_no);
            }
            out.push_back(m);
        }
        return out;
    }

    // Table with file records overriding/extending the built-in entries
    inline std::vector<Material> load_materials(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw parse_error("cannot open materials file '" + path + "'", 0);
        std::vector<Material> table = material_table();
        for (auto &m : parse_materials(f))
        {
            auto it = std::find_if(table.begin(), table.end(), [&](const Material &t) { return t.name == m.name; });
            if (it != table.end())
                *it = m;
            else
                table.push_back(m);
        }
        return table;
    }

    // ---------------------------------------------------------------------------------------------
    // Complex permittivity

    class ComplexPermittivity
    {
      public:
        explicit ComplexPermittivity(cdouble v) : value_(v)
        {
            if (!(v.real() >= 1.0) || !(v.imag() <= 0.0))
                throw domain_error("complex permittivity must have Re >= 1 and Im <= 0");
        }
        static ComplexPermittivity from_loss_tangent(double eps_r, double tan_delta)
        {
            return ComplexPermittivity(cdouble(eps_r, -eps_r * tan_delta));
        }
        static ComplexPermittivity of(const Material &m) { return from_loss_tangent(m.eps_r, m.tan_delta); }

        cdouble value() const { return value_; }

      private:
        cdouble value_;
    };

    // 2x2 polarimetric amplitude gain. Rows index the receive polarization, columns the
    // transmit polarization: G(0,0)=VV, G(1,0)=VH (Tx V -> Rx H), G(0,1)=HV, G(1,1)=HH.
    // Inside em-core the same type holds diag(soft, hard) coefficients.
    using Dyadic2x2 = Eigen::Matrix2cd;

    // ---------------------------------------------------------------------------------------------
    // Fresnel reflection

    struct FresnelCoefficients
    {
        cdouble soft; // perpendicular (TE)
        cdouble hard; // parallel (TM)
    };

    // Air -> material half-space; theta_i measured from the surface normal, [0, pi/2)
    inline FresnelCoefficients fresnel(const ComplexPermittivity &eps, double theta_i)
    {
        if (!(theta_i >= 0.0 && theta_i < pi / 2))
            throw domain_error("fresnel: incidence angle must lie in [0, pi/2)");
        const cdouble e = eps.value();
        const double c = std::cos(theta_i);
        const double s2 = std::sin(theta_i) * std::sin(theta_i);
        const cdouble root = std::sqrt(e - s2);
        return {(c - root) / (c + root), (e * c - root) / (e * c + root)};
    }

    // ---------------------------------------------------------------------------------------------
    // Fresnel integrals and the UTD transition function

    namespace detail
    {
        // Returns (0.5 - C(x)) + j (0.5 - S(x)) for x >= 0, where
        // C(x) = int_0^x cos(pi t^2/2) dt, S(x) = int_0^x sin(pi t^2/2) dt.
        // Power series for small x, Lentz continued fraction otherwise.
        inline cdouble fresnel_complement(double x)
        {
            constexpr double eps = 1e-16;
            constexpr int max_iter = 200;
            constexpr double fpmin = 1e-300;
            constexpr double xmin = 1.5;

            if (x < 0.0)
                throw domain_error("fresnel_complement: negative argument");
            if (x <= xmin)
            {
                double c = 0.0, s = 0.0;
                if (x > std::sqrt(fpmin))
                {
                    double sum = 0.0, sums = 0.0, sumc = x, sign = 1.0;
                    const double fact = (pi / 2) * x * x;
                    bool odd = true;
                    double term = x;
                    int n = 3;
                    for (int k = 1; k <= max_iter; ++k)
                    {
                        term *= fact / k;
                        sum += sign * term / n;
                        const double test = std::abs(sum) * eps;
                        if (odd)
                        {
                            sign = -sign;
                            sums = sum;
                            sum = sumc;
                        }
                        else
                        {
                            sumc = sum;
                            sum = sums;
                        }
                        if (term < test)
                            break;
                        odd = !odd;
                        n += 2;
                    }
                    s = sums;
                    c = sumc;
                }
                else
                    c = x;
                return {0.5 - c, 0.5 - s};
            }

            const double pix2 = pi * x * x;
            cdouble b(1.0, -pix2);
            cdouble cc = 1.0 / fpmin;
            cdouble d = 1.0 / b, h = d;
            int n = -1;
            for (int k = 2; k <= max_iter; ++k)
            {
                n += 2;
                const double a = -double(n) * double(n + 1);
                b += 4.0;
                d = 1.0 / (a * d + b);
                cc = b + a / cc;
                const cdouble del = cc * d;
                h *= del;
                if (std::abs(del.real() - 1.0) + std::abs(del.imag()) < eps)
                    break;
            }
            h *= cdouble(x, -x);
            // C + jS = (1+j)/2 * (1 - exp(j pi x^2/2) h)
            return cdouble(0.5, 0.5) * std::polar(1.0, 0.5 * pix2) * h;
        }
    }

    // C(x) + j S(x)
    inline cdouble fresnel_integral(double x)
    {
        const double ax = std::abs(x);
        const cdouble v = cdouble(0.5, 0.5) - detail::fresnel_complement(ax);
        return x < 0 ? -v : v;
    }

    // Kouyoumjian-Pathak transition function F(X) = 2j sqrt(X) e^{jX} int_{sqrt X}^inf e^{-j tau^2} dtau
    inline cdouble utd_transition(double X)
    {
        if (X < 0.0)
            throw domain_error("utd_transition: negative argument");
        if (X == 0.0)
            return 0.0;
        const double u = std::sqrt(X);
        const cdouble g = detail::fresnel_complement(u * std::sqrt(2.0 / pi));
        const cdouble tail = std::sqrt(pi / 2) * std::conj(g); // int_u^inf e^{-j tau^2}
        return cdouble(0.0, 2.0) * u * std::polar(1.0, X) * tail;
    }

    // ---------------------------------------------------------------------------------------------
    // UTD wedge diffraction

    // Geometry of one diffraction event in the edge-fixed frame. Angles phi are measured
    // from face 0 (phi = 0) towards face n (phi = n*pi) around the edge.
    struct WedgeGeometry
    {
        double n = 2.0;          // exterior angle / pi, 1 < n <= 2
        double phi_incident = 0; // phi' of the source
        double phi_diffracted = 0;
        double beta0 = pi / 2;   // angle between incident ray and edge (Keller cone)
        double s_incident = 1;   // source to diffraction point, m
        double s_diffracted = 1; // diffraction point to observer, m
    };

    struct UtdTerms
    {
        cdouble incident;  // terms in (phi - phi'), shared by soft and hard
        cdouble reflected; // terms in (phi + phi'), enter with -1 (soft) / +1 (hard)
    };

    namespace detail
    {
        inline double utd_a(double n, double beta, int sign)
        {
            const double N = std::round((beta + sign * pi) / (2.0 * pi * n));
            const double c = std::cos((2.0 * pi * n * N - beta) / 2.0);
            return 2.0 * c * c;
        }

        // cot((pi + sign*beta)/(2n)) * F(k L a_sign(beta)), with the finite limit on a shadow boundary
        inline cdouble utd_cot_term(double n, double beta, int sign, double kL)
        {
            const double arg = (pi + sign * beta) / (2.0 * n);
            const double sn = std::sin(arg);
            if (std::abs(sn) < 1e-9)
            {
                const double N = std::round((beta + sign * pi) / (2.0 * pi * n));
                const double epsb = pi + sign * beta - 2.0 * pi * n * N * sign;
                const double sgn = epsb >= 0.0 ? 1.0 : -1.0;
                const cdouble ejp4 = std::polar(1.0, pi / 4);
                return n * (std::sqrt(2.0 * pi * kL) * sgn - 2.0 * kL * epsb * std::conj(ejp4)) * ejp4;
            }
            return std::cos(arg) / sn * utd_transition(kL * utd_a(n, beta, sign));
        }
    }

    inline UtdTerms utd_terms(const WedgeGeometry &g, double k)
    {
        if (!(g.n > 1.0 && g.n <= 2.0))
            throw domain_error("utd: wedge exterior angle must satisfy 1 < n <= 2");
        if (!(g.s_incident > 0.0) || !(g.s_diffracted > 0.0))
            throw domain_error("utd: source or observer lies on the edge");
        const double sb = std::sin(g.beta0);
        if (!(sb > 1e-12))
            throw domain_error("utd: ray parallel to the edge");
        const double lim = g.n * pi + 1e-9;
        if (g.phi_incident < -1e-9 || g.phi_incident > lim || g.phi_diffracted < -1e-9 || g.phi_diffracted > lim)
            throw domain_error("utd: observation angle inside the wedge");

        const double L = g.s_incident * g.s_diffracted / (g.s_incident + g.s_diffracted) * sb * sb;
        const double kL = k * L;
        const double bm = g.phi_diffracted - g.phi_incident;
        const double bp = g.phi_diffracted + g.phi_incident;
        const cdouble pre = -std::polar(1.0, -pi / 4) / (2.0 * g.n * std::sqrt(2.0 * pi * k) * sb);

        using detail::utd_cot_term;
        const cdouble inc = utd_cot_term(g.n, bm, +1, kL) + utd_cot_term(g.n, bm, -1, kL);
        const cdouble ref = utd_cot_term(g.n, bp, +1, kL) + utd_cot_term(g.n, bp, -1, kL);
        return {pre * inc, pre * ref};
    }

    // diag(-D_soft, -D_hard): maps the incident (beta0', phi') components onto the diffracted
    // (beta0, phi) components. Units: m^(1/2); spreading is applied by the caller.
    inline Dyadic2x2 utd_coefficient(const WedgeGeometry &g, double k)
    {
        const UtdTerms t = utd_terms(g, k);
        Dyadic2x2 d = Dyadic2x2::Zero();
        d(0, 0) = -(t.incident - t.reflected);
        d(1, 1) = -(t.incident + t.reflected);
        return d;
    }

    // sqrt(s' / (s (s + s'))) for spherical incidence
    inline double utd_spreading(double s_incident, double s_diffracted)
    {
        return std::sqrt(s_incident / (s_diffracted * (s_incident + s_diffracted)));
    }

    // ---------------------------------------------------------------------------------------------
    // Directive single-lobe scattering

    // Lobe shape ((1 + cos psi) / 2)^alpha around the specular direction
    inline double directive_lobe(double psi_r, int alpha)
    {
        return std::pow(0.5 * (1.0 + std::cos(psi_r)), alpha);
    }

    // Integral of the lobe over the outgoing half-space for a specular direction at
    // theta_i from the normal (closed form for integer alpha).
    inline double lobe_normalization(double theta_i, int alpha)
    {
        if (alpha < 1)
            throw domain_error("lobe exponent must be >= 1");
        const double ci = std::cos(theta_i);
        const double si2 = std::sin(theta_i) * std::sin(theta_i);
        double total = 0.0;
        double binom_a = 1.0; // C(alpha, j)
        for (int j = 0; j <= alpha; ++j)
        {
            double Ij = 2.0 * pi / (j + 1);
            if (j % 2 == 1)
            {
                double sum = 0.0, c2w = 1.0, pw = 1.0; // C(2w, w), (sin^2 / 4)^w
                for (int w = 0; w <= (j - 1) / 2; ++w)
                {
                    sum += c2w * pw;
                    c2w = c2w * (2.0 * w + 1.0) * (2.0 * w + 2.0) / ((w + 1.0) * (w + 1.0));
                    pw *= si2 / 4.0;
                }
                Ij *= ci * sum;
            }
            total += binom_a * Ij;
            binom_a = binom_a * (alpha - j) / (j + 1.0);
        }
        return total / std::pow(2.0, alpha);
    }

    struct ScatterGeometry
    {
        double theta_i = 0; // incidence angle from the tile normal, rad
        double theta_s = 0; // scattering angle from the tile normal, rad
        double psi_r = 0;   // angle between scattered and specular directions, rad
        double tile_area = 1; // m^2
        double r_i = 1;       // source to tile, m
        double r_s = 1;       // tile to observer, m
    };

    // Uniform phase in [0, 2 pi) from the raw engine output (portable across standard libraries)
    inline double uniform_phase(std::mt19937_64 &rng)
    {
        return double(rng() >> 11) * 0x1.0p-53 * 2.0 * pi;
    }

    // Magnitude of the directive-model scattered amplitude for unit isotropic transmit power.
    // The per-side normalization cos(theta)/F(theta) is taken as the geometric mean over the
    // incident and scattered sides so that the gain is reciprocal.
    inline double scatter_magnitude(const ScatterGeometry &g, double scatter_s, int alpha, double wavelength)
    {
        if (!(g.r_i > 0.0) || !(g.r_s > 0.0))
            throw domain_error("scatter_gain: distances must be positive");
        if (!(g.tile_area > 0.0))
            throw domain_error("scatter_gain: tile area must be positive");
        if (!(g.theta_i >= 0.0 && g.theta_i <= pi / 2) || !(g.theta_s >= 0.0 && g.theta_s <= pi / 2))
            throw domain_error("scatter_gain: angles must lie in the front half-space");
        const double side_i = std::cos(g.theta_i) / lobe_normalization(g.theta_i, alpha);
        const double side_s = std::cos(g.theta_s) / lobe_normalization(g.theta_s, alpha);
        const double p = scatter_s * scatter_s * g.tile_area * std::sqrt(side_i * side_s) * directive_lobe(g.psi_r, alpha);
        return wavelength / (4.0 * pi) * std::sqrt(p) / (g.r_i * g.r_s);
    }

    // Complex amplitude: magnitude with phase -k (r_i + r_s) plus a uniform random phase
    inline cdouble scatter_gain(const ScatterGeometry &g, double scatter_s, int alpha, double wavelength, std::mt19937_64 &rng)
    {
        const double mag = scatter_magnitude(g, scatter_s, alpha, wavelength);
        const double k = 2.0 * pi / wavelength;
        return std::polar(mag, -k * (g.r_i + g.r_s) + uniform_phase(rng));
    }

    // ---------------------------------------------------------------------------------------------
    // Vegetation and free space

    inline double vegetation_loss(double length_m, double veg_atten_db_per_m)
    {
        if (!(length_m >= 0.0))
            throw domain_error("vegetation_loss: negative path length");
        return veg_atten_db_per_m * length_m;
    }

    inline double wavelength(double f_hz) { return speed_of_light / f_hz; }

    // lambda / (4 pi d) * exp(-j k d)
    inline cdouble free_space_gain(double d, double f_hz)
    {
        if (!(d > 0.0))
            throw domain_error("free_space_gain: distance must be positive");
        if (!(f_hz > 0.0))
            throw domain_error("free_space_gain: frequency must be positive");
        const double lambda = wavelength(f_hz);
        return std::polar(lambda / (4.0 * pi * d), -2.0 * pi / lambda * d);
    }

    inline double free_space_loss_db(double d, double f_hz)
    {
        if (!(d > 0.0) || !(f_hz > 0.0))
            throw domain_error("free_space_loss_db: distance and frequency must be positive");
        return 20.0 * std::log10(4.0 * pi * d / wavelength(f_hz));
    }
}
