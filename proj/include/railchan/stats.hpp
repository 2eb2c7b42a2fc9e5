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

// Channel metrics: delay spread, coherence bandwidth, K-factor, angular spreads, path-loss
// fitting, large/small-scale fading separation, Ricean fitting and SNR trace comparison.

#include "channel.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "tracer.hpp"

#include <boost/math/distributions/non_central_chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

namespace railchan::stats
{
    using channel::PowerDelayProfile;
    using tracer::PropagationPath;

    inline constexpr double inf = std::numeric_limits<double>::infinity();

    inline double to_db(double linear) { return 10.0 * std::log10(linear); }
    inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

    // ---------------------------------------------------------------------------------------------
    // Delay domain

    inline double rms_delay_spread(const PowerDelayProfile &p)
    {
        if (p.powers.empty() || p.powers.size() != p.delays.size())
            throw domain_error("rms_delay_spread: empty power delay profile");
        // delays taken relative to the first tap, then the second central moment
        const double t0 = p.delays.front();
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t i = 0; i < p.powers.size(); ++i)
        {
            s0 += p.powers[i];
            s1 += p.powers[i] * (p.delays[i] - t0);
        }
        if (!(s0 > 0.0))
            throw domain_error("rms_delay_spread: zero total power");
        const double mean = s1 / s0;
        double s2 = 0.0;
        for (std::size_t i = 0; i < p.powers.size(); ++i)
            s2 += p.powers[i] * (p.delays[i] - t0 - mean) * (p.delays[i] - t0 - mean);
        return std::sqrt(s2 / s0);
    }

    // Smallest frequency lag at which |R(df)| / R(0) of the frequency autocorrelation drops
    // below `level`, linearly interpolated between grid lags. Returns the full band if it never does.
    inline double coherence_bandwidth(const Eigen::VectorXcd &H, double spacing, double level = 0.5)
    {
        const Eigen::Index n = H.size();
        if (n < 2)
            throw domain_error("coherence_bandwidth: need at least 2 frequency points");
        if (!(level > 0.0 && level < 1.0))
            throw domain_error("coherence_bandwidth: level must lie in (0, 1)");
        auto corr = [&](Eigen::Index m) {
            cdouble s = 0.0;
            for (Eigen::Index i = 0; i + m < n; ++i)
                s += H[i + m] * std::conj(H[i]);
            return std::abs(s) / double(n - m);
        };
        const double r0 = corr(0);
        if (!(r0 > 0.0))
            return double(n - 1) * spacing;
        double prev = 1.0;
        for (Eigen::Index m = 1; m < n; ++m)
        {
            const double r = corr(m) / r0;
            if (r < level)
            {
                const double frac = (prev - level) / (prev - r);
                return (double(m - 1) + frac) * spacing;
            }
            prev = r;
        }
        return double(n - 1) * spacing;
    }

    // ---------------------------------------------------------------------------------------------
    // K-factor

    struct KFactor
    {
        double k_linear = 0;
        double k_db = -inf;
        bool degenerate = false; // LOS-only (rays) or zero-variance envelope (moments)
    };

    inline constexpr double k_cap_db = 30.0;

    // LOS power over the sum of all other path powers
    inline KFactor k_factor_rays(const std::vector<PropagationPath> &paths, int pol = 0)
    {
        if (paths.empty())
            throw domain_error("k_factor_rays: empty path list");
        double los = 0.0, rest = 0.0;
        bool has_los = false;
        for (const auto &p : paths)
        {
            const double pw = std::norm(channel::pol_entry(p.gain, pol));
            if (p.is_los())
            {
                los += pw;
                has_los = true;
            }
            else
                rest += pw;
        }
        KFactor k;
        if (!has_los || los == 0.0)
            return k;
        if (rest == 0.0)
        {
            k.k_linear = inf;
            k.k_db = inf;
            k.degenerate = true;
            return k;
        }
        k.k_linear = los / rest;
        k.k_db = to_db(k.k_linear);
        return k;
    }

    inline constexpr std::size_t min_moment_samples = 100;

    // Second/fourth-moment estimator on envelope samples, saturating at +30 dB
    inline KFactor k_factor_moment(const std::vector<double> &envelope)
    {
        if (envelope.size() < min_moment_samples)
            throw estimation_error("k_factor_moment: at least 100 envelope samples required");
        double m2 = 0.0, m4 = 0.0;
        for (double r : envelope)
        {
            const double r2 = r * r;
            m2 += r2;
            m4 += r2 * r2;
        }
        m2 /= double(envelope.size());
        m4 /= double(envelope.size());
        KFactor k;
        if (!(m2 > 0.0))
            throw domain_error("k_factor_moment: zero envelope power");
        const double d = 2.0 * m2 * m2 - m4;
        if (d <= 0.0)
            return k; // Rayleigh or heavier-tailed: K = 0
        const double root = std::sqrt(d);
        const double den = m2 - root;
        const double cap = from_db(k_cap_db);
        if (den <= root / cap)
        {
            k.k_linear = cap;
            k.k_db = k_cap_db;
            k.degenerate = true;
            return k;
        }
        k.k_linear = root / den;
        k.k_db = to_db(k.k_linear);
        return k;
    }

    struct RiceanFit
    {
        double k_linear = 0;
        double omega = 0;      // mean power E[r^2]
        double ks_distance = 0; // Kolmogorov-Smirnov distance to the fitted Rice CDF
        bool degenerate = false;

        double k_db() const { return to_db(k_linear); }
    };

    // Rice CDF with K-factor k and mean power omega
    inline double rice_cdf(double r, double k, double omega)
    {
        if (r <= 0.0)
            return 0.0;
        const double sigma2 = omega / (2.0 * (k + 1.0));
        const double x = r * r / sigma2;
        if (k <= 0.0)
            return -std::expm1(-x / 2.0);
        boost::math::non_central_chi_squared_distribution<double> d(2.0, 2.0 * k);
        return boost::math::cdf(d, x);
    }

    inline constexpr std::size_t min_ricean_samples = 1000;

    inline RiceanFit fit_ricean(const std::vector<double> &envelope)
    {
        if (envelope.size() < min_ricean_samples)
            throw estimation_error("fit_ricean: at least 1000 envelope samples required");
        for (double r : envelope)
            if (!(r > 0.0))
                throw domain_error("fit_ricean: envelope samples must be positive");
        const KFactor k = k_factor_moment(envelope);
        RiceanFit f;
        f.k_linear = k.k_linear;
        f.degenerate = k.degenerate;
        double m2 = 0.0;
        for (double r : envelope)
            m2 += r * r;
        f.omega = m2 / double(envelope.size());
        std::vector<double> sorted = envelope;
        std::sort(sorted.begin(), sorted.end());
        const double n = double(sorted.size());
        double ks = 0.0;
        for (std::size_t i = 0; i < sorted.size(); ++i)
        {
            const double F = rice_cdf(sorted[i], f.k_linear, f.omega);
            ks = std::max({ks, F - double(i) / n, double(i + 1) / n - F});
        }
        f.ks_distance = ks;
        return f;
    }

    // ---------------------------------------------------------------------------------------------
    // Angular spreads

    enum class Spread
    {
        asa,
        asd,
        esa,
        esd,
    };

    inline double wrap_deg(double a)
    {
        a = std::fmod(a + 180.0, 360.0);
        if (a <= 0.0)
            a += 360.0;
        return a - 180.0; // (-180, 180]
    }

    // Shift minimizing the power-weighted second moment of the wrapped deviations. The moment is a
    // continuous piecewise quadratic in the shift with one breakpoint per angle, so the minimum lies
    // at the clamped vertex of one of the n + 1 pieces.
    inline double best_azimuth_shift(const std::vector<double> &angles_deg, const std::vector<double> &powers)
    {
        const std::size_t n = angles_deg.size();
        std::vector<std::pair<double, double>> pts(n); // (representative in (-180, 180], power)
        double w = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            pts[i] = {wrap_deg(angles_deg[i]), powers[i]};
            w += powers[i];
            s1 += powers[i] * pts[i].first;
            s2 += powers[i] * pts[i].first * pts[i].first;
        }
        // point i moves to x + 360 once the shift passes x + 180
        std::sort(pts.begin(), pts.end());
        double best = 0.0, best_f = std::numeric_limits<double>::infinity();
        double lo = 0.0;
        for (std::size_t k = 0; k <= n; ++k)
        {
            const double hi = k < n ? pts[k].first + 180.0 : 360.0;
            const double d = std::clamp(s1 / w, lo, hi);
            const double f = s2 - 2.0 * d * s1 + d * d * w;
            if (f < best_f)
            {
                best_f = f;
                best = d;
            }
            if (k < n)
            {
                const auto [x, p] = pts[k];
                s1 += 360.0 * p;
                s2 += p * ((x + 360.0) * (x + 360.0) - x * x);
                lo = hi;
            }
        }
        return best;
    }

    // Power-weighted spread in degrees. Azimuth: deviations wrapped to (-180, 180] around the centre
    // that minimizes the spread; for concentrated sets this is the circular mean, and the result never
    // exceeds 180/sqrt(3) = 103.9 deg. Elevation: deviations from the weighted mean clamped to +-90.
    inline double angular_spread(const std::vector<double> &angles_deg, const std::vector<double> &powers, bool azimuth)
    {
        if (angles_deg.empty() || angles_deg.size() != powers.size())
            throw domain_error("angular_spread: empty path set");
        double sp = 0.0;
        for (double p : powers)
            sp += p;
        if (!(sp > 0.0))
            return 0.0;
        const std::size_t n = angles_deg.size();
        std::vector<double> dev(n);
        if (azimuth)
        {
            const double centre = best_azimuth_shift(angles_deg, powers);
            for (std::size_t i = 0; i < n; ++i)
                dev[i] = wrap_deg(angles_deg[i] - centre);
        }
        else
        {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                mean += powers[i] * angles_deg[i];
            mean /= sp;
            for (std::size_t i = 0; i < n; ++i)
                dev[i] = std::clamp(angles_deg[i] - mean, -90.0, 90.0);
        }
        // central moment of the deviations removes residual rounding in the centre
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            m += powers[i] * dev[i];
        m /= sp;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            acc += powers[i] * (dev[i] - m) * (dev[i] - m);
        return std::sqrt(acc / sp);
    }

    inline double angular_spread(const std::vector<PropagationPath> &paths, Spread which, int pol = 0)
    {
        if (paths.empty())
            throw domain_error("angular_spread: empty path set");
        std::vector<double> a, p;
        a.reserve(paths.size());
        p.reserve(paths.size());
        for (const auto &x : paths)
        {
            switch (which)
            {
            case Spread::asa: a.push_back(x.aoa.azimuth_deg); break;
            case Spread::asd: a.push_back(x.aod.azimuth_deg); break;
            case Spread::esa: a.push_back(x.aoa.elevation_deg); break;
            case Spread::esd: a.push_back(x.aod.elevation_deg); break;
            }
            p.push_back(std::norm(channel::pol_entry(x.gain, pol)));
        }
        return angular_spread(a, p, which == Spread::asa || which == Spread::asd);
    }

    // ---------------------------------------------------------------------------------------------
    // Per-snapshot link statistics

    struct LinkStats
    {
        double path_loss_db = inf; // -10 log10 of the incoherent path power sum
        double k_factor_db = -inf;
        double rms_delay_spread_s = 0;
        double coherence_bw_hz = 0;
        double asa_deg = 0, asd_deg = 0, esa_deg = 0, esd_deg = 0;
    };

    inline double incoherent_path_loss_db(const std::vector<PropagationPath> &paths, int pol = 0)
    {
        double p = 0.0;
        for (const auto &x : paths)
            p += std::norm(channel::pol_entry(x.gain, pol));
        return p > 0.0 ? -to_db(p) : inf;
    }

    inline LinkStats link_stats(const std::vector<PropagationPath> &paths, const channel::CTF &ctf, double cb_level = 0.5, int pol = 0)
    {
        LinkStats s;
        if (paths.empty())
            return s;
        s.path_loss_db = incoherent_path_loss_db(paths, pol);
        s.k_factor_db = k_factor_rays(paths, pol).k_db;
        const auto pdp = channel::pdp_from_paths(paths, pol);
        if (std::accumulate(pdp.powers.begin(), pdp.powers.end(), 0.0) > 0.0)
            s.rms_delay_spread_s = rms_delay_spread(pdp);
        s.coherence_bw_hz = coherence_bandwidth(ctf.H.col(pol), ctf.band.spacing(), cb_level);
        s.asa_deg = angular_spread(paths, Spread::asa, pol);
        s.asd_deg = angular_spread(paths, Spread::asd, pol);
        s.esa_deg = angular_spread(paths, Spread::esa, pol);
        s.esd_deg = angular_spread(paths, Spread::esd, pol);
        return s;
    }

    // ---------------------------------------------------------------------------------------------
    // Path-loss fit

    struct PathLossFit
    {
        double pl0_db = 0;      // intercept at d0 = 1 m
        double n = 2;           // exponent
        double sigma_sf_db = 0; // shadow factor: RMS of the fit residuals
    };

    // Least squares of PL = pl0 + 10 n log10(d)
    inline PathLossFit fit_path_loss(const std::vector<std::pair<double, double>> &samples, std::vector<double> *residuals = nullptr)
    {
        if (samples.size() < 2)
            throw fit_error("fit_path_loss: at least two samples required");
        double sx = 0, sy = 0;
        for (const auto &[d, pl] : samples)
        {
            if (!(d > 0.0))
                throw fit_error("fit_path_loss: distances must be positive");
            if (!std::isfinite(pl))
                throw fit_error("fit_path_loss: non-finite path loss sample");
            sx += std::log10(d);
            sy += pl;
        }
        const double N = double(samples.size());
        const double mx = sx / N, my = sy / N;
        double sxx = 0, sxy = 0;
        for (const auto &[d, pl] : samples)
        {
            const double x = std::log10(d) - mx;
            sxx += x * x;
            sxy += x * (pl - my);
        }
        if (!(sxx > 1e-24 * N))
            throw fit_error("fit_path_loss: distances are degenerate");
        PathLossFit f;
        const double slope = sxy / sxx;
        f.n = slope / 10.0;
        f.pl0_db = my - slope * mx;
        double ss = 0.0;
        if (residuals)
            residuals->clear();
        for (const auto &[d, pl] : samples)
        {
            const double r = pl - (f.pl0_db + slope * std::log10(d));
            ss += r * r;
            if (residuals)
                residuals->push_back(r);
        }
        f.sigma_sf_db = std::sqrt(ss / N);
        return f;
    }

    // Distance at which the autocorrelation of a uniformly sampled residual trace first drops
    // below 1/e (linear interpolation between lags); the trace span if it never does.
    inline double decorrelation_distance(const std::vector<double> &residuals, double spacing)
    {
        const std::size_t n = residuals.size();
        if (n < 3 || !(spacing > 0.0))
            throw fit_error("decorrelation_distance: need at least 3 samples and positive spacing");
        const double mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) / double(n);
        auto acf = [&](std::size_t m) {
            double s = 0.0;
            for (std::size_t i = 0; i + m < n; ++i)
                s += (residuals[i] - mean) * (residuals[i + m] - mean);
            return s / double(n - m);
        };
        const double r0 = acf(0);
        if (!(r0 > 0.0))
            return double(n - 1) * spacing;
        const double level = std::exp(-1.0);
        double prev = 1.0;
        for (std::size_t m = 1; m < n / 2; ++m)
        {
            const double r = acf(m) / r0;
            if (r < level)
                return (double(m - 1) + (prev - level) / (prev - r)) * spacing;
            prev = r;
        }
        return double(n - 1) * spacing;
    }

    // ---------------------------------------------------------------------------------------------
    // Fading separation

    struct FadingDecomposition
    {
        std::vector<double> centers_m;          // window centres, every 10 lambda
        std::vector<double> large_scale_db;     // windowed mean power at the centres
        std::vector<double> large_scale_envelope; // interpolated large-scale envelope per sample
        std::vector<double> small_scale;        // instantaneous envelope / large-scale envelope
    };

    inline constexpr double fading_window_wavelengths = 20.0;
    inline constexpr double fading_step_wavelengths = 10.0;

    inline FadingDecomposition separate_fading(const std::vector<cdouble> &gain, const std::vector<double> &positions, double wavelength)
    {
        const std::size_t n = gain.size();
        if (n == 0 || positions.size() != n)
            throw domain_error("separate_fading: gain and position traces must have equal, non-zero length");
        if (!(wavelength > 0.0))
            throw domain_error("separate_fading: wavelength must be positive");
        for (std::size_t i = 1; i < n; ++i)
            if (!(positions[i] > positions[i - 1]))
                throw domain_error("separate_fading: positions must be strictly increasing");
        const double span = positions.back() - positions.front();
        const double win = fading_window_wavelengths * wavelength;
        const double step = fading_step_wavelengths * wavelength;
        if (span < win * (1.0 - 1e-12))
            throw domain_error("separate_fading: trace shorter than the 20-wavelength window");

        FadingDecomposition f;
        std::vector<double> power(n);
        for (std::size_t i = 0; i < n; ++i)
            power[i] = std::norm(gain[i]);

        std::vector<double> center_power;
        std::size_t lo = 0, hi = 0;
        for (int j = 0;; ++j)
        {
            const double c = positions.front() + j * step;
            if (c > positions.back() + 1e-12 * span)
                break;
            // samples in [c - win/2, c + win/2], truncated at the trace ends
            while (hi < n && positions[hi] <= c + win / 2)
                ++hi;
            while (lo < hi && positions[lo] < c - win / 2)
                ++lo;
            double sum = 0.0;
            for (std::size_t i = lo; i < hi; ++i)
                sum += power[i];
            const double mean = hi > lo ? sum / double(hi - lo) : 0.0;
            f.centers_m.push_back(c);
            center_power.push_back(mean);
            f.large_scale_db.push_back(to_db(mean));
        }

        f.large_scale_envelope.resize(n);
        f.small_scale.resize(n);
        std::size_t j = 0;
        for (std::size_t i = 0; i < n; ++i)
        {
            const double x = positions[i];
            while (j + 1 < f.centers_m.size() && f.centers_m[j + 1] <= x)
                ++j;
            double pw;
            if (j + 1 >= f.centers_m.size() || x <= f.centers_m[j])
                pw = center_power[j];
            else
            {
                const double t = (x - f.centers_m[j]) / (f.centers_m[j + 1] - f.centers_m[j]);
                pw = center_power[j] + t * (center_power[j + 1] - center_power[j]);
            }
            const double env = std::sqrt(pw);
            f.large_scale_envelope[i] = env;
            f.small_scale[i] = env > 0.0 ? std::abs(gain[i]) / env : 0.0;
        }
        return f;
    }

    // ---------------------------------------------------------------------------------------------
    // SNR and trace comparison

    inline double snr_db(double path_loss_db, double tx_power_dbm, double noise_floor_dbm)
    {
        return tx_power_dbm - path_loss_db - noise_floor_dbm;
    }

    struct TraceComparison
    {
        double mean_error_db = 0;
        double std_error_db = 0;
        std::size_t n_points = 0;
    };

    // Measured trace linearly interpolated onto the model positions inside the overlap;
    // error = measured - model.
    inline TraceComparison compare_traces(const std::vector<std::pair<double, double>> &model,
                                          const std::vector<std::pair<double, double>> &measured)
    {
        if (model.empty() || measured.empty())
            throw domain_error("compare_traces: empty trace");
        auto meas = measured;
        std::sort(meas.begin(), meas.end());
        const double lo = meas.front().first, hi = meas.back().first;
        std::vector<double> err;
        for (const auto &[x, v] : model)
        {
            if (x < lo || x > hi)
                continue;
            auto it = std::lower_bound(meas.begin(), meas.end(), std::make_pair(x, -inf));
            double m;
            if (it->first == x || it == meas.begin())
                m = it->second;
            else
            {
                const auto &b = *it, &a = *(it - 1);
                m = a.second + (x - a.first) / (b.first - a.first) * (b.second - a.second);
            }
            err.push_back(m - v);
        }
        if (err.empty())
            throw domain_error("compare_traces: model and measured positions do not overlap");
        TraceComparison c;
        c.n_points = err.size();
        double s = 0.0;
        for (double e : err)
            s += e;
        c.mean_error_db = s / double(err.size());
        double ss = 0.0;
        for (double e : err)
            ss += (e - c.mean_error_db) * (e - c.mean_error_db);
        c.std_error_db = std::sqrt(ss / double(err.size()));
        return c;
    }
}
