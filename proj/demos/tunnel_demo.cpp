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

// Walks a receiver through the double-track tunnel and prints how the channel evolves.

#include <railchan/railchan.hpp>

#include <cstdio>

using namespace railchan;

int main()
{
    scene::ScenarioSpec spec; // M5: 500 m rectangular concrete tunnel
    const auto tunnel = scene::build_module(spec);
    const auto lay = scene::layout(spec);

    tracer::TraceConfig cfg;
    cfg.max_reflection_order = 4;
    cfg.enable_scattering = false;
    cfg.center_frequency = 30e9;

    const Vec3 tx = lay.tx_anchor + Vec3(0, 0, 6.0);
    channel::TrajectorySpec traj;
    traj.start = Vec3(lay.tx_anchor.x() + 20.0, lay.rx_track_y, 4.5);
    traj.sample_interval = 2.0;
    traj.n_samples = 231;

    const channel::BandSpec band{30e9, 2e9, 401};
    std::vector<std::pair<double, double>> pl;
    std::printf("%8s %6s %9s %8s %9s %7s %7s\n", "dist_m", "paths", "PL_dB", "K_dB", "DS_ns", "ASA", "ESA");
    channel::sweep(tunnel, tx, traj, cfg, {}, [&](channel::ChannelSnapshot &&s) {
        const double d = (s.rx_position - tx).norm();
        const auto st = stats::link_stats(s.paths, channel::assemble_ctf(s, band));
        pl.emplace_back(d, st.path_loss_db);
        if (s.index % 20 == 0)
            std::printf("%8.1f %6zu %9.2f %8.2f %9.3f %7.2f %7.2f\n", d, s.paths.size(), st.path_loss_db, st.k_factor_db,
                        st.rms_delay_spread_s * 1e9, st.asa_deg, st.esa_deg);
    });

    const auto fit = stats::fit_path_loss(pl);
    std::printf("\npath loss fit: PL = %.2f + 10 * %.3f * log10(d), shadow factor %.2f dB\n", fit.pl0_db, fit.n, fit.sigma_sf_db);
    return 0;
}
