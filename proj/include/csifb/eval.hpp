// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "csifb/codebook.hpp"
#include "csifb/config.hpp"
#include "csifb/rng.hpp"
#include "csifb/transforms.hpp"

namespace csifb {

// Link-budget inputs for the multi-user sum-rate metric.
struct SumRateConfig {
    double p_tx_dbm = 35.0;
    double noise_figure_db = 5.0;
    double thermal_dbm_hz = -174.0;
    double bandwidth_hz = 720e3;  // one subband
    int k_ues = 5;
    double pathloss_exponent = 3.5;
    double ref_loss_db = 43.3;  // at 1 m
    double cell_radius_m = 250.0;
    double min_distance_m = 10.0;
};

SumRateConfig make_sum_rate_config(const SystemConfig& config);

// Fraction of CSI power captured by the selected ports.
double normalized_power(const AngularDelayCsi& ht_dl, const PortSelection& sel);

// W = H^H (H H^H)^-1 with unit-norm columns; h_hat rows are per-UE channel
// conjugate transposes. Throws RankError when rows are near-dependent.
Eigen::MatrixXcd zf_precoder(const Eigen::MatrixXcd& h_hat_subband);

// Linear amplitude gain for a UE at distance d under the log-distance model.
double pathloss_amplitude(double distance_m, const SumRateConfig& cfg);

// Distances for one drop: uniform over the disk, clamped to the minimum.
std::vector<double> draw_ue_distances(const SumRateConfig& cfg, Rng& rng);

// One drop: per subband, ZF from reconstructed CSI evaluated against true
// CSI; returns the subband-mean of the summed per-UE rates. ue_gain holds
// the linear pathloss amplitude per UE. Throws RankError for degenerate
// reconstructions (callers count and skip such drops).
double sum_rate(const std::vector<ChannelMatrix>& h_true,
                const std::vector<ChannelMatrix>& h_recon,
                const std::vector<double>& ue_gain, const SumRateConfig& cfg);

}  // namespace csifb
