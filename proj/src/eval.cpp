// SPDX-License-Identifier: Apache-2.0
#include "csifb/eval.hpp"

#include <cmath>
#include <numbers>

namespace csifb {

namespace {

constexpr double kSpeedOfLight = 299792458.0;

}  // namespace

SumRateConfig make_sum_rate_config(const SystemConfig& config) {
    SumRateConfig cfg;
    cfg.p_tx_dbm = config.p_tx_dbm;
    cfg.noise_figure_db = config.noise_figure_db;
    cfg.bandwidth_hz = config.subband_bandwidth_hz();
    cfg.k_ues = config.k_ues;
    cfg.cell_radius_m = config.cell_radius_m;
    // free-space loss at 1 m for the downlink carrier
    cfg.ref_loss_db =
        20.0 * std::log10(4.0 * std::numbers::pi * config.f_c_dl / kSpeedOfLight);
    return cfg;
}

double normalized_power(const AngularDelayCsi& ht_dl, const PortSelection& sel) {
    double total = ht_dl.squaredNorm();
    if (total <= 0.0) throw ShapeError("zero-norm CSI");
    const int m = static_cast<int>(ht_dl.cols());
    double selected = 0.0;
    for (int port : sel.ports)
        selected += std::norm(ht_dl(port_angular(port, m), port_delay(port, m)));
    return selected / total;
}

Eigen::MatrixXcd zf_precoder(const Eigen::MatrixXcd& h_hat_subband) {
    const Eigen::Index k = h_hat_subband.rows();
    if (k < 1 || h_hat_subband.cols() < k)
        throw ShapeError("ZF needs k_ues <= n_tx rows of channel estimates");
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h_hat_subband);
    double smin = svd.singularValues()(k - 1);
    double smax = svd.singularValues()(0);
    if (!(smin > 0.0) || smax / smin >= 1e8)
        throw RankError("channel estimate is rank-deficient");

    Eigen::MatrixXcd gram = h_hat_subband * h_hat_subband.adjoint();
    Eigen::MatrixXcd w = h_hat_subband.adjoint() * gram.inverse();
    for (Eigen::Index c = 0; c < w.cols(); ++c) w.col(c).normalize();
    return w;
}

double pathloss_amplitude(double distance_m, const SumRateConfig& cfg) {
    double loss_db =
        cfg.ref_loss_db + 10.0 * cfg.pathloss_exponent * std::log10(distance_m);
    return std::pow(10.0, -loss_db / 20.0);
}

std::vector<double> draw_ue_distances(const SumRateConfig& cfg, Rng& rng) {
    std::vector<double> d(cfg.k_ues);
    for (double& v : d) {
        v = cfg.cell_radius_m * std::sqrt(rng.uniform());
        if (v < cfg.min_distance_m) v = cfg.min_distance_m;
    }
    return d;
}

double sum_rate(const std::vector<ChannelMatrix>& h_true,
                const std::vector<ChannelMatrix>& h_recon,
                const std::vector<double>& ue_gain, const SumRateConfig& cfg) {
    const size_t k = static_cast<size_t>(cfg.k_ues);
    if (h_true.size() != k || h_recon.size() != k || ue_gain.size() != k)
        throw ShapeError("expected one channel and gain per UE");
    const Eigen::Index n_tx = h_true[0].rows();
    const Eigen::Index m = h_true[0].cols();
    for (size_t i = 0; i < k; ++i)
        if (h_true[i].rows() != n_tx || h_true[i].cols() != m ||
            h_recon[i].rows() != n_tx || h_recon[i].cols() != m)
            throw ShapeError("inconsistent per-UE channel shapes");

    double p_tx_lin = std::pow(10.0, cfg.p_tx_dbm / 10.0);  // mW
    double p = p_tx_lin / static_cast<double>(k);
    double sigma2 = std::pow(10.0, cfg.thermal_dbm_hz / 10.0) * cfg.bandwidth_hz *
                    std::pow(10.0, cfg.noise_figure_db / 10.0);

    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::MatrixXcd h_hat(k, n_tx);
        for (size_t u = 0; u < k; ++u)
            h_hat.row(u) = ue_gain[u] * h_recon[u].col(j).adjoint();
        Eigen::MatrixXcd w = zf_precoder(h_hat);
        double subband = 0.0;
        for (size_t u = 0; u < k; ++u) {
            Eigen::VectorXcd h = ue_gain[u] * h_true[u].col(j);
            double sig = p * std::norm(h.dot(w.col(u)));
            double interf = 0.0;
            for (size_t v = 0; v < k; ++v)
                if (v != u) interf += p * std::norm(h.dot(w.col(v)));
            subband += std::log2(1.0 + sig / (interf + sigma2));
        }
        total += subband;
    }
    return total / static_cast<double>(m);
}

}  // namespace csifb
