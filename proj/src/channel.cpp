// SPDX-License-Identifier: Apache-2.0
#include "csifb/channel.hpp"

#include <cmath>
#include <numbers>

#include "csifb/rng.hpp"

namespace csifb {

namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kDelayScale = 100e-9;  // PDP decay reference, 3 dB per 100 ns

std::complex<double> unit_phase(Rng& rng) {
    double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {std::cos(phi), std::sin(phi)};
}

}  // namespace

PathSet draw_paths(const SystemConfig& config, int n_clusters, int rays_per_cluster,
                   std::uint64_t rng_seed) {
    if (n_clusters < 1) throw ConfigError("n_clusters must be >= 1");
    if (rays_per_cluster < 1) throw ConfigError("rays_per_cluster must be >= 1");

    Rng rng(rng_seed);
    const double delay_limit = 1.0 / config.subband_bandwidth_hz();
    const double spread = 5.0 * std::numbers::pi / 180.0;
    const double ray_amp_norm = 1.0 / std::sqrt(static_cast<double>(rays_per_cluster));

    PathSet set;
    set.paths.reserve(static_cast<size_t>(n_clusters) * rays_per_cluster);
    for (int c = 0; c < n_clusters; ++c) {
        double az = rng.uniform(-std::numbers::pi / 3.0, std::numbers::pi / 3.0);
        double zen = rng.uniform(std::numbers::pi / 2.0 - std::numbers::pi / 12.0,
                                 std::numbers::pi / 2.0 + std::numbers::pi / 12.0);
        double delay = rng.exponential(kDelayScale);
        if (delay >= delay_limit) delay = delay_limit * (1.0 - 1e-9);
        // 3 dB per 100 ns: power halves every kDelayScale seconds
        double amp = ray_amp_norm * std::sqrt(std::exp2(-delay / kDelayScale));
        for (int r = 0; r < rays_per_cluster; ++r) {
            Path p;
            p.azimuth = az + rng.laplace(spread);
            p.zenith = zen + rng.laplace(spread);
            p.delay_s = delay;
            for (int pol = 0; pol < 2; ++pol) {
                p.gain_ul[pol] = amp * unit_phase(rng);
                p.gain_dl[pol] = amp * unit_phase(rng);
            }
            set.paths.push_back(p);
        }
    }
    return set;
}

ChannelMatrix synthesize(const PathSet& paths, const SystemConfig& config, Link link) {
    const double f_link = link == Link::UL ? config.f_c_ul : config.f_c_dl;
    // Physical spacing is set once, at half the downlink wavelength.
    const double spacing = kSpeedOfLight / (2.0 * config.f_c_dl);
    const double k_link = 2.0 * std::numbers::pi * spacing * f_link / kSpeedOfLight;
    const int np = config.antennas_per_pol();

    ChannelMatrix h = ChannelMatrix::Zero(config.n_tx, config.m);
    Eigen::VectorXcd steer(np);
    for (const Path& path : paths.paths) {
        double omega_h = std::sin(path.zenith) * std::sin(path.azimuth);
        double omega_v = std::cos(path.zenith);
        for (int v = 0; v < config.n_v; ++v) {
            for (int hh = 0; hh < config.n_h; ++hh) {
                double arg = k_link * (hh * omega_h + v * omega_v);
                steer(v * config.n_h + hh) =
                    std::complex<double>(std::cos(arg), std::sin(arg));
            }
        }
        for (int j = 0; j < config.m; ++j) {
            double f_j = (j - (config.m - 1) / 2.0) * config.subband_bandwidth_hz();
            double darg = -2.0 * std::numbers::pi * f_j * path.delay_s;
            std::complex<double> delay_phase(std::cos(darg), std::sin(darg));
            for (int pol = 0; pol < 2; ++pol) {
                std::complex<double> g =
                    paths.pathloss * delay_phase *
                    (link == Link::UL ? path.gain_ul[pol] : path.gain_dl[pol]);
                h.col(j).segment(pol * np, np) += g * steer;
            }
        }
    }
    return h;
}

ChannelMatrix add_noise(const ChannelMatrix& h, double snr_db, std::uint64_t rng_seed) {
    if (std::isinf(snr_db) && snr_db > 0) return h;
    double power = h.squaredNorm() / static_cast<double>(h.size());
    if (power <= 0.0) throw ShapeError("cannot add noise to zero-norm CSI");
    double sigma2 = power * std::pow(10.0, -snr_db / 10.0);
    double s = std::sqrt(sigma2 / 2.0);

    Rng rng(rng_seed);
    ChannelMatrix out = h;
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) {
            double re = s * rng.normal();
            double im = s * rng.normal();
            out(r, c) += std::complex<double>(re, im);
        }
    }
    return out;
}

std::vector<ChannelSample> generate_dataset(const SystemConfig& config, int count,
                                            double snr_db, std::uint64_t master_seed,
                                            int n_clusters, int rays_per_cluster) {
    if (count < 1) throw ConfigError("sample count must be >= 1");
    std::vector<ChannelSample> samples;
    samples.reserve(count);
    for (int i = 0; i < count; ++i) {
        std::uint64_t seed = Rng::split(master_seed, static_cast<std::uint64_t>(i));
        PathSet paths = draw_paths(config, n_clusters, rays_per_cluster,
                                   Rng::split(seed, 0));
        ChannelSample s;
        s.h_ul_clean = synthesize(paths, config, Link::UL);
        s.h_dl_clean = synthesize(paths, config, Link::DL);
        s.h_ul_noisy = add_noise(s.h_ul_clean, snr_db, Rng::split(seed, 1));
        s.snr_db = static_cast<float>(snr_db);
        s.seed = seed;
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace csifb
