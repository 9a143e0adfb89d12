// SPDX-License-Identifier: Apache-2.0
#include "csifb/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace csifb {

Eigen::MatrixXcd rotated_dft(int n, int rot, int oversampling) {
    if (n < 1) throw ConfigError("DFT size must be >= 1");
    if (oversampling < 1) throw ConfigError("oversampling must be >= 1");
    if (rot < 0 || rot >= oversampling)
        throw ConfigError("rotation " + std::to_string(rot) + " out of range [0, " +
                          std::to_string(oversampling) + ")");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Eigen::MatrixXcd f(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            double arg = -2.0 * std::numbers::pi * a *
                         (b + static_cast<double>(rot) / oversampling) / n;
            f(a, b) = scale * std::complex<double>(std::cos(arg), std::sin(arg));
        }
    }
    return f;
}

AngularBasis build_angular_basis(int n_h, int n_v, int rot_h, int rot_v,
                                 int oversampling) {
    Eigen::MatrixXcd fh = rotated_dft(n_h, rot_h, oversampling);
    Eigen::MatrixXcd fv = rotated_dft(n_v, rot_v, oversampling);
    const int np = n_h * n_v;  // antennas per polarization
    Eigen::MatrixXcd d(np, np);
    for (int rv = 0; rv < n_v; ++rv)
        for (int rh = 0; rh < n_h; ++rh)
            for (int cv = 0; cv < n_v; ++cv)
                for (int ch = 0; ch < n_h; ++ch)
                    d(rv * n_h + rh, cv * n_h + ch) = fv(rv, cv) * fh(rh, ch);

    AngularBasis basis;
    basis.w_a = Eigen::MatrixXcd::Zero(2 * np, 2 * np);
    basis.w_a.topLeftCorner(np, np) = d;
    basis.w_a.bottomRightCorner(np, np) = d;
    basis.n_h = n_h;
    basis.n_v = n_v;
    basis.rot_h = rot_h;
    basis.rot_v = rot_v;
    basis.oversampling = oversampling;
    return basis;
}

DelayBasis build_delay_basis(int m) {
    return DelayBasis{rotated_dft(m, 0, 1)};
}

namespace {

void check_shapes(const Eigen::MatrixXcd& h, const AngularBasis& wa,
                  const DelayBasis& wd) {
    if (h.rows() != wa.w_a.rows())
        throw ShapeError("CSI row count " + std::to_string(h.rows()) +
                         " does not match angular basis size " +
                         std::to_string(wa.w_a.rows()));
    if (h.cols() != wd.w_d.rows())
        throw ShapeError("CSI column count " + std::to_string(h.cols()) +
                         " does not match delay basis size " +
                         std::to_string(wd.w_d.rows()));
}

}  // namespace

AngularDelayCsi to_angular_delay(const ChannelMatrix& h, const AngularBasis& wa,
                                 const DelayBasis& wd) {
    check_shapes(h, wa, wd);
    return wa.w_a.adjoint() * h * wd.w_d;
}

ChannelMatrix from_angular_delay(const AngularDelayCsi& ht, const AngularBasis& wa,
                                 const DelayBasis& wd) {
    check_shapes(ht, wa, wd);
    return wa.w_a * ht * wd.w_d.adjoint();
}

double top_port_power_fraction(const AngularDelayCsi& ht, int p) {
    const int n_ports = static_cast<int>(ht.size());
    if (p < 1 || p > n_ports) throw ConfigError("port count out of range");
    std::vector<double> powers(n_ports);
    for (int i = 0; i < n_ports; ++i)
        powers[i] = std::norm(ht(i / ht.cols(), i % ht.cols()));
    double total = 0.0;
    for (double v : powers) total += v;
    if (total <= 0.0) throw ShapeError("zero-norm CSI");
    std::nth_element(powers.begin(), powers.begin() + p - 1, powers.end(),
                     std::greater<double>());
    double top = 0.0;
    for (int i = 0; i < p; ++i) top += powers[i];
    return top / total;
}

double port_power_fraction(const AngularDelayCsi& ht, const std::vector<int>& ports) {
    const int n_ports = static_cast<int>(ht.size());
    const double total = ht.squaredNorm();
    if (total <= 0.0) throw ShapeError("zero-norm CSI");
    std::vector<bool> seen(static_cast<size_t>(n_ports), false);
    double top = 0.0;
    for (int port : ports) {
        if (port < 0 || port >= n_ports) throw ConfigError("port index out of range");
        if (seen[static_cast<size_t>(port)]) throw ConfigError("duplicate port index");
        seen[static_cast<size_t>(port)] = true;
        top += std::norm(ht(port / ht.cols(), port % ht.cols()));
    }
    return top / total;
}

Rotation best_rotation(const ChannelMatrix& h_ul, const SystemConfig& config, int p,
                       int oversampling) {
    DelayBasis wd = build_delay_basis(config.m);
    Rotation best;
    double best_frac = -1.0;
    for (int rv = 0; rv < oversampling; ++rv) {
        for (int rh = 0; rh < oversampling; ++rh) {
            AngularBasis wa = build_angular_basis(config.n_h, config.n_v, rh, rv,
                                                  oversampling);
            double frac = top_port_power_fraction(to_angular_delay(h_ul, wa, wd), p);
            if (frac > best_frac) {
                best_frac = frac;
                best = Rotation{rh, rv};
            }
        }
    }
    return best;
}

}  // namespace csifb
