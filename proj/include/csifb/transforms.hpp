// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "csifb/config.hpp"

namespace csifb {

// Antenna-frequency CSI, n_tx rows (polarization-major, then vertical, then
// horizontal) by m subband columns.
using ChannelMatrix = Eigen::MatrixXcd;

// Block-diagonal angular DFT basis, W_A = diag(D, D), D = kron(F_v, F_h).
struct AngularBasis {
    Eigen::MatrixXcd w_a;  // n_tx x n_tx, unitary
    int n_h = 0;
    int n_v = 0;
    int rot_h = 0;
    int rot_v = 0;
    int oversampling = 1;
};

// Unitary m-point DFT basis over subbands.
struct DelayBasis {
    Eigen::MatrixXcd w_d;  // m x m, unitary
};

// CSI in the angular-delay domain; entry (a, d) is port a*m + d.
using AngularDelayCsi = Eigen::MatrixXcd;

struct Rotation {
    int rot_h = 0;
    int rot_v = 0;
};

inline int port_index(int angular, int delay, int m) { return angular * m + delay; }
inline int port_angular(int port, int m) { return port / m; }
inline int port_delay(int port, int m) { return port % m; }

// F entry (a, b) = exp(-i*2*pi*a*(b + rot/oversampling)/n)/sqrt(n).
Eigen::MatrixXcd rotated_dft(int n, int rot, int oversampling);

AngularBasis build_angular_basis(int n_h, int n_v, int rot_h, int rot_v,
                                 int oversampling = 4);

DelayBasis build_delay_basis(int m);

// H~ = W_A^H * H * W_D
AngularDelayCsi to_angular_delay(const ChannelMatrix& h, const AngularBasis& wa,
                                 const DelayBasis& wd);

// H = W_A * H~ * W_D^H, exact inverse of to_angular_delay
ChannelMatrix from_angular_delay(const AngularDelayCsi& ht, const AngularBasis& wa,
                                 const DelayBasis& wd);

// Fraction of squared Frobenius norm carried by the strongest p ports.
double top_port_power_fraction(const AngularDelayCsi& ht, int p);
double port_power_fraction(const AngularDelayCsi& ht, const std::vector<int>& ports);

// Exhaustive search over the oversampling grid for the rotation maximizing
// the top-P power fraction of the rotated uplink CSI. Ties go to the
// lexicographically smallest (rot_v, rot_h).
Rotation best_rotation(const ChannelMatrix& h_ul, const SystemConfig& config, int p,
                       int oversampling = 4);

}  // namespace csifb
