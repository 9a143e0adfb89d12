// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "csifb/config.hpp"
#include "csifb/transforms.hpp"

namespace csifb {

// Linear port indices ordered by descending selection score.
struct PortSelection {
    std::vector<int> ports;
};

// Measured complex coefficient and polarization flag per selected port.
struct PortCoefficients {
    std::vector<std::complex<double>> c;
    std::vector<int> pol;
};

// Two-stage quantizer level sets.
struct QuantizerSpec {
    int q_w = 5;
    int q_na = 3;
    int q_np = 4;
    std::vector<double> wideband;   // 2^(-k/4), strictly decreasing
    std::vector<double> narrowband; // 2^(-k/2), strictly decreasing
    std::vector<double> phases;     // 2*pi*q/2^q_np, strictly increasing
};

QuantizerSpec make_quantizer_spec(int q_w, int q_na, int q_np);
inline QuantizerSpec make_quantizer_spec(const SystemConfig& c) {
    return make_quantizer_spec(c.q_w, c.q_na, c.q_np);
}

// Quantized payload. The polarization flags are derived from the selection
// and carried for convenience; they are not part of the packed bits.
struct QuantizedFeedback {
    int strong_pol = 0;
    int wb_index = 0;
    std::vector<int> na_index;
    std::vector<int> np_index;
    int reference_pos = 0;  // position in the selection of the amplitude-1 port
    std::vector<int> pol;
};

inline int payload_bits(int p, const QuantizerSpec& spec) {
    return 1 + spec.q_w + p * (spec.q_na + spec.q_np);
}

// Polarization of a linear port: angular indices below antennas_per_pol
// belong to polarization 0.
inline int port_polarization(int port, int m, int antennas_per_pol) {
    return port_angular(port, m) < antennas_per_pol ? 0 : 1;
}

// The p strongest ports of |ht|^2, ties to the lower linear index.
PortSelection select_ports_topP(const AngularDelayCsi& ht, int p);

// Rank-1 unit-norm precoding matrix w_A,p * w_D,p^H for one port.
Eigen::MatrixXcd measurement_precoder(int angular, int delay, const AngularBasis& wa,
                                      const DelayBasis& wd);

// c_p = w_A,p^H * H_DL * w_D,p per selected port (noiseless measurement).
PortCoefficients measure_coefficients(const ChannelMatrix& h_dl,
                                      const PortSelection& sel, const AngularBasis& wa,
                                      const DelayBasis& wd);

QuantizedFeedback quantize(const PortCoefficients& co, const QuantizerSpec& spec);

// Inverse of quantize up to the global reference amplitude, which is not
// fed back (downstream precoding normalizes it away).
PortCoefficients dequantize(const QuantizedFeedback& fb, const QuantizerSpec& spec);

// Sum of c_p * w_A,p * w_D,p^H over the selection.
ChannelMatrix reconstruct_coefficients(const PortCoefficients& co,
                                       const PortSelection& sel, const AngularBasis& wa,
                                       const DelayBasis& wd);

ChannelMatrix reconstruct(const QuantizedFeedback& fb, const PortSelection& sel,
                          const AngularBasis& wa, const DelayBasis& wd,
                          const QuantizerSpec& spec);

// MSB-first bit packing, field order: strong_pol, wb_index, then per port
// na_index and np_index. Length is exactly payload_bits(P) bits.
std::vector<std::uint8_t> pack_feedback(const QuantizedFeedback& fb,
                                        const QuantizerSpec& spec);
QuantizedFeedback unpack_feedback(const std::vector<std::uint8_t>& bytes,
                                  const PortSelection& sel, const SystemConfig& config,
                                  const QuantizerSpec& spec);

}  // namespace csifb
