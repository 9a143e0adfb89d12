// SPDX-License-Identifier: Apache-2.0
#include "csifb/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace csifb {

QuantizerSpec make_quantizer_spec(int q_w, int q_na, int q_np) {
    if (q_w < 1 || q_na < 1 || q_np < 1 || q_w > 16 || q_na > 16 || q_np > 16)
        throw ConfigError("quantizer bit widths must be in [1, 16]");
    QuantizerSpec spec;
    spec.q_w = q_w;
    spec.q_na = q_na;
    spec.q_np = q_np;
    for (int k = 0; k < (1 << q_w); ++k) spec.wideband.push_back(std::exp2(-k / 4.0));
    for (int k = 0; k < (1 << q_na); ++k) spec.narrowband.push_back(std::exp2(-k / 2.0));
    for (int q = 0; q < (1 << q_np); ++q)
        spec.phases.push_back(2.0 * std::numbers::pi * q / (1 << q_np));
    return spec;
}

PortSelection select_ports_topP(const AngularDelayCsi& ht, int p) {
    const int n_ports = static_cast<int>(ht.size());
    if (p < 1 || p > n_ports) throw ConfigError("p out of range [1, n_tx*m]");
    const int m = static_cast<int>(ht.cols());
    std::vector<int> order(n_ports);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> power(n_ports);
    for (int n = 0; n < n_ports; ++n) power[n] = std::norm(ht(n / m, n % m));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (power[a] != power[b]) return power[a] > power[b];
        return a < b;
    });
    order.resize(p);
    return PortSelection{std::move(order)};
}

Eigen::MatrixXcd measurement_precoder(int angular, int delay, const AngularBasis& wa,
                                      const DelayBasis& wd) {
    if (angular < 0 || angular >= wa.w_a.cols())
        throw ConfigError("angular index out of range");
    if (delay < 0 || delay >= wd.w_d.cols())
        throw ConfigError("delay index out of range");
    return wa.w_a.col(angular) * wd.w_d.col(delay).adjoint();
}

PortCoefficients measure_coefficients(const ChannelMatrix& h_dl,
                                      const PortSelection& sel, const AngularBasis& wa,
                                      const DelayBasis& wd) {
    if (h_dl.rows() != wa.w_a.rows() || h_dl.cols() != wd.w_d.rows())
        throw ShapeError("CSI shape does not match bases");
    const int m = static_cast<int>(wd.w_d.rows());
    const int per_pol = static_cast<int>(wa.w_a.rows()) / 2;
    PortCoefficients co;
    co.c.reserve(sel.ports.size());
    co.pol.reserve(sel.ports.size());
    for (int port : sel.ports) {
        int a = port_angular(port, m);
        int d = port_delay(port, m);
        if (a < 0 || a >= wa.w_a.cols() || d < 0 || d >= m)
            throw ConfigError("port index out of range");
        co.c.push_back(wa.w_a.col(a).dot(h_dl * wd.w_d.col(d)));
        co.pol.push_back(a < per_pol ? 0 : 1);
    }
    return co;
}

namespace {

// Nearest level of the form 2^(-k*step2) in the log2 domain, clamped.
int nearest_log2_index(double value, double step2, int n_levels) {
    if (value <= 0.0) return n_levels - 1;
    double k = -std::log2(value) / step2;
    long idx = std::lround(k);
    if (idx < 0) idx = 0;
    if (idx >= n_levels) idx = n_levels - 1;
    return static_cast<int>(idx);
}

// Nearest uniform phase index, ties to the lower index, wrapped mod 2^q.
int nearest_phase_index(double phase, int n_levels) {
    const double two_pi = 2.0 * std::numbers::pi;
    phase = std::fmod(phase, two_pi);
    if (phase < 0) phase += two_pi;
    double step = two_pi / n_levels;
    long q = static_cast<long>(std::ceil(phase / step - 0.5));
    q %= n_levels;
    if (q < 0) q += n_levels;
    return static_cast<int>(q);
}

}  // namespace

QuantizedFeedback quantize(const PortCoefficients& co, const QuantizerSpec& spec) {
    const int p = static_cast<int>(co.c.size());
    if (p == 0 || co.pol.size() != co.c.size())
        throw ShapeError("coefficient and polarization lengths must match and be nonzero");

    int ref = 0;
    for (int i = 1; i < p; ++i)
        if (std::abs(co.c[i]) > std::abs(co.c[ref])) ref = i;
    double g0 = std::abs(co.c[ref]);
    if (g0 <= 0.0) throw DataError("cannot quantize all-zero coefficients");

    QuantizedFeedback fb;
    fb.strong_pol = co.pol[ref];
    fb.reference_pos = ref;
    fb.pol = co.pol;

    double weak_max = 0.0;
    for (int i = 0; i < p; ++i)
        if (co.pol[i] != fb.strong_pol) weak_max = std::max(weak_max, std::abs(co.c[i]));
    fb.wb_index = nearest_log2_index(weak_max / g0, 0.25,
                                     static_cast<int>(spec.wideband.size()));
    double w_hat = spec.wideband[fb.wb_index];

    fb.na_index.resize(p);
    fb.np_index.resize(p);
    for (int i = 0; i < p; ++i) {
        double denom = co.pol[i] == fb.strong_pol ? g0 : g0 * w_hat;
        double a = std::abs(co.c[i]) / denom;
        a = std::min(a, 1.0);  // log2 clamp below handles the lower bound
        fb.na_index[i] =
            nearest_log2_index(a, 0.5, static_cast<int>(spec.narrowband.size()));
        fb.np_index[i] = nearest_phase_index(std::arg(co.c[i]),
                                             static_cast<int>(spec.phases.size()));
    }
    return fb;
}

PortCoefficients dequantize(const QuantizedFeedback& fb, const QuantizerSpec& spec) {
    const int p = static_cast<int>(fb.na_index.size());
    if (fb.np_index.size() != fb.na_index.size() || fb.pol.size() != fb.na_index.size())
        throw ShapeError("inconsistent feedback lengths");
    if (fb.wb_index < 0 || fb.wb_index >= static_cast<int>(spec.wideband.size()))
        throw ConfigError("wb_index out of range");
    PortCoefficients co;
    co.c.resize(p);
    co.pol = fb.pol;
    double w_hat = spec.wideband[fb.wb_index];
    for (int i = 0; i < p; ++i) {
        if (fb.na_index[i] < 0 || fb.na_index[i] >= static_cast<int>(spec.narrowband.size()))
            throw ConfigError("na_index out of range");
        if (fb.np_index[i] < 0 || fb.np_index[i] >= static_cast<int>(spec.phases.size()))
            throw ConfigError("np_index out of range");
        double scale = fb.pol[i] == fb.strong_pol ? 1.0 : w_hat;
        double amp = scale * spec.narrowband[fb.na_index[i]];
        double ph = spec.phases[fb.np_index[i]];
        co.c[i] = std::polar(amp, ph);
    }
    return co;
}

ChannelMatrix reconstruct_coefficients(const PortCoefficients& co,
                                       const PortSelection& sel, const AngularBasis& wa,
                                       const DelayBasis& wd) {
    if (co.c.size() != sel.ports.size())
        throw ShapeError("coefficient count does not match selection");
    const int m = static_cast<int>(wd.w_d.rows());
    AngularDelayCsi ht = AngularDelayCsi::Zero(wa.w_a.rows(), m);
    for (size_t i = 0; i < sel.ports.size(); ++i) {
        int port = sel.ports[i];
        ht(port_angular(port, m), port_delay(port, m)) = co.c[i];
    }
    return from_angular_delay(ht, wa, wd);
}

ChannelMatrix reconstruct(const QuantizedFeedback& fb, const PortSelection& sel,
                          const AngularBasis& wa, const DelayBasis& wd,
                          const QuantizerSpec& spec) {
    if (fb.na_index.size() != sel.ports.size())
        throw ShapeError("feedback length does not match selection");
    return reconstruct_coefficients(dequantize(fb, spec), sel, wa, wd);
}

namespace {

struct BitWriter {
    std::vector<std::uint8_t> bytes;
    int used = 0;  // bits in the last byte
    void push(std::uint32_t value, int bits) {
        for (int i = bits - 1; i >= 0; --i) {
            if (used == 0) bytes.push_back(0);
            int bit = (value >> i) & 1;
            bytes.back() |= static_cast<std::uint8_t>(bit << (7 - used));
            used = (used + 1) % 8;
        }
    }
};

struct BitReader {
    const std::vector<std::uint8_t>& bytes;
    size_t pos = 0;  // bit position
    std::uint32_t pull(int bits) {
        std::uint32_t v = 0;
        for (int i = 0; i < bits; ++i) {
            size_t byte = pos / 8;
            if (byte >= bytes.size()) throw DataError("feedback payload too short");
            int bit = (bytes[byte] >> (7 - pos % 8)) & 1;
            v = (v << 1) | static_cast<std::uint32_t>(bit);
            ++pos;
        }
        return v;
    }
};

}  // namespace

std::vector<std::uint8_t> pack_feedback(const QuantizedFeedback& fb,
                                        const QuantizerSpec& spec) {
    BitWriter w;
    w.push(static_cast<std::uint32_t>(fb.strong_pol), 1);
    w.push(static_cast<std::uint32_t>(fb.wb_index), spec.q_w);
    for (size_t i = 0; i < fb.na_index.size(); ++i) {
        w.push(static_cast<std::uint32_t>(fb.na_index[i]), spec.q_na);
        w.push(static_cast<std::uint32_t>(fb.np_index[i]), spec.q_np);
    }
    return w.bytes;
}

QuantizedFeedback unpack_feedback(const std::vector<std::uint8_t>& bytes,
                                  const PortSelection& sel, const SystemConfig& config,
                                  const QuantizerSpec& spec) {
    BitReader r{bytes};
    QuantizedFeedback fb;
    fb.strong_pol = static_cast<int>(r.pull(1));
    fb.wb_index = static_cast<int>(r.pull(spec.q_w));
    const int per_pol = config.antennas_per_pol();
    for (int port : sel.ports) {
        fb.na_index.push_back(static_cast<int>(r.pull(spec.q_na)));
        fb.np_index.push_back(static_cast<int>(r.pull(spec.q_np)));
        fb.pol.push_back(port_polarization(port, config.m, per_pol));
    }
    for (size_t i = 0; i < fb.na_index.size(); ++i) {
        if (fb.pol[i] == fb.strong_pol && fb.na_index[i] == 0) {
            fb.reference_pos = static_cast<int>(i);
            break;
        }
    }
    return fb;
}

}  // namespace csifb
