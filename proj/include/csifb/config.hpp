// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace csifb {

// Base error type. Subclasses map onto CLI exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Invalid configuration or dimension mismatch.
struct ConfigError : Error {
    using Error::Error;
};
// Corrupt or unreadable data file.
struct DataError : Error {
    using Error::Error;
};
// Shape/length mismatch between runtime values.
struct ShapeError : Error {
    using Error::Error;
};
// Rank-deficient channel matrix in ZF precoding.
struct RankError : Error {
    using Error::Error;
};

// All scalar system parameters. One validated record parameterizes every
// other module.
struct SystemConfig {
    int n_h = 4;   // dual-polarization antennas, horizontal axis
    int n_v = 4;   // dual-polarization antennas, vertical axis
    int n_tx = 32; // total BS antennas, must equal 2*n_h*n_v
    int m = 8;     // subbands
    int n_s = 4;   // resource blocks per subband (12 subcarriers per RB)
    int k_ues = 5;

    double f_c_ul = 3.4e9; // Hz
    double f_c_dl = 3.5e9; // Hz
    double f_s = 15e3;     // subcarrier spacing, Hz

    double p_tx_dbm = 35.0;
    double noise_figure_db = 5.0;
    double cell_radius_m = 250.0;

    int p_ports = 32; // selected port count P
    int q_w = 5;      // wideband amplitude bits
    int q_na = 3;     // narrowband amplitude bits
    int q_np = 4;     // narrowband phase bits

    int port_count() const { return n_tx * m; }
    int antennas_per_pol() const { return n_h * n_v; }
    // Channel-estimation granularity: one subband = n_s RBs of 12 subcarriers.
    double subband_bandwidth_hz() const { return n_s * 12.0 * f_s; }
};

SystemConfig default_config();

// Returns the config unchanged if all invariants hold, otherwise throws
// ConfigError naming the violated invariant.
SystemConfig validate(const SystemConfig& config);

// Loads a flat TOML file with the exact SystemConfig field names. Unknown
// keys are an error; n_tx may be omitted and is then derived as 2*n_h*n_v.
SystemConfig load_config_toml(const std::string& path);

// Canonical one-line rendering, also the input to the manifest config hash.
std::string to_string(const SystemConfig& config);

}  // namespace csifb
