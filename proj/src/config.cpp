// SPDX-License-Identifier: Apache-2.0
#include "csifb/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace csifb {

SystemConfig default_config() { return SystemConfig{}; }

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

SystemConfig validate(const SystemConfig& c) {
    require(c.n_h >= 1, "n_h must be >= 1");
    require(c.n_v >= 1, "n_v must be >= 1");
    require(c.n_tx == 2 * c.n_h * c.n_v, "n_tx must equal 2*n_h*n_v");
    require(c.m >= 1, "m must be >= 1");
    require(c.n_s >= 1, "n_s must be >= 1");
    require(c.k_ues >= 1, "k_ues must be >= 1");
    require(c.k_ues <= c.n_tx, "k_ues must not exceed n_tx");
    require(c.f_c_ul > 0, "f_c_ul must be positive");
    require(c.f_c_dl > 0, "f_c_dl must be positive");
    require(c.f_s > 0, "f_s must be positive");
    require(c.cell_radius_m > 0, "cell_radius_m must be positive");
    require(c.p_ports >= 1, "p_ports must be >= 1");
    require(c.p_ports <= c.port_count(), "p_ports must not exceed n_tx*m");
    require(c.q_w >= 1 && c.q_w <= 16, "q_w must be in [1, 16]");
    require(c.q_na >= 1 && c.q_na <= 16, "q_na must be in [1, 16]");
    require(c.q_np >= 1 && c.q_np <= 16, "q_np must be in [1, 16]");
    return c;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        while (pos < value.size() && std::isspace(static_cast<unsigned char>(value[pos]))) ++pos;
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid value for " + key + ": '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    double v = parse_number(key, value);
    if (v != std::floor(v) || std::abs(v) > 1e9)
        throw ConfigError("expected integer for " + key + ": '" + value + "'");
    return static_cast<int>(v);
}

}  // namespace

SystemConfig load_config_toml(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);

    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside of quotes (values here are never quoted)
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[')
            throw ConfigError("config must be flat, found table header at line " +
                              std::to_string(lineno));
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        if (kv.count(key))
            throw ConfigError("duplicate key '" + key + "' at line " + std::to_string(lineno));
        kv[key] = value;
    }

    SystemConfig c = default_config();
    bool n_tx_given = false;
    for (const auto& [key, value] : kv) {
        if (key == "n_h") c.n_h = parse_int(key, value);
        else if (key == "n_v") c.n_v = parse_int(key, value);
        else if (key == "n_tx") { c.n_tx = parse_int(key, value); n_tx_given = true; }
        else if (key == "m") c.m = parse_int(key, value);
        else if (key == "n_s") c.n_s = parse_int(key, value);
        else if (key == "k_ues") c.k_ues = parse_int(key, value);
        else if (key == "f_c_ul") c.f_c_ul = parse_number(key, value);
        else if (key == "f_c_dl") c.f_c_dl = parse_number(key, value);
        else if (key == "f_s") c.f_s = parse_number(key, value);
        else if (key == "p_tx_dbm") c.p_tx_dbm = parse_number(key, value);
        else if (key == "noise_figure_db") c.noise_figure_db = parse_number(key, value);
        else if (key == "cell_radius_m") c.cell_radius_m = parse_number(key, value);
        else if (key == "p_ports") c.p_ports = parse_int(key, value);
        else if (key == "q_w") c.q_w = parse_int(key, value);
        else if (key == "q_na") c.q_na = parse_int(key, value);
        else if (key == "q_np") c.q_np = parse_int(key, value);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    if (!n_tx_given) c.n_tx = 2 * c.n_h * c.n_v;
    return validate(c);
}

std::string to_string(const SystemConfig& c) {
    std::ostringstream os;
    os << "n_h=" << c.n_h << " n_v=" << c.n_v << " n_tx=" << c.n_tx << " m=" << c.m
       << " n_s=" << c.n_s << " k_ues=" << c.k_ues << " f_c_ul=" << c.f_c_ul
       << " f_c_dl=" << c.f_c_dl << " f_s=" << c.f_s << " p_tx_dbm=" << c.p_tx_dbm
       << " noise_figure_db=" << c.noise_figure_db << " cell_radius_m=" << c.cell_radius_m
       << " p_ports=" << c.p_ports << " q_w=" << c.q_w << " q_na=" << c.q_na
       << " q_np=" << c.q_np;
    return os.str();
}

}  // namespace csifb
