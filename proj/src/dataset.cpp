// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <filesystem>
#include <fstream>
#include <system_error>

#include "csifb/channel.hpp"

namespace csifb {

namespace {

constexpr char kMagic[8] = {'T', 'Y', '2', 'C', 'S', 'I', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("unexpected end of dataset file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw DataError("unexpected end of dataset file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is) {
    std::uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

void put_matrix(std::ostream& os, const ChannelMatrix& h) {
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) {
            put_f32(os, static_cast<float>(h(r, c).real()));
            put_f32(os, static_cast<float>(h(r, c).imag()));
        }
    }
}

ChannelMatrix get_matrix(std::istream& is, int rows, int cols) {
    ChannelMatrix h(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            float re = get_f32(is);
            float im = get_f32(is);
            h(r, c) = std::complex<double>(re, im);
        }
    }
    return h;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<ChannelSample>& samples,
                  const SystemConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path(), ec);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, static_cast<std::uint32_t>(samples.size()));
    put_u32(os, static_cast<std::uint32_t>(config.n_tx));
    put_u32(os, static_cast<std::uint32_t>(config.m));
    put_u32(os, 0);  // flags
    for (const ChannelSample& s : samples) {
        if (s.h_ul_noisy.rows() != config.n_tx || s.h_ul_noisy.cols() != config.m)
            throw ShapeError("sample shape does not match config");
        put_f32(os, s.snr_db);
        put_u64(os, s.seed);
        put_matrix(os, s.h_ul_noisy);
        put_matrix(os, s.h_ul_clean);
        put_matrix(os, s.h_dl_clean);
    }
    if (!os) throw DataError("write failed: " + path);
}

std::vector<ChannelSample> load_dataset(const std::string& path,
                                        const SystemConfig& config) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("bad magic in dataset file: " + path);
    std::uint32_t count = get_u32(is);
    std::uint32_t n_tx = get_u32(is);
    std::uint32_t m = get_u32(is);
    get_u32(is);  // flags, reserved
    if (n_tx != static_cast<std::uint32_t>(config.n_tx) ||
        m != static_cast<std::uint32_t>(config.m))
        throw DataError("dataset dimensions " + std::to_string(n_tx) + "x" +
                        std::to_string(m) + " do not match config");
    std::vector<ChannelSample> samples;
    samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ChannelSample s;
        s.snr_db = get_f32(is);
        s.seed = get_u64(is);
        s.h_ul_noisy = get_matrix(is, n_tx, m);
        s.h_ul_clean = get_matrix(is, n_tx, m);
        s.h_dl_clean = get_matrix(is, n_tx, m);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace csifb
