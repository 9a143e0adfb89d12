// SPDX-License-Identifier: Apache-2.0
#include "csifb/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <system_error>

namespace csifb {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'I', 'F', 'B', 'C', 'K', '1'};
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("unexpected end of checkpoint file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor<float>*>>& entries) {
    std::error_code ec;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path(), ec);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint file for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    put_u32(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, tensor] : entries) {
        if (tensor == nullptr) throw DataError("null tensor for " + name);
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(tensor->rank()));
        for (int d : tensor->shape) put_u32(os, static_cast<std::uint32_t>(d));
        for (float v : tensor->v) {
            std::uint32_t u;
            std::memcpy(&u, &v, 4);
            put_u32(os, u);
        }
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

std::map<std::string, Tensor<float>> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint file: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a checkpoint file: " + path);
    const std::uint32_t count = get_u32(is);
    std::map<std::string, Tensor<float>> out;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t name_len = get_u32(is);
        if (name_len == 0 || name_len > kMaxNameLen)
            throw DataError("corrupt checkpoint entry name");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw DataError("unexpected end of checkpoint file");
        const std::uint32_t rank = get_u32(is);
        if (rank == 0 || rank > kMaxRank) throw DataError("corrupt checkpoint rank");
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(get_u32(is));
        Tensor<float> t(shape);
        for (auto& v : t.v) {
            std::uint32_t u = get_u32(is);
            std::memcpy(&v, &u, 4);
        }
        if (!out.emplace(std::move(name), std::move(t)).second)
            throw DataError("duplicate checkpoint entry");
    }
    return out;
}

void assign_state(const std::map<std::string, Tensor<float>>& loaded,
                  const std::vector<std::pair<std::string, Tensor<float>*>>& state) {
    for (const auto& [name, tensor] : state) {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw DataError("checkpoint is missing tensor " + name);
        if (!it->second.same_shape(*tensor))
            throw DataError("checkpoint shape mismatch for " + name);
        tensor->v = it->second.v;
    }
}

}  // namespace csifb
