#include "sider/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sider {
namespace checkpoint {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write((const char*)b, 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read((char*)b, 4);
    if (!is) throw std::runtime_error("checkpoint: truncated header");
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}

void put_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

float get_f32(std::istream& is) {
    uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

int64_t total_params(const ParamList& params) {
    int64_t n = 0;
    for (auto& [name, t] : params) n += t->size();
    return n;
}

void save(const std::string& path, const ParamList& params, const std::string& meta_json) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp);
        os.write(kMagic, 8);
        put_u32(os, kVersion);
        put_u32(os, (uint32_t)meta_json.size());
        os.write(meta_json.data(), (std::streamsize)meta_json.size());
        put_u32(os, (uint32_t)params.size());
        for (auto& [name, t] : params) {
            put_u32(os, (uint32_t)name.size());
            os.write(name.data(), (std::streamsize)name.size());
            put_u32(os, (uint32_t)t->shape.size());
            for (int d : t->shape) put_u32(os, (uint32_t)d);
        }
        for (auto& [name, t] : params)
            for (real v : t->data) put_f32(os, (float)v);
        if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    // atomic publish
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("checkpoint: rename failed for " + path);
}

namespace {

std::string read_header(std::istream& is, std::vector<std::pair<std::string, std::vector<int>>>& table) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
    uint32_t version = get_u32(is);
    if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    uint32_t meta_len = get_u32(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), meta_len);
    uint32_t n = get_u32(is);
    table.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t name_len = get_u32(is);
        table[i].first.resize(name_len);
        is.read(table[i].first.data(), name_len);
        uint32_t nd = get_u32(is);
        table[i].second.resize(nd);
        for (uint32_t d = 0; d < nd; ++d) table[i].second[d] = (int)get_u32(is);
    }
    if (!is) throw std::runtime_error("checkpoint: truncated header");
    return meta;
}

}  // namespace

std::string load(const std::string& path, const ParamList& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<std::pair<std::string, std::vector<int>>> table;
    std::string meta = read_header(is, table);
    if (table.size() != params.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (size_t i = 0; i < table.size(); ++i) {
        if (table[i].first != params[i].first || table[i].second != params[i].second->shape)
            throw std::runtime_error("checkpoint: shape table mismatch at " + table[i].first);
    }
    for (auto& [name, t] : params)
        for (auto& v : t->data) v = (real)get_f32(is);
    if (!is) throw std::runtime_error("checkpoint: truncated data");
    return meta;
}

std::string read_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<std::pair<std::string, std::vector<int>>> table;
    return read_header(is, table);
}

}  // namespace checkpoint
}  // namespace sider
