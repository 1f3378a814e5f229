#pragma once

// Shared binary container used by checkpoints and dataset files:
//
//   bytes 0..7   magic (8 ASCII chars, file kind)
//   bytes 8..11  format version, uint32 little-endian
//   bytes 12..19 header length in bytes, uint64 little-endian
//   ...          UTF-8 JSON header
//   ...          raw payload arrays, back to back, in the order listed by
//                header["payload"] ({"name","dtype":"f64"|"i32","count"})
//
// All multi-byte values are little-endian; floats are raw IEEE-754 doubles,
// so round-trips are bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfkd/errors.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian platform required");

namespace dfkd::binfile {

constexpr uint32_t kVersion = 1;

struct F64Array {
    std::string name;
    const std::vector<double>* values;
};

struct I32Array {
    std::string name;
    const std::vector<int32_t>* values;
};

inline void write(const std::string& path, const std::string& magic, nlohmann::json header,
                  const std::vector<F64Array>& f64s, const std::vector<I32Array>& i32s = {}) {
    if (magic.size() != 8) throw format_error("binfile: magic must be 8 bytes");
    nlohmann::json payload = nlohmann::json::array();
    for (const auto& a : f64s)
        payload.push_back({{"name", a.name}, {"dtype", "f64"}, {"count", a.values->size()}});
    for (const auto& a : i32s)
        payload.push_back({{"name", a.name}, {"dtype", "i32"}, {"count", a.values->size()}});
    header["payload"] = std::move(payload);
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.write(magic.data(), 8);
    const uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& a : f64s)
        out.write(reinterpret_cast<const char*>(a.values->data()),
                  static_cast<std::streamsize>(a.values->size() * sizeof(double)));
    for (const auto& a : i32s)
        out.write(reinterpret_cast<const char*>(a.values->data()),
                  static_cast<std::streamsize>(a.values->size() * sizeof(int32_t)));
    if (!out) throw io_error("short write to '" + path + "'");
}

// Header without payload; cheap, reads only the front of the file.
inline nlohmann::json read_header(const std::string& path, const std::string& magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    char got_magic[8];
    in.read(got_magic, 8);
    if (!in || std::memcmp(got_magic, magic.data(), 8) != 0)
        throw format_error("'" + path + "' is not a " + magic + " file (bad magic)");
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in) throw format_error("'" + path + "': truncated header");
    if (version != kVersion)
        throw version_error("'" + path + "': format version " + std::to_string(version) +
                            ", expected " + std::to_string(kVersion));
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in) throw format_error("'" + path + "': truncated header");
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw format_error("'" + path + "': truncated header");
    nlohmann::json header = nlohmann::json::parse(htext, nullptr, false);
    if (header.is_discarded()) throw format_error("'" + path + "': header is not valid JSON");
    return header;
}

struct Contents {
    nlohmann::json header;
    std::map<std::string, std::vector<double>> f64;
    std::map<std::string, std::vector<int32_t>> i32;
};

inline Contents read(const std::string& path, const std::string& magic) {
    Contents c;
    c.header = read_header(path, magic);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    uint64_t hlen = 0;
    in.seekg(12);
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    in.seekg(static_cast<std::streamoff>(20 + hlen));
    if (!c.header.contains("payload") || !c.header["payload"].is_array())
        throw format_error("'" + path + "': header lacks payload directory");
    for (const auto& entry : c.header["payload"]) {
        const std::string name = entry.at("name").get<std::string>();
        const std::string dtype = entry.at("dtype").get<std::string>();
        const uint64_t count = entry.at("count").get<uint64_t>();
        if (dtype == "f64") {
            std::vector<double> v(count);
            in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(double)));
            if (!in) throw format_error("'" + path + "': truncated payload array '" + name + "'");
            c.f64.emplace(name, std::move(v));
        } else if (dtype == "i32") {
            std::vector<int32_t> v(count);
            in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(int32_t)));
            if (!in) throw format_error("'" + path + "': truncated payload array '" + name + "'");
            c.i32.emplace(name, std::move(v));
        } else {
            throw format_error("'" + path + "': unknown payload dtype '" + dtype + "'");
        }
    }
    return c;
}

} // namespace dfkd::binfile
