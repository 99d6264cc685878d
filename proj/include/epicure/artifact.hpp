#pragma once

// Versioned binary container shared by corpus.bin, graph.bin and embedding.bin:
//
//   bytes 0..7    magic "EPICURE\0"
//   bytes 8..11   u32 format version (little-endian)
//   bytes 12..19  u64 header length H
//   next H bytes  UTF-8 JSON header; header["sections"] lists {name, bytes}
//   payload       section blobs, concatenated in header order
//
// All integers in payloads are little-endian.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace epicure {

using Json = nlohmann::json;

inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
    Json header = Json::object();
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections;

    void add_section(std::string name, std::vector<std::uint8_t> bytes);
    const std::vector<std::uint8_t>& section(const std::string& name) const;
    bool has_section(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, Container c);
Container read_container(const std::filesystem::path& path);

// Little-endian packing helpers. The host is assumed little-endian (checked at
// build time in artifact.cpp).
template <typename T>
std::vector<std::uint8_t> pack(std::span<const T> values) {
    std::vector<std::uint8_t> out(values.size_bytes());
    if (!values.empty()) std::memcpy(out.data(), values.data(), values.size_bytes());
    return out;
}

template <typename T>
std::vector<T> unpack(const std::vector<std::uint8_t>& bytes) {
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
    return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// JSON dumped with 2-space indent and a trailing newline; the canonical
/// serialization used for every JSON artifact so hashes are reproducible.
std::string dump_json(const Json& j);

}  // namespace epicure
