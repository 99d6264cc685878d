#include "epicure/artifact.hpp"

#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "epicure/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "artifact payloads are written in host order and require a little-endian host");

namespace epicure {

namespace {

constexpr char kMagic[8] = {'E', 'P', 'I', 'C', 'U', 'R', 'E', '\0'};

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void Container::add_section(std::string name, std::vector<std::uint8_t> bytes) {
    sections.emplace_back(std::move(name), std::move(bytes));
}

const std::vector<std::uint8_t>& Container::section(const std::string& name) const {
    for (const auto& [n, b] : sections)
        if (n == name) return b;
    fail("format", "artifact has no section '" + name + "'");
}

bool Container::has_section(const std::string& name) const {
    for (const auto& s : sections)
        if (s.first == name) return true;
    return false;
}

void write_container(const std::filesystem::path& path, Container c) {
    Json list = Json::array();
    for (const auto& [name, bytes] : c.sections)
        list.push_back({{"name", name}, {"bytes", bytes.size()}});
    c.header["sections"] = list;
    const std::string header = c.header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("io", "cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kContainerVersion);
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& s : c.sections)
        out.write(reinterpret_cast<const char*>(s.second.data()),
                  static_cast<std::streamsize>(s.second.size()));
    if (!out) fail("io", "short write on " + path.string());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io", "cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        fail("format", path.string() + " is not an epicure artifact");
    const auto version = get<std::uint32_t>(in);
    if (version != kContainerVersion)
        fail("format", path.string() + ": unsupported container version " + std::to_string(version));
    const auto header_len = get<std::uint64_t>(in);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) fail("format", path.string() + ": truncated header");

    Container c;
    try {
        c.header = Json::parse(header);
    } catch (const Json::exception& e) {
        fail("format", path.string() + ": bad header json: " + e.what());
    }
    for (const auto& s : c.header.at("sections")) {
        std::vector<std::uint8_t> bytes(s.at("bytes").get<std::size_t>());
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!in) fail("format", path.string() + ": truncated section " + s.at("name").get<std::string>());
        c.sections.emplace_back(s.at("name").get<std::string>(), std::move(bytes));
    }
    return c;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return os.str();
}

std::string sha256_hex(const std::string& text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    return sha256_hex(data);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io", "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("io", "cannot write " + path.string());
    out << text;
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace epicure
