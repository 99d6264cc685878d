#include "epicure/config.hpp"

#include <algorithm>
#include <charconv>

#include "epicure/artifact.hpp"
#include "epicure/common.hpp"

namespace epicure {

namespace {

std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& source) {
    ConfigFile c;
    c.source_ = source;
    std::string section;
    c.values_[section];
    std::size_t line_no = 0, start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line(text.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        const auto where = source + ":" + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') fail("invalid_config", where + "unterminated section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (section.empty()) fail("invalid_config", where + "empty section name");
            c.values_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("invalid_config", where + "expected key = value");
        const auto key = trim(std::string_view(line).substr(0, eq));
        const auto value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) fail("invalid_config", where + "empty key");
        if (c.values_[section].count(key))
            fail("invalid_config", where + "duplicate key '" + key + "' (first set on line " +
                                       std::to_string(c.lines_[section][key]) + ")");
        c.values_[section][key] = value;
        c.lines_[section][key] = line_no;
        if (end == text.size()) break;
    }
    return c;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    auto c = parse(read_text_file(path), path.string());
    c.base_dir_ = std::filesystem::absolute(path).parent_path();
    return c;
}

bool ConfigFile::has(const std::string& s, const std::string& k) const {
    const auto it = values_.find(s);
    return it != values_.end() && it->second.count(k);
}

std::optional<std::string> ConfigFile::get(const std::string& s, const std::string& k) const {
    const auto it = values_.find(s);
    if (it == values_.end()) return std::nullopt;
    const auto jt = it->second.find(k);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
}

std::string ConfigFile::get_or(const std::string& s, const std::string& k, const std::string& fallback) const {
    return get(s, k).value_or(fallback);
}

std::vector<std::string> ConfigFile::get_list(const std::string& s, const std::string& k) const {
    const auto v = get(s, k);
    std::vector<std::string> out;
    if (!v) return out;
    std::string body = *v;
    if (!body.empty() && body.front() == '[') {
        if (body.back() != ']') fail("invalid_config", source_ + ": list for '" + k + "' is missing ']'");
        body = body.substr(1, body.size() - 2);
    }
    std::size_t start = 0;
    while (start <= body.size()) {
        auto comma = body.find(',', start);
        if (comma == std::string::npos) comma = body.size();
        auto item = trim(std::string_view(body).substr(start, comma - start));
        if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
        if (!item.empty()) out.push_back(item);
        start = comma + 1;
    }
    return out;
}

const std::map<std::string, std::string>& ConfigFile::section(const std::string& name) const {
    static const std::map<std::string, std::string> empty;
    const auto it = values_.find(name);
    return it == values_.end() ? empty : it->second;
}

std::vector<std::string> ConfigFile::sections() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

std::filesystem::path ConfigFile::resolve_path(const std::string& value) const {
    std::filesystem::path p(value);
    if (p.is_absolute() || base_dir_.empty()) return p;
    return base_dir_ / p;
}

void ConfigFile::require_known(const std::string& s, const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : section(s)) {
        if (std::find(allowed.begin(), allowed.end(), k) != allowed.end()) continue;
        throw Error("invalid_config",
                    source_ + ":" + std::to_string(lines_.at(s).at(k)) + ": unknown key '" + k + "'" +
                        (s.empty() ? "" : " in [" + s + "]"),
                    closest_names(allowed, k, 3));
    }
}

std::size_t parse_size(const std::string& value, const std::string& what) {
    std::size_t v = 0;
    const auto* end = value.data() + value.size();
    const auto r = std::from_chars(value.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) fail("invalid_config", what + ": expected a non-negative integer, got '" + value + "'");
    return v;
}

double parse_double(const std::string& value, const std::string& what) {
    double v = 0;
    const auto* end = value.data() + value.size();
    const auto r = std::from_chars(value.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) fail("invalid_config", what + ": expected a number, got '" + value + "'");
    return v;
}

bool parse_bool(const std::string& value, const std::string& what) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail("invalid_config", what + ": expected true or false, got '" + value + "'");
}

}  // namespace epicure
