#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace epicure {

/// Plain-text key=value configuration with optional [section] headers.
/// '#' starts a comment; list values are written [a, b, c]; keys before the
/// first header belong to section "".
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& source = "<config>");
    static ConfigFile load(const std::filesystem::path& path);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
    const std::map<std::string, std::string>& section(const std::string& name) const;
    std::vector<std::string> sections() const;

    /// Directory the config was loaded from; relative paths resolve against it.
    const std::filesystem::path& base_dir() const { return base_dir_; }
    std::filesystem::path resolve_path(const std::string& value) const;
    const std::string& source() const { return source_; }

    /// Throws if a section holds a key outside `allowed`.
    void require_known(const std::string& section, const std::vector<std::string>& allowed) const;

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
    std::map<std::string, std::map<std::string, std::size_t>> lines_;
    std::filesystem::path base_dir_;
    std::string source_;
};

std::size_t parse_size(const std::string& value, const std::string& what);
double parse_double(const std::string& value, const std::string& what);
bool parse_bool(const std::string& value, const std::string& what);

}  // namespace epicure
