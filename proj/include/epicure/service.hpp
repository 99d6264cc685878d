#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "epicure/operators.hpp"

namespace httplib {
class Server;
}

namespace epicure {

// A bundle directory holds bundle.json, the embedding, the atlas and optional
// reports. bundle.json:
//   {"kind": "model_bundle", "name": "cooc", "vocab": "<path>", "embedding": "embedding.bin",
//    "atlas": "atlas.json", "reports": {"geometry": "geometry.json", "probes": "probes.json"}}
// Paths are relative to the bundle directory.
struct ModelBundle {
    std::string name;
    std::filesystem::path dir;
    std::filesystem::path vocab_path;
    Model model;
    std::optional<Json> geometry;
    std::optional<Json> probes;
};

struct BundleSpec {
    std::string name;
    std::filesystem::path vocab;  // written relative to the bundle directory when possible
    std::filesystem::path embedding;
    std::filesystem::path atlas;
    std::optional<std::filesystem::path> geometry;
    std::optional<std::filesystem::path> probes;
};

/// Copies the artifacts into `dir` and writes bundle.json.
void write_bundle(const std::filesystem::path& dir, const BundleSpec& spec);

/// Loads a bundle and checks its invariants; throws invalid_bundle naming the bundle.
ModelBundle load_bundle(const std::filesystem::path& dir,
                        std::shared_ptr<const CanonicalVocabulary> shared_vocab = nullptr);
void validate_bundle(const ModelBundle& b);

class Registry {
public:
    std::vector<std::shared_ptr<const ModelBundle>> bundles;
    std::string bind = "127.0.0.1:8080";
    std::string cors_origin;

    /// Throws not_found (with suggestions) for an unknown model name.
    const ModelBundle& get(std::string_view name) const;
    void add(std::shared_ptr<const ModelBundle> b);
};

/// Reads a registry config (keys: models, bind, cors_origin) and validates every bundle.
Registry load_registry(const std::filesystem::path& config);
Registry registry_from_dirs(const std::vector<std::filesystem::path>& dirs);

/// JSON payloads for every query; shared by the CLI and the HTTP service.
class QueryApi {
public:
    explicit QueryApi(const Registry& r) : reg_(r) {}

    Json models() const;
    Json ingredients(std::string_view prefix, std::optional<std::string> model, std::size_t limit) const;
    Json neighbors(std::string_view model, std::string_view seed, std::size_t k) const;
    Json modes(std::string_view model) const;
    Json closest_mode(std::string_view model, std::string_view seed, bool include_supervised) const;
    /// {model, seed, target: {kind: supervised|mode|blend, spec}, angle_deg, k, pole_style}
    Json rotate(const Json& request) const;
    Json report(std::string_view model, std::string_view kind) const;

private:
    Eigen::VectorXd resolve_target(const Model& m, const Json& target, PoleStyle style) const;
    const Registry& reg_;
};

Json error_payload(const Error& e);
int http_status(const Error& e);

/// Parses "host:port"; port 0 asks the OS for a free port.
std::pair<std::string, int> parse_bind(const std::string& bind);

class HttpService {
public:
    explicit HttpService(const Registry& r);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Binds the socket; returns the bound port. Throws port_busy on failure.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();

private:
    void install_routes();
    const Registry& reg_;
    QueryApi api_;
    std::unique_ptr<httplib::Server> svr_;
};

}  // namespace epicure
