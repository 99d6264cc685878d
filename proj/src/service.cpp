#include "epicure/service.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <httplib.h>

#include "epicure/config.hpp"

namespace epicure {

namespace fs = std::filesystem;

namespace {

Json read_json_file(const fs::path& p) {
    try {
        return Json::parse(read_text_file(p));
    } catch (const Json::exception& e) {
        fail("corrupt_artifact", p.string() + ": " + e.what());
    }
}

[[noreturn]] void bundle_fail(const fs::path& dir, const std::string& name, const std::string& what) {
    fail("invalid_bundle", "bundle '" + name + "' (" + dir.string() + "): " + what);
}

Json neighbor_list(const Model& m, const std::vector<Neighbor>& nb) {
    Json out = Json::array();
    std::size_t rank = 1;
    for (const auto& n : nb) out.push_back({{"rank", rank++}, {"name", m.view.names[n.row]}, {"cos", n.cos}});
    return out;
}

std::size_t checked_k(std::size_t k) {
    if (k < 1 || k > 1000) fail("invalid_input", "k must be within [1, 1000], got " + std::to_string(k));
    return k;
}

const Mode& find_mode(const Model& m, const std::string& source, int mode_id) {
    if (const Mode* mode = m.atlas.find(source, mode_id)) return *mode;
    std::vector<std::string> keys;
    for (const auto& x : m.atlas.modes) keys.push_back(x.key());
    throw Error("not_found", "no mode " + source + "/M" + std::to_string(mode_id) + " in model " + m.name,
                closest_names(keys, source + "/M" + std::to_string(mode_id)));
}

// Accepts {"source": ..., "mode_id": ...} or "F_3/M1".
const Mode& mode_from_spec(const Model& m, const Json& spec) {
    if (spec.is_object()) {
        if (!spec.contains("source") || !spec.contains("mode_id") || !spec["source"].is_string() ||
            !spec["mode_id"].is_number_integer())
            fail("invalid_input", "mode reference needs string 'source' and integer 'mode_id'");
        return find_mode(m, spec["source"].get<std::string>(), spec["mode_id"].get<int>());
    }
    if (spec.is_string()) {
        const auto s = spec.get<std::string>();
        const auto slash = s.rfind("/M");
        if (slash == std::string::npos) fail("invalid_input", "mode reference must look like <source>/M<id>, got '" + s + "'");
        int id = 0;
        try {
            std::size_t used = 0;
            id = std::stoi(s.substr(slash + 2), &used);
            if (used != s.size() - slash - 2) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail("invalid_input", "bad mode id in '" + s + "'");
        }
        return find_mode(m, s.substr(0, slash), id);
    }
    fail("invalid_input", "mode reference must be an object or a string");
}

}  // namespace

void write_bundle(const fs::path& dir, const BundleSpec& spec) {
    fs::create_directories(dir);
    auto copy = [&](const fs::path& src, const std::string& name) {
        const auto dst = dir / name;
        if (fs::exists(dst) && fs::equivalent(src, dst)) return;
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    };
    copy(spec.embedding, "embedding.bin");
    copy(spec.atlas, "atlas.json");
    Json reports = Json::object();
    if (spec.geometry) {
        copy(*spec.geometry, "geometry.json");
        reports["geometry"] = "geometry.json";
    }
    if (spec.probes) {
        copy(*spec.probes, "probes.json");
        reports["probes"] = "probes.json";
    }
    std::error_code ec;
    auto rel = fs::relative(fs::absolute(spec.vocab), fs::absolute(dir), ec);
    if (ec || rel.empty()) rel = fs::absolute(spec.vocab);
    const Json j{{"kind", "model_bundle"},
                 {"name", spec.name},
                 {"vocab", rel.generic_string()},
                 {"embedding", "embedding.bin"},
                 {"atlas", "atlas.json"},
                 {"reports", reports}};
    write_text_file(dir / "bundle.json", dump_json(j));
}

ModelBundle load_bundle(const fs::path& dir, std::shared_ptr<const CanonicalVocabulary> shared_vocab) {
    const auto manifest = dir / "bundle.json";
    if (!fs::exists(manifest)) fail("invalid_bundle", dir.string() + ": missing bundle.json");
    const Json j = read_json_file(manifest);
    ModelBundle b;
    b.dir = dir;
    try {
        if (j.value("kind", "") != "model_bundle") fail("invalid_bundle", manifest.string() + ": not a model bundle");
        b.name = j.at("name").get<std::string>();
        b.vocab_path = dir / j.at("vocab").get<std::string>();
        auto vocab = shared_vocab ? shared_vocab
                                  : std::make_shared<const CanonicalVocabulary>(load_vocabulary(b.vocab_path));
        auto emb = load_embedding(dir / j.at("embedding").get<std::string>());
        auto atlas = load_atlas(dir / j.at("atlas").get<std::string>());
        b.model = Model::make(b.name, emb, std::move(vocab), std::move(atlas));
        if (j.contains("reports")) {
            const auto& r = j["reports"];
            if (r.contains("geometry")) b.geometry = read_json_file(dir / r["geometry"].get<std::string>());
            if (r.contains("probes")) b.probes = read_json_file(dir / r["probes"].get<std::string>());
        }
    } catch (const Json::exception& e) {
        fail("invalid_bundle", manifest.string() + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == "invalid_bundle") throw;
        bundle_fail(dir, b.name.empty() ? dir.filename().string() : b.name, e.what());
    }
    validate_bundle(b);
    return b;
}

void validate_bundle(const ModelBundle& b) {
    const auto& m = b.model;
    if (m.size() == 0) bundle_fail(b.dir, b.name, "no embedding rows match the vocabulary");
    const auto dim = static_cast<std::size_t>(m.unit.cols());
    if (m.atlas.dim != dim)
        bundle_fail(b.dir, b.name, "atlas dimension " + std::to_string(m.atlas.dim) + " != embedding dimension " +
                                       std::to_string(dim));
    std::set<std::pair<std::string, int>> keys;
    for (const auto& mode : m.atlas.modes) {
        const auto where = "mode " + mode.key() + ": ";
        if (!keys.emplace(mode.source, mode.mode_id).second) bundle_fail(b.dir, b.name, where + "duplicate mode");
        if (mode.members.size() < 6)
            bundle_fail(b.dir, b.name, where + std::to_string(mode.members.size()) + " members (< 6)");
        if (mode.members.size() != mode.member_ids.size())
            bundle_fail(b.dir, b.name, where + "member name and id lists differ in length");
        if (static_cast<std::size_t>(mode.pole.size()) != dim)
            bundle_fail(b.dir, b.name, where + "pole dimension " + std::to_string(mode.pole.size()));
        if (std::abs(mode.pole.norm() - 1.0) > 1e-6) bundle_fail(b.dir, b.name, where + "pole is not unit norm");
        if (!(mode.coherence >= -1.0 - 1e-9 && mode.coherence <= 1.0 + 1e-9))
            bundle_fail(b.dir, b.name, where + "coherence outside [-1, 1]");
        for (std::size_t i = 0; i < mode.members.size(); ++i) {
            const auto it = m.row_index.find(mode.members[i]);
            if (it == m.row_index.end() || m.view.ids[it->second] != mode.member_ids[i])
                bundle_fail(b.dir, b.name, where + "references unknown ingredient id " +
                                               std::to_string(mode.member_ids[i]) + " ('" + mode.members[i] + "')");
        }
    }
}

const ModelBundle& Registry::get(std::string_view name) const {
    for (const auto& b : bundles)
        if (b->name == name) return *b;
    std::vector<std::string> names;
    for (const auto& b : bundles) names.push_back(b->name);
    throw Error("not_found", "unknown model '" + std::string(name) + "'", closest_names(names, name));
}

void Registry::add(std::shared_ptr<const ModelBundle> b) {
    for (const auto& x : bundles)
        if (x->name == b->name)
            fail("invalid_bundle", "duplicate model name '" + b->name + "' (" + x->dir.string() + " and " +
                                       b->dir.string() + ")");
    bundles.push_back(std::move(b));
}

Registry registry_from_dirs(const std::vector<fs::path>& dirs) {
    Registry r;
    std::map<std::string, std::shared_ptr<const CanonicalVocabulary>> vocabs;
    for (const auto& d : dirs) {
        // Bundles naming the same vocabulary file share one loaded copy.
        std::shared_ptr<const CanonicalVocabulary> shared;
        const auto manifest = d / "bundle.json";
        std::string key;
        if (fs::exists(manifest)) {
            const Json j = read_json_file(manifest);
            if (j.contains("vocab") && j["vocab"].is_string()) {
                std::error_code ec;
                key = fs::weakly_canonical(d / j["vocab"].get<std::string>(), ec).string();
                if (auto it = vocabs.find(key); it != vocabs.end()) shared = it->second;
            }
        }
        auto b = std::make_shared<ModelBundle>(load_bundle(d, shared));
        if (!key.empty()) vocabs.emplace(key, b->model.vocab);
        r.add(std::move(b));
    }
    if (r.bundles.empty()) fail("invalid_config", "registry lists no models");
    return r;
}

Registry load_registry(const fs::path& config) {
    const auto cfg = ConfigFile::load(config);
    cfg.require_known("", {"models", "bind", "cors_origin"});
    std::vector<fs::path> dirs;
    for (const auto& m : cfg.get_list("", "models")) dirs.push_back(cfg.resolve_path(m));
    Registry r = registry_from_dirs(dirs);
    r.bind = cfg.get_or("", "bind", r.bind);
    r.cors_origin = cfg.get_or("", "cors_origin", "");
    return r;
}

Json QueryApi::models() const {
    Json out = Json::array();
    for (const auto& b : reg_.bundles) {
        const auto& m = b->model;
        Json reports = Json::array();
        if (b->geometry) reports.push_back("geometry");
        if (b->probes) reports.push_back("probes");
        std::size_t factor_modes = 0;
        for (const auto& mode : m.atlas.modes) factor_modes += mode.kind == "factor";
        out.push_back({{"name", b->name},
                       {"dim", m.unit.cols()},
                       {"n_ingredients", m.size()},
                       {"n_modes", m.atlas.modes.size()},
                       {"n_factor_modes", factor_modes},
                       {"baseline", m.atlas.baseline},
                       {"reports", reports}});
    }
    return out;
}

Json QueryApi::ingredients(std::string_view prefix, std::optional<std::string> model, std::size_t limit) const {
    if (limit < 1 || limit > 1000) fail("invalid_input", "limit must be within [1, 1000]");
    const auto key = normalize_name(prefix);
    std::map<std::string, std::vector<std::string>> hits;
    for (const auto& b : reg_.bundles) {
        if (model && b->name != *model) continue;
        for (const auto& n : b->model.view.names)
            if (n.starts_with(key)) hits[n].push_back(b->name);
    }
    if (model) reg_.get(*model);
    Json res = Json::array();
    for (const auto& [n, ms] : hits) {
        if (res.size() >= limit) break;
        res.push_back({{"name", n}, {"models", ms}});
    }
    return Json{{"query", key}, {"results", res}};
}

Json QueryApi::neighbors(std::string_view model, std::string_view seed, std::size_t k) const {
    const auto& m = reg_.get(model).model;
    const auto row = m.resolve(seed);
    const auto nb = nearest_neighbors(m, row, checked_k(k));
    return Json{{"model", m.name}, {"seed", m.view.names[row]}, {"k", k}, {"neighbors", neighbor_list(m, nb)}};
}

Json QueryApi::modes(std::string_view model) const {
    const auto& m = reg_.get(model).model;
    Json ms = Json::array();
    for (const auto& mode : m.atlas.modes)
        ms.push_back({{"source", mode.source},
                      {"kind", mode.kind},
                      {"mode_id", mode.mode_id},
                      {"label", mode.label},
                      {"size", mode.members.size()},
                      {"coherence", mode.coherence},
                      {"pairwise", mode.pairwise},
                      {"members", mode.members}});
    return Json{{"model", m.name}, {"baseline", m.atlas.baseline}, {"modes", ms}};
}

Json QueryApi::closest_mode(std::string_view model, std::string_view seed, bool include_supervised) const {
    const auto& m = reg_.get(model).model;
    const auto row = m.resolve(seed);
    const auto s = m.unit_row(row);
    const auto hit = epicure::closest_mode(m.atlas, s, include_supervised);
    const auto& mode = *hit.mode;
    std::vector<Neighbor> members;
    for (const auto& name : mode.members) {
        const auto r = m.row_index.at(name);
        if (r == row) continue;
        members.push_back({r, m.unit_row(r).dot(mode.pole)});
    }
    std::sort(members.begin(), members.end(),
              [](const Neighbor& a, const Neighbor& b) { return a.cos != b.cos ? a.cos > b.cos : a.row < b.row; });
    if (members.size() > 5) members.resize(5);
    Json top = Json::array();
    for (const auto& x : members) top.push_back({{"name", m.view.names[x.row]}, {"cos_to_pole", x.cos}});
    return Json{{"model", m.name},
                {"seed", m.view.names[row]},
                {"mode",
                 {{"source", mode.source},
                  {"kind", mode.kind},
                  {"mode_id", mode.mode_id},
                  {"label", mode.label},
                  {"cos", hit.cos},
                  {"coherence", mode.coherence},
                  {"size", mode.members.size()},
                  {"top_members", top}}}};
}

Eigen::VectorXd QueryApi::resolve_target(const Model& m, const Json& target, PoleStyle style) const {
    if (!target.is_object() || !target.contains("kind") || !target["kind"].is_string() || !target.contains("spec"))
        fail("invalid_input", "target must be an object with 'kind' and 'spec'");
    const auto kind = target["kind"].get<std::string>();
    const auto& spec = target["spec"];
    if (kind == "supervised") {
        if (!spec.is_string()) fail("invalid_input", "supervised target spec must be a string like cuisine:South_Asian");
        return supervised_pole(m, spec.get<std::string>(), style);
    }
    if (kind == "mode") return mode_from_spec(m, spec).pole;
    if (kind == "blend") {
        if (!spec.is_array() || spec.size() < 2) fail("invalid_input", "blend target spec must list at least 2 items");
        std::vector<Eigen::VectorXd> poles;
        for (const auto& item : spec) {
            if (item.is_string() && item.get<std::string>().find(':') != std::string::npos)
                poles.push_back(supervised_pole(m, item.get<std::string>(), style));
            else
                poles.push_back(mode_from_spec(m, item).pole);
        }
        return blend_directions(poles);
    }
    fail("invalid_input", "target kind must be supervised, mode or blend, got '" + kind + "'");
}

Json QueryApi::rotate(const Json& req) const {
    if (!req.is_object()) fail("invalid_input", "rotate request must be a JSON object");
    auto str = [&](const char* key) {
        if (!req.contains(key) || !req[key].is_string()) fail("invalid_input", std::string("missing string field '") + key + "'");
        return req[key].get<std::string>();
    };
    const auto model = str("model");
    const auto seed = str("seed");
    if (!req.contains("angle_deg") || !req["angle_deg"].is_number()) fail("invalid_input", "missing numeric field 'angle_deg'");
    const double angle = req["angle_deg"].get<double>();
    std::size_t k = 5;
    if (req.contains("k")) {
        if (!req["k"].is_number_integer() || req["k"].get<long long>() < 1)
            fail("invalid_input", "'k' must be a positive integer");
        k = static_cast<std::size_t>(req["k"].get<long long>());
    }
    checked_k(k);
    const auto style = parse_pole_style(req.value("pole_style", std::string("diff")));
    if (!req.contains("target")) fail("invalid_input", "missing field 'target'");

    const auto& m = reg_.get(model).model;
    const auto row = m.resolve(seed);
    const Eigen::VectorXd pole = resolve_target(m, req["target"], style);
    const Eigen::VectorXd q = slerp_rotate(m.unit_row(row), pole, angle);
    const auto nb = neighbors_of_vector(m, q, k, row);
    return Json{{"model", m.name}, {"seed", m.view.names[row]}, {"k", k}, {"neighbors", neighbor_list(m, nb)}};
}

Json QueryApi::report(std::string_view model, std::string_view kind) const {
    const auto& b = reg_.get(model);
    const std::optional<Json>* r = nullptr;
    if (kind == "geometry") r = &b.geometry;
    else if (kind == "probes") r = &b.probes;
    else throw Error("not_found", "unknown report '" + std::string(kind) + "'", {"geometry", "probes"});
    if (!*r) fail("not_found", "model " + b.name + " has no " + std::string(kind) + " report");
    return **r;
}

Json error_payload(const Error& e) {
    return Json{{"error", {{"code", e.code()}, {"message", e.what()}, {"suggestions", e.suggestions()}}}};
}

int http_status(const Error& e) {
    const auto& c = e.code();
    if (c == "not_found") return 404;
    if (c == "corrupt_artifact" || c == "numeric") return 500;
    return 400;
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) fail("invalid_config", "bind must be host:port, got '" + bind + "'");
    int port = -1;
    try {
        port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) fail("invalid_config", "bad port in bind '" + bind + "'");
    return {bind.substr(0, colon), port};
}

HttpService::HttpService(const Registry& r) : reg_(r), api_(r), svr_(std::make_unique<httplib::Server>()) {
    // No SO_REUSEPORT.
    svr_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    install_routes();
}

HttpService::~HttpService() { stop(); }

namespace {

void send_json(httplib::Response& res, const Json& j, int status = 200) {
    res.status = status;
    res.set_content(dump_json(j), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, f(req));
        } catch (const Error& e) {
            send_json(res, error_payload(e), http_status(e));
        } catch (const std::exception& e) {
            send_json(res, error_payload(Error("internal", e.what())), 500);
        }
    };
}

std::string required(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) fail("invalid_input", std::string("missing query parameter '") + key + "'");
    return req.get_param_value(key);
}

std::size_t param_size(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const auto v = req.get_param_value(key);
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        fail("invalid_input", std::string("parameter '") + key + "' must be a non-negative integer, got '" + v + "'");
    }
}

bool param_bool(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return false;
    const auto v = req.get_param_value(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    fail("invalid_input", std::string("parameter '") + key + "' must be true or false");
}

}  // namespace

void HttpService::install_routes() {
    auto& s = *svr_;
    const auto& api = api_;
    s.Get("/v1/models", guarded([&api](const httplib::Request&) { return api.models(); }));
    s.Get("/v1/ingredients", guarded([&api](const httplib::Request& r) {
              std::optional<std::string> model;
              if (r.has_param("model")) model = r.get_param_value("model");
              return api.ingredients(r.has_param("q") ? r.get_param_value("q") : "", model, param_size(r, "limit", 20));
          }));
    s.Get("/v1/neighbors", guarded([&api](const httplib::Request& r) {
              return api.neighbors(required(r, "model"), required(r, "seed"), param_size(r, "k", 5));
          }));
    s.Get("/v1/modes", guarded([&api](const httplib::Request& r) { return api.modes(required(r, "model")); }));
    s.Get("/v1/modes/closest", guarded([&api](const httplib::Request& r) {
              return api.closest_mode(required(r, "model"), required(r, "seed"), param_bool(r, "include_supervised"));
          }));
    s.Post("/v1/rotate", guarded([&api](const httplib::Request& r) {
               Json body;
               try {
                   body = Json::parse(r.body);
               } catch (const Json::exception& e) {
                   fail("invalid_input", std::string("request body is not valid JSON: ") + e.what());
               }
               return api.rotate(body);
           }));
    s.Get(R"(/v1/reports/([a-z]+))", guarded([&api](const httplib::Request& r) {
              return api.report(required(r, "model"), r.matches[1].str());
          }));
    s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const int status = res.status;
        send_json(res, error_payload(Error(status == 404 ? "unknown_route" : "http_error",
                                           "no handler for " + req.method + " " + req.path)),
                  status);
    });
    if (!reg_.cors_origin.empty()) {
        const auto origin = reg_.cors_origin;
        s.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Vary", "Origin");
        });
        s.Options(R"(/v1/.*)", [origin](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
    }
}

int HttpService::bind(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = svr_->bind_to_any_port(host);
        if (bound < 0) fail("port_busy", "could not bind " + host);
    } else if (!svr_->bind_to_port(host, port)) {
        fail("port_busy", "could not bind " + host + ":" + std::to_string(port) + " (address in use?)");
    }
    return bound;
}

void HttpService::run() { svr_->listen_after_bind(); }

void HttpService::stop() {
    if (svr_ && svr_->is_running()) svr_->stop();
}

}  // namespace epicure
