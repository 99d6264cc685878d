#include <doctest.h>

#include <fstream>
#include <thread>

#include "epicure/artifact.hpp"
#include "epicure/service.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace epicure;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kN = 60;
constexpr std::size_t kDim = 8;

CanonicalVocabulary service_vocab() {
    std::vector<IngredientEntry> e(kN);
    for (std::size_t i = 0; i < kN; ++i) {
        e[i].name = "food_" + std::to_string(i);
        if (i < 20) e[i].cuisine_tags = {*parse_region("South_Asian")};
        else if (i < 40) e[i].cuisine_tags = {*parse_region("East_Asian")};
        e[i].food_group = i % 2 ? "spice" : "vegetable";
        e[i].nova_class = static_cast<int>(1 + i % 4);
    }
    return CanonicalVocabulary(std::move(e));
}

/// Writes vocab.csv once and a bundle per variant under `root`.
std::vector<fs::path> write_bundles(const fs::path& root, std::uint64_t seed, bool corrupt_atlas = false) {
    const auto vocab = service_vocab();
    write_vocabulary(vocab, root / "vocab.csv");
    std::vector<fs::path> dirs;
    for (const char* variant : {"cooc", "core", "chem"}) {
        Rng rng(seed++);
        RowMatrixD X(kN, kDim);
        for (std::size_t i = 0; i < kN; ++i)
            for (std::size_t j = 0; j < kDim; ++j)
                X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    standard_normal(rng) + (j == i / 20 ? 2.0 : 0.0);
        const auto emb = testsupport::embedding_from_rows(X, vocab, variant);
        std::vector<std::vector<std::size_t>> groups;
        for (std::size_t g = 0; g < 6; ++g) {
            std::vector<std::size_t> idx;
            for (std::size_t j = 0; j < 8; ++j) idx.push_back(g * 10 + j);
            groups.push_back(idx);
        }
        auto atlas = testsupport::atlas_from_groups(X, vocab, groups, variant);
        if (corrupt_atlas && std::string(variant) == "core") {
            atlas.modes[1].member_ids[2] = 987;
            atlas.modes[1].members[2] = "ghost";
        }
        const fs::path staging = root / (std::string(variant) + "_src");
        fs::create_directories(staging);
        save_embedding(emb, staging / "embedding.bin");
        save_atlas(atlas, staging / "atlas.json");
        write_text_file(staging / "geometry.json", dump_json(Json{{"pr", 3.5 + static_cast<double>(seed)}}));
        const fs::path dir = root / variant / "bundle";
        write_bundle(dir, {variant, root / "vocab.csv", staging / "embedding.bin", staging / "atlas.json",
                           staging / "geometry.json", std::nullopt});
        dirs.push_back(dir);
    }
    return dirs;
}

fs::path write_registry(const fs::path& root, const std::vector<fs::path>& dirs) {
    std::ofstream f(root / "registry.cfg");
    f << "models = [";
    for (std::size_t i = 0; i < dirs.size(); ++i) f << (i ? ", " : "") << fs::relative(dirs[i], root).generic_string();
    f << "]\nbind = 127.0.0.1:0\ncors_origin = http://localhost:5173\n";
    return root / "registry.cfg";
}

struct Served {
    std::unique_ptr<HttpService> svc;
    std::thread th;
    int port = 0;

    explicit Served(const Registry& r) : svc(std::make_unique<HttpService>(r)) {
        port = svc->bind("127.0.0.1", 0);
        th = std::thread([this] { svc->run(); });
        httplib::Client c("127.0.0.1", port);
        for (int i = 0; i < 200 && !c.Get("/v1/models"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ~Served() {
        svc->stop();
        th.join();
    }
};

std::string get_error_code(const std::string& body) { return Json::parse(body)["error"]["code"].get<std::string>(); }

}  // namespace

TEST_CASE("registry of three bundles lists three models") {
    const auto root = testsupport::scratch_dir("service_registry");
    const auto reg = load_registry(write_registry(root, write_bundles(root, 1)));
    REQUIRE(reg.bundles.size() == 3);
    CHECK(reg.bind == "127.0.0.1:0");
    CHECK(reg.cors_origin == "http://localhost:5173");
    const QueryApi api(reg);
    const auto models = api.models();
    REQUIRE(models.size() == 3);
    CHECK(models[0]["name"] == "cooc");
    CHECK(models[1]["name"] == "core");
    CHECK(models[2]["name"] == "chem");
    CHECK(models[0]["dim"] == kDim);
    CHECK(models[0]["n_ingredients"] == kN);
    // The three bundles share one vocabulary instance.
    CHECK(reg.bundles[0]->model.vocab == reg.bundles[1]->model.vocab);
}

TEST_CASE("atlas referencing an unknown id refuses to load, naming the bundle and id") {
    const auto root = testsupport::scratch_dir("service_bad_atlas");
    const auto dirs = write_bundles(root, 1, true);
    try {
        (void)load_registry(write_registry(root, dirs));
        FAIL("expected invalid_bundle");
    } catch (const Error& e) {
        CHECK(e.code() == "invalid_bundle");
        const std::string msg = e.what();
        CHECK(msg.find("core") != std::string::npos);
        CHECK(msg.find("987") != std::string::npos);
    }
}

TEST_CASE("bundle loading rejects missing and duplicate bundles") {
    const auto root = testsupport::scratch_dir("service_dupes");
    const auto dirs = write_bundles(root, 1);
    CHECK_THROWS_AS(load_bundle(root / "nowhere"), Error);
    try {
        (void)registry_from_dirs({dirs[0], dirs[0]});
        FAIL("expected duplicate");
    } catch (const Error& e) {
        CHECK(e.code() == "invalid_bundle");
        CHECK(std::string(e.what()).find("cooc") != std::string::npos);
    }
}

TEST_CASE("query api errors carry codes and suggestions") {
    const auto root = testsupport::scratch_dir("service_errors");
    const auto reg = registry_from_dirs(write_bundles(root, 2));
    const QueryApi api(reg);
    try {
        (void)api.neighbors("cooc", "food_77x", 5);
        FAIL("expected not_found");
    } catch (const Error& e) {
        CHECK(e.code() == "not_found");
        CHECK(http_status(e) == 404);
        CHECK(!e.suggestions().empty());
        const auto p = error_payload(e);
        CHECK(p["error"]["code"] == "not_found");
        CHECK(p["error"]["suggestions"].is_array());
    }
    try {
        (void)api.neighbors("cocc", "food_1", 5);
        FAIL("expected not_found");
    } catch (const Error& e) {
        CHECK(e.code() == "not_found");
        CHECK(e.suggestions().front() == "cooc");
    }
    CHECK_THROWS_AS(api.neighbors("cooc", "food_1", 0), Error);
    CHECK_THROWS_AS(api.rotate(Json{{"model", "cooc"}, {"seed", "food_1"}}), Error);
    CHECK(api.ingredients("food_1", std::nullopt, 3)["results"].size() == 3);
}

TEST_CASE("rotate at angle 0 equals neighbors, and mode targets resolve") {
    const auto root = testsupport::scratch_dir("service_rotate");
    const auto reg = registry_from_dirs(write_bundles(root, 3));
    const QueryApi api(reg);
    for (const char* model : {"cooc", "core", "chem"}) {
        const Json req{{"model", model},
                       {"seed", "food_3"},
                       {"target", {{"kind", "supervised"}, {"spec", "cuisine:East_Asian"}}},
                       {"angle_deg", 0},
                       {"k", 5}};
        CHECK(dump_json(api.rotate(req)) == dump_json(api.neighbors(model, "food_3", 5)));
    }
    const Json by_mode{{"model", "cooc"},
                       {"seed", "food_3"},
                       {"target", {{"kind", "mode"}, {"spec", "F_2/M0"}}},
                       {"angle_deg", 90},
                       {"k", 5}};
    const auto r = api.rotate(by_mode);
    CHECK(r["neighbors"].size() == 5);
    const Json blend{{"model", "cooc"},
                     {"seed", "food_3"},
                     {"target", {{"kind", "blend"}, {"spec", {"cuisine:East_Asian", "F_2/M0"}}}},
                     {"angle_deg", 30}};
    CHECK(api.rotate(blend)["neighbors"].size() == 5);
    const auto cm = api.closest_mode("cooc", "food_3", false);
    CHECK(cm["mode"]["kind"] == "factor");
    for (const auto& m : cm["mode"]["top_members"]) CHECK(m["name"] != "food_3");
}

TEST_CASE("http service endpoints") {
    const auto root = testsupport::scratch_dir("service_http");
    const auto dirs = write_bundles(root, 4);
    const auto reg = load_registry(write_registry(root, dirs));
    const QueryApi api(reg);
    Served s(reg);
    httplib::Client c("127.0.0.1", s.port);

    SUBCASE("models") {
        auto res = c.Get("/v1/models");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(Json::parse(res->body).size() == 3);
        CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    }
    SUBCASE("neighbors match the query api byte for byte") {
        auto res = c.Get("/v1/neighbors?model=core&seed=food_12&k=5");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->body == dump_json(api.neighbors("core", "food_12", 5)));
        CHECK(Json::parse(res->body)["neighbors"].size() == 5);
    }
    SUBCASE("rotate at angle 0 equals neighbors") {
        const Json req{{"model", "chem"},
                       {"seed", "food_12"},
                       {"target", {{"kind", "supervised"}, {"spec", "cuisine:South_Asian"}}},
                       {"angle_deg", 0},
                       {"k", 5}};
        auto rot = c.Post("/v1/rotate", req.dump(), "application/json");
        auto nb = c.Get("/v1/neighbors?model=chem&seed=food_12&k=5");
        REQUIRE(rot);
        REQUIRE(nb);
        CHECK(rot->status == 200);
        CHECK(rot->body == nb->body);
    }
    SUBCASE("unknown ingredient is 404 with suggestions") {
        auto res = c.Get("/v1/neighbors?model=cooc&seed=food_1x&k=5");
        REQUIRE(res);
        CHECK(res->status == 404);
        const auto j = Json::parse(res->body);
        CHECK(j["error"]["code"] == "not_found");
        CHECK(!j["error"]["suggestions"].empty());
    }
    SUBCASE("malformed requests are 400 with codes") {
        for (const char* path : {"/v1/neighbors?model=cooc&seed=food_1&k=abc", "/v1/neighbors?seed=food_1",
                                 "/v1/neighbors?model=cooc&seed=food_1&k=0",
                                 "/v1/modes/closest?model=cooc&seed=food_1&include_supervised=maybe"}) {
            auto res = c.Get(path);
            REQUIRE(res);
            CHECK(res->status == 400);
            CHECK(get_error_code(res->body) == "invalid_input");
        }
        auto bad_json = c.Post("/v1/rotate", "{not json", "application/json");
        REQUIRE(bad_json);
        CHECK(bad_json->status == 400);
        CHECK(get_error_code(bad_json->body) == "invalid_input");
        auto bad_angle = c.Post("/v1/rotate",
                                Json{{"model", "cooc"},
                                     {"seed", "food_1"},
                                     {"target", {{"kind", "supervised"}, {"spec", "cuisine:South_Asian"}}},
                                     {"angle_deg", 120}}
                                    .dump(),
                                "application/json");
        REQUIRE(bad_angle);
        CHECK(bad_angle->status == 400);
        auto route = c.Get("/v1/nothing");
        REQUIRE(route);
        CHECK(route->status == 404);
        CHECK(get_error_code(route->body) == "unknown_route");
    }
    SUBCASE("modes, closest mode and reports round-trip the on-disk artifacts") {
        auto modes = c.Get("/v1/modes?model=cooc");
        REQUIRE(modes);
        const auto j = Json::parse(modes->body);
        const auto disk = load_atlas(dirs[0] / "atlas.json");
        REQUIRE(j["modes"].size() == disk.modes.size());
        for (std::size_t i = 0; i < disk.modes.size(); ++i) {
            CHECK(j["modes"][i]["source"] == disk.modes[i].source);
            CHECK(j["modes"][i]["members"].get<std::vector<std::string>>() == disk.modes[i].members);
            CHECK(j["modes"][i]["coherence"].get<double>() == disk.modes[i].coherence);
        }
        CHECK(j["baseline"].get<double>() == disk.baseline);
        auto geo = c.Get("/v1/reports/geometry?model=core");
        REQUIRE(geo);
        CHECK(geo->status == 200);
        CHECK(Json::parse(geo->body) == Json::parse(read_text_file(dirs[1] / "geometry.json")));
        auto probes = c.Get("/v1/reports/probes?model=core");
        REQUIRE(probes);
        CHECK(probes->status == 404);
        auto closest = c.Get("/v1/modes/closest?model=cooc&seed=food_5");
        REQUIRE(closest);
        CHECK(closest->body == dump_json(api.closest_mode("cooc", "food_5", false)));
        auto ing = c.Get("/v1/ingredients?q=FOOD_5");
        REQUIRE(ing);
        CHECK(Json::parse(ing->body)["results"][0]["name"] == "food_5");
    }
    SUBCASE("cors preflight") {
        auto res = c.Options("/v1/rotate");
        REQUIRE(res);
        CHECK(res->status == 204);
        CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
    }
    SUBCASE("concurrent identical queries return identical bodies") {
        const std::string expect = dump_json(api.neighbors("cooc", "food_30", 10));
        std::vector<std::thread> threads;
        std::vector<std::vector<std::string>> bodies(8);
        for (int t = 0; t < 8; ++t)
            threads.emplace_back([&, t] {
                httplib::Client ct("127.0.0.1", s.port);
                for (int i = 0; i < 25; ++i) {
                    auto r = ct.Get("/v1/neighbors?model=cooc&seed=food_30&k=10");
                    bodies[t].push_back(r ? r->body : std::string("<no response>"));
                }
            });
        for (auto& th : threads) th.join();
        for (const auto& bs : bodies)
            for (const auto& b : bs) CHECK(b == expect);
    }
}

TEST_CASE("binding a busy port is a startup error") {
    const auto root = testsupport::scratch_dir("service_port");
    const auto reg = registry_from_dirs(write_bundles(root, 5));
    Served first(reg);
    HttpService second(reg);
    try {
        (void)second.bind("127.0.0.1", first.port);
        FAIL("expected port_busy");
    } catch (const Error& e) {
        CHECK(e.code() == "port_busy");
    }
}

TEST_CASE("bind parsing") {
    CHECK(parse_bind("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
    CHECK(parse_bind("0.0.0.0:0").second == 0);
    CHECK_THROWS(parse_bind("localhost"));
    CHECK_THROWS(parse_bind("h:99999"));
    CHECK_THROWS(parse_bind("h:abc"));
}
