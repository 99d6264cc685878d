#include <doctest.h>

#include "epicure/common.hpp"
#include "epicure/config.hpp"

using namespace epicure;

TEST_CASE("sections, comments and lists parse") {
    const auto c = ConfigFile::parse(
        "top = 1\n"
        "# comment\n"
        "[inputs]\n"
        "vocab = vocab.csv   # trailing\n"
        "recipes = [a/*.jsonl, \"b.jsonl\"]\n"
        "[serve]\n"
        "bind = 127.0.0.1:8080\n");
    CHECK(c.get_or("", "top", "") == "1");
    CHECK(c.get("inputs", "vocab") == "vocab.csv");
    CHECK(c.get_list("inputs", "recipes") == std::vector<std::string>{"a/*.jsonl", "b.jsonl"});
    CHECK(c.get_list("inputs", "vocab") == std::vector<std::string>{"vocab.csv"});
    CHECK(c.get("serve", "bind") == "127.0.0.1:8080");
    CHECK_FALSE(c.has("serve", "cors_origin"));
    CHECK(c.get_or("serve", "cors_origin", "none") == "none");
}

TEST_CASE("malformed configs are rejected") {
    CHECK_THROWS_AS(ConfigFile::parse("[open\n"), Error);
    CHECK_THROWS_AS(ConfigFile::parse("novalue\n"), Error);
    CHECK_THROWS_AS(ConfigFile::parse("a = 1\na = 2\n"), Error);
    CHECK_THROWS_AS(ConfigFile::parse("x = [a, b\n").get_list("", "x"), Error);
}

TEST_CASE("unknown keys raise invalid_config with suggestions") {
    const auto c = ConfigFile::parse("[walk]\nwalk_lenght = 5\n");
    try {
        c.require_known("walk", {"walk_length", "walks_per_node"});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == "invalid_config");
        REQUIRE_FALSE(e.suggestions().empty());
        CHECK(e.suggestions().front() == "walk_length");
    }
}

TEST_CASE("scalar parsers validate") {
    CHECK(parse_size("12", "k") == 12);
    CHECK_THROWS_AS(parse_size("-1", "k"), Error);
    CHECK_THROWS_AS(parse_size("1.5", "k"), Error);
    CHECK(parse_double("2.5e-3", "k") == doctest::Approx(0.0025));
    CHECK_THROWS_AS(parse_double("abc", "k"), Error);
    CHECK(parse_bool("true", "k"));
    CHECK_FALSE(parse_bool("false", "k"));
    CHECK_THROWS_AS(parse_bool("yes please", "k"), Error);
}

TEST_CASE("relative paths resolve against the config directory") {
    auto c = ConfigFile::parse("");
    CHECK(c.resolve_path("x.csv") == std::filesystem::path("x.csv"));
    CHECK(c.resolve_path("/abs/x.csv") == std::filesystem::path("/abs/x.csv"));
}
