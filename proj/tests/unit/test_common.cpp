#include <doctest.h>

#include <cmath>
#include <set>

#include "epicure/artifact.hpp"
#include "epicure/common.hpp"
#include "epicure/csv.hpp"
#include "support.hpp"

using namespace epicure;

TEST_CASE("normalize_name lowercases, trims and collapses separators") {
    CHECK(normalize_name("  Olive   Oil ") == "olive_oil");
    CHECK(normalize_name("Salt ") == "salt");
    CHECK(normalize_name("bok-choy") == "bok_choy");
    CHECK(normalize_name("a _- b") == "a_b");
    CHECK(normalize_name("") == "");
}

TEST_CASE("closest_names ranks prefix and edit-distance matches") {
    const std::vector<std::string> pool{"rice", "rice_vinegar", "lime", "onion"};
    const auto s = closest_names(pool, "rize", 2);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == "rice");
    CHECK(closest_names(pool, "ric", 1).front() == "rice");
}

TEST_CASE("percentile interpolates linearly between order statistics") {
    // numpy.percentile([1, 2, 3, 4], q) with linear interpolation
    CHECK(percentile({4, 1, 3, 2}, 0) == doctest::Approx(1.0));
    CHECK(percentile({4, 1, 3, 2}, 50) == doctest::Approx(2.5));
    CHECK(percentile({4, 1, 3, 2}, 2.5) == doctest::Approx(1.075));
    CHECK(percentile({4, 1, 3, 2}, 97.5) == doctest::Approx(3.925));
    CHECK(percentile({7}, 30) == 7.0);
    CHECK_THROWS_AS(percentile({}, 50), Error);
}

TEST_CASE("derive_seed is deterministic and key-sensitive") {
    CHECK(derive_seed(42, 1, 2) == derive_seed(42, 1, 2));
    CHECK(derive_seed(42, 1, 2) != derive_seed(42, 2, 1));
    CHECK(derive_seed(42, 1) != derive_seed(43, 1));
}

TEST_CASE("uniform01 stays in [0,1) and standard_normal has unit moments") {
    Rng rng(5);
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = uniform01(rng);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double z = standard_normal(rng);
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("shuffle_in_place is a permutation") {
    Rng rng(1);
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i;
    shuffle_in_place(v, rng);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 100);
}

TEST_CASE("csv split and join round-trip quoted fields") {
    const std::vector<std::string> fields{"plain", "with,comma", "with \"quote\"", ""};
    const auto line = csv::join_line(fields);
    CHECK(csv::split_line(line) == fields);
    CHECK(csv::split_line("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
    CHECK(csv::split_list("a||b|") == std::vector<std::string>{"a", "b"});
    CHECK_THROWS_AS(csv::split_line("a,\"b"), Error);
}

TEST_CASE("sha256 matches the published test vector") {
    CHECK(sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex(std::string("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("container round-trips header and sections") {
    const auto dir = testsupport::scratch_dir("container");
    Container c;
    c.header = {{"kind", "test"}, {"n", 3}};
    const std::vector<std::uint32_t> ints{1, 2, 3};
    c.add_section("ints", pack(std::span<const std::uint32_t>(ints)));
    write_container(dir / "x.bin", c);
    const auto back = read_container(dir / "x.bin");
    CHECK(back.header.at("kind") == "test");
    CHECK(unpack<std::uint32_t>(back.section("ints")) == ints);
    CHECK_FALSE(back.has_section("missing"));
    CHECK_THROWS_AS(back.section("missing"), Error);

    write_text_file(dir / "junk.bin", "not an artifact at all");
    CHECK_THROWS_AS(read_container(dir / "junk.bin"), Error);
}

TEST_CASE("dump_json is canonical") {
    const Json a = Json::parse(R"({"b":1,"a":[1,2]})");
    const Json b = Json::parse(R"({"a":[1,2],"b":1})");
    CHECK(dump_json(a) == dump_json(b));
    CHECK(dump_json(a).back() == '\n');
}
