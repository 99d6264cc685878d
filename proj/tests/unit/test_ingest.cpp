#include <doctest.h>

#include <fstream>
#include <set>

#include "epicure/artifact.hpp"
#include "epicure/ingest.hpp"
#include "support.hpp"

using namespace epicure;
namespace fs = std::filesystem;

namespace {

fs::path write(const fs::path& p, const std::string& text) {
    write_text_file(p, text);
    return p;
}

}  // namespace

TEST_CASE("single-row vocabulary is universal") {
    const auto v = parse_vocabulary("name\nsalt\n");
    REQUIRE(v.size() == 1);
    CHECK(v[0].name == "salt");
    CHECK_FALSE(v[0].cuisine_specific());
    CHECK(v.find("  SALT ") == IngredientId{0});
}

TEST_CASE("normalization collisions name both rows") {
    try {
        parse_vocabulary("name\nSalt\nsalt \n", "v.csv");
        FAIL("expected duplicate_name");
    } catch (const Error& e) {
        CHECK(e.code() == "duplicate_name");
        const std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("Salt") != std::string::npos);
    }
}

TEST_CASE("unknown cuisine labels and bad cells are errors") {
    CHECK_THROWS_WITH_AS(parse_vocabulary("name,cuisine_tags\nx,Atlantis\n"), doctest::Contains("Atlantis"), Error);
    CHECK_THROWS_AS(parse_vocabulary("name,nova\nx,7\n"), Error);
    CHECK_THROWS_AS(parse_vocabulary("name,cuisine_tags\nx,Japanese|East_Asian|South_Asian|Mediterranean\n"), Error);
    CHECK_THROWS_AS(parse_vocabulary("name,score:cf_citrus\nx,abc\n"), Error);
    CHECK_THROWS_AS(parse_vocabulary("flavor\nx\n"), Error);
}

TEST_CASE("vocabulary fields parse and round-trip through write_vocabulary") {
    const std::string text =
        "name,flavordb_id,usda_id,food_group,nova,cuisine_tags,score:cf_citrus,score:usda_protein_g\n"
        "Basmati Rice,f1,u1,Grains,1,South Asian|east_asian,0.25,7.5\n"
        "miso,,u2,Legumes,3,Japanese,,12\n"
        "salt,f3,,,,,1.0,\n";
    const auto v = parse_vocabulary(text);
    REQUIRE(v.size() == 3);
    CHECK(v.probe_names() == std::vector<std::string>{"cf_citrus", "usda_protein_g"});
    CHECK(v[0].name == "basmati_rice");
    CHECK(v[0].cuisine_tags == std::vector<CuisineRegion>{CuisineRegion::EastAsian, CuisineRegion::SouthAsian});
    CHECK(v[0].food_group == "grains");
    CHECK(v[0].nova_class == 1);
    CHECK(v[1].continuous_scores.count("cf_citrus") == 0);
    CHECK(v[1].continuous_scores.at("usda_protein_g") == 12.0);
    CHECK_FALSE(v[2].usda_anchor.has_value());
    CHECK_FALSE(v[2].nova_class.has_value());

    const auto dir = testsupport::scratch_dir("vocab_roundtrip");
    write_vocabulary(v, dir / "v.csv");
    CHECK(load_vocabulary(dir / "v.csv") == v);
}

TEST_CASE("region names parse in any spelling") {
    for (const auto r : all_regions()) {
        CHECK(parse_region(region_name(r)) == r);
        CHECK(parse_region(normalize_name(region_name(r))) == r);
    }
    CHECK(parse_region("South Asian") == CuisineRegion::SouthAsian);
    CHECK_FALSE(parse_region("Atlantean").has_value());
}

TEST_CASE("three-recipe example: unmatched recipe dropped, single match flagged pairless") {
    const auto dir = testsupport::scratch_dir("ingest_small");
    const auto vocab = parse_vocabulary("name\nsalt\nonion\n");
    const auto f = write(dir / "r.jsonl",
                         "{\"id\":\"a\",\"ingredients\":[\"salt\",\"onion\"]}\n"
                         "{\"id\":\"b\",\"ingredients\":[\"salt\"]}\n"
                         "{\"id\":\"c\",\"ingredients\":[\"unknown_x\"]}\n");
    const auto c = load_recipes({f}, vocab);
    CHECK(c.n_total_input == 3);
    CHECK(c.n_matched == 2);
    REQUIRE(c.recipes.size() == 2);
    CHECK_FALSE(c.recipes[0].pairless());
    CHECK(c.recipes[1].pairless());
    CHECK(c.n_pairless() == 1);
    CHECK(c.unmatched_counts.at("unknown_x") == 1);
}

TEST_CASE("duplicate names within a recipe collapse") {
    const auto dir = testsupport::scratch_dir("ingest_dedup");
    const auto vocab = parse_vocabulary("name\nsalt\nonion\n");
    const auto f = write(dir / "r.jsonl", "{\"id\":\"a\",\"ingredients\":[\"salt\",\"Salt \",\"onion\"]}\n");
    const auto c = load_recipes({f}, vocab);
    REQUIRE(c.recipes.size() == 1);
    CHECK(c.recipes[0].ingredients == std::vector<IngredientId>{0, 1});
}

TEST_CASE("malformed records are counted and skipped; no readable records is an error") {
    const auto dir = testsupport::scratch_dir("ingest_malformed");
    const auto vocab = parse_vocabulary("name\nsalt\nonion\n");
    const auto f = write(dir / "r.jsonl",
                         "{\"id\":\"a\",\"ingredients\":[\"salt\",\"onion\"]}\n"
                         "not json\n"
                         "{\"id\":\"b\",\"ingredients\":\"salt\"}\n"
                         "\n"
                         "{\"id\":\"c\"}\n");
    const auto c = load_recipes({f}, vocab);
    CHECK(c.n_malformed == 3);
    CHECK(c.n_total_input == 1);
    const auto bad = write(dir / "bad.jsonl", "garbage\n");
    CHECK_THROWS_AS(load_recipes({bad}, vocab), Error);
}

TEST_CASE("500 synthetic recipes over a 50-name vocabulary match an independent recount") {
    const auto dir = testsupport::scratch_dir("ingest_recount");
    const auto vocab = testsupport::numbered_vocab(50);
    Rng rng(17);
    std::vector<fs::path> files;
    std::size_t expect_matched = 0, expect_raw = 0, expect_unmatched = 0, expect_pairless = 0;
    std::vector<std::set<std::string>> expect_sets;
    for (int k = 0; k < 3; ++k) {
        std::ofstream out(dir / ("p" + std::to_string(k) + ".jsonl"));
        for (int r = 0; r < 500 / 3 + (k == 0 ? 2 : 0); ++r) {
            Json names = Json::array();
            const auto n = uniform_index(rng, 6);
            std::set<std::string> known;
            for (std::uint64_t j = 0; j < n; ++j) {
                if (uniform01(rng) < 0.2) {
                    names.push_back("zz" + std::to_string(uniform_index(rng, 5)));
                    ++expect_unmatched;
                } else {
                    const auto name = "i" + std::to_string(uniform_index(rng, 50));
                    names.push_back(name);
                    known.insert(name);
                }
                ++expect_raw;
            }
            if (!known.empty()) {
                ++expect_matched;
                expect_pairless += known.size() < 2;
                expect_sets.push_back(known);
            }
            out << Json{{"id", std::to_string(r)}, {"ingredients", names}}.dump() << "\n";
        }
        files.push_back(dir / ("p" + std::to_string(k) + ".jsonl"));
    }
    const auto c = load_recipes(files, vocab);
    CHECK(c.n_total_input == 500);
    CHECK(c.n_matched == expect_matched);
    CHECK(c.n_raw_names == expect_raw);
    CHECK(c.n_unmatched_names == expect_unmatched);
    CHECK(c.n_pairless() == expect_pairless);
    REQUIRE(c.recipes.size() == expect_sets.size());
    std::size_t total_ids = 0;
    for (std::size_t i = 0; i < c.recipes.size(); ++i) {
        std::set<std::string> got;
        for (auto id : c.recipes[i].ingredients) got.insert(vocab[id].name);
        CHECK(got == expect_sets[i]);
        CHECK(c.recipes[i].pairless() == (c.recipes[i].ingredients.size() < 2));
        total_ids += c.recipes[i].ingredients.size();
    }
    CHECK(total_ids <= c.n_raw_names);

    SUBCASE("sharded loading is identical to single-worker order") {
        CHECK(load_recipes(files, vocab, 3) == c);
    }
    SUBCASE("corpus artifact round-trips") {
        save_corpus(c, dir / "corpus.bin");
        CHECK(load_corpus(dir / "corpus.bin") == c);
    }
    SUBCASE("glob expansion is sorted") {
        const auto got = expand_glob((dir / "p*.jsonl").string());
        CHECK(got == files);
        CHECK_THROWS_AS(expand_glob((dir / "none*.jsonl").string()), Error);
    }
    SUBCASE("report lists file basenames and counts") {
        const auto rep = ingest_report(c, files);
        CHECK(rep.at("files").size() == 3);
        CHECK(rep.at("files")[0] == "p0.jsonl");
        CHECK(rep.at("n_matched") == expect_matched);
    }
}
