// Writes the planted toy fixture: vocab.csv, recipes/*.jsonl, compounds.csv.
//
// 200 ingredients: sa_00..sa_59 (South_Asian), ea_00..ea_59 (East_Asian), rice and
// u_00..u_78 (universal). 5,000 recipes drawn from a regional pool or the universal
// pool. 30 compounds in 3 types (citrus, earthy, spicy) attach to 90 hub ingredients
// independently of region; score:cf_citrus counts an ingredient's citrus compounds.

#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "epicure/artifact.hpp"
#include "epicure/common.hpp"

using namespace epicure;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kRegional = 60;
constexpr std::size_t kUniversal = 80;
constexpr std::size_t kIngredients = 2 * kRegional + kUniversal;
constexpr std::size_t kRecipes = 5000;
constexpr std::size_t kFiles = 4;
constexpr std::size_t kCompoundsPerType = 10;
constexpr std::size_t kHubs = 90;

const char* const kTypes[] = {"citrus", "earthy", "spicy"};
const char* const kGroups[] = {"vegetable", "spice", "grain", "dairy", "fruit"};

std::string two_digits(std::size_t n) { return (n < 10 ? "0" : "") + std::to_string(n); }

std::string name_of(std::size_t i) {
    if (i < kRegional) return "sa_" + two_digits(i);
    if (i < 2 * kRegional) return "ea_" + two_digits(i - kRegional);
    if (i == 2 * kRegional) return "rice";
    return "u_" + two_digits(i - 2 * kRegional - 1);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t n) { return lo + uniform_index(rng, n); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the planted toy fixture"};
    std::string out = "tests/data/toy";
    std::uint64_t seed = 20240607;
    app.add_option("--out", out, "Output directory");
    app.add_option("--seed", seed);
    CLI11_PARSE(app, argc, argv);

    Rng rng(seed);
    const fs::path dir(out);
    fs::create_directories(dir / "recipes");

    // Hubs are spread evenly over the three pools; each gets a dominant compound type.
    std::vector<int> hub_type(kIngredients, -1);
    std::vector<std::size_t> order(kIngredients);
    for (std::size_t i = 0; i < kIngredients; ++i) order[i] = i;
    shuffle_in_place(order, rng);
    for (std::size_t h = 0; h < kHubs; ++h) hub_type[order[h]] = static_cast<int>(h % 3);

    std::vector<std::set<std::size_t>> links(kIngredients);  // compound indices
    for (std::size_t i = 0; i < kIngredients; ++i) {
        if (hub_type[i] < 0) continue;
        const std::size_t t = static_cast<std::size_t>(hub_type[i]);
        while (links[i].size() < 4) links[i].insert(t * kCompoundsPerType + pick(rng, 0, kCompoundsPerType));
        if (uniform01(rng) < 0.5) links[i].insert(pick(rng, 0, 3 * kCompoundsPerType));
    }
    std::vector<std::string> compound_cats(3 * kCompoundsPerType);
    for (std::size_t c = 0; c < compound_cats.size(); ++c) {
        compound_cats[c] = kTypes[c / kCompoundsPerType];
        if (c % kCompoundsPerType == 0) compound_cats[c] += std::string("|") + kTypes[(c / kCompoundsPerType + 1) % 3];
    }

    {
        std::ofstream f(dir / "vocab.csv");
        f << "name,flavordb_id,usda_id,food_group,nova,cuisine_tags,score:cf_citrus,score:usda_fiber\n";
        for (std::size_t i = 0; i < kIngredients; ++i) {
            const std::string tag = i < kRegional ? "South_Asian" : i < 2 * kRegional ? "East_Asian" : "";
            const char* group = i == 2 * kRegional ? "grain" : kGroups[pick(rng, 0, 5)];
            const int nova = 1 + static_cast<int>(pick(rng, 0, 4));
            f << name_of(i) << ",fdb" << i << ",usda" << i << "," << group << "," << nova << "," << tag << ",";
            if (hub_type[i] >= 0) {
                std::size_t citrus = 0;
                for (auto c : links[i])
                    if (compound_cats[c].find("citrus") != std::string::npos) ++citrus;
                f << citrus + 0.1 * uniform01(rng);
            }
            f << "," << 5.0 * uniform01(rng) << "\n";
        }
    }
    {
        std::ofstream f(dir / "compounds.csv");
        f << "ingredient_name,compound_id,categories\n";
        for (std::size_t i = 0; i < kIngredients; ++i)
            for (auto c : links[i]) f << name_of(i) << ",cmp" << c << "," << compound_cats[c] << "\n";
    }
    {
        std::vector<std::ofstream> files;
        for (std::size_t k = 0; k < kFiles; ++k) files.emplace_back(dir / "recipes" / ("part" + std::to_string(k) + ".jsonl"));
        const std::size_t rice = 2 * kRegional;
        for (std::size_t r = 0; r < kRecipes; ++r) {
            const double u = uniform01(rng);
            const int pool = u < 0.4 ? 0 : u < 0.8 ? 1 : 2;
            const std::size_t size = pick(rng, 5, 6);
            std::set<std::size_t> items;
            if (pool < 2 && uniform01(rng) < 0.6) items.insert(rice);
            while (items.size() < size) {
                if (pool < 2 && uniform01(rng) < 0.75) items.insert(pick(rng, static_cast<std::size_t>(pool) * kRegional, kRegional));
                else items.insert(pick(rng, rice + 1, kUniversal - 1));
            }
            Json names = Json::array();
            for (auto i : items) names.push_back(name_of(i));
            if (r % 97 == 0) names.push_back("water");
            files[r % kFiles] << Json{{"id", "r" + std::to_string(r)}, {"ingredients", names}}.dump() << "\n";
        }
    }
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}
