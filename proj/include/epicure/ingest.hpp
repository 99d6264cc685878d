#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "epicure/artifact.hpp"

namespace epicure {

using IngredientId = std::uint32_t;

/// The eight cuisine macro-regions. Enumerator order is the canonical tag order.
enum class CuisineRegion : std::uint8_t {
    EastAsian,
    WesternAtlantic,
    Mediterranean,
    EasternEuropean,
    SoutheastAsian,
    SouthAsian,
    LatinAmerican,
    Japanese,
};

inline constexpr std::size_t kNumRegions = 8;
inline constexpr std::size_t kMaxCuisineTags = 3;

std::string_view region_name(CuisineRegion r);
/// Accepts any spelling that normalizes to a region name ("South Asian", "south_asian").
std::optional<CuisineRegion> parse_region(std::string_view label);
const std::array<CuisineRegion, kNumRegions>& all_regions();

struct IngredientEntry {
    IngredientId id = 0;
    std::string name;
    std::optional<std::string> flavordb_anchor;
    std::optional<std::string> usda_anchor;
    std::vector<CuisineRegion> cuisine_tags;  // sorted, unique, at most 3
    std::optional<std::string> food_group;
    std::optional<int> nova_class;  // 1..4
    std::map<std::string, double> continuous_scores;

    bool cuisine_specific() const { return !cuisine_tags.empty(); }
    bool has_tag(CuisineRegion r) const;

    bool operator==(const IngredientEntry&) const = default;
};

class CanonicalVocabulary {
public:
    CanonicalVocabulary() = default;
    /// Assigns dense ids in input order; throws on normalized-name collisions.
    explicit CanonicalVocabulary(std::vector<IngredientEntry> entries,
                                 std::vector<std::string> probe_names = {});

    std::size_t size() const { return entries_.size(); }
    const IngredientEntry& operator[](IngredientId id) const { return entries_.at(id); }
    const std::vector<IngredientEntry>& entries() const { return entries_; }
    /// Score columns in file order.
    const std::vector<std::string>& probe_names() const { return probe_names_; }

    std::optional<IngredientId> find(std::string_view name) const;
    std::vector<std::string> names() const;

    bool operator==(const CanonicalVocabulary& o) const {
        return entries_ == o.entries_ && probe_names_ == o.probe_names_;
    }

private:
    std::vector<IngredientEntry> entries_;
    std::vector<std::string> probe_names_;
    std::unordered_map<std::string, IngredientId> name_index_;
};

CanonicalVocabulary load_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const CanonicalVocabulary& vocab, const std::filesystem::path& path);
/// Parses vocabulary CSV text; `origin` names the source in error messages.
CanonicalVocabulary parse_vocabulary(const std::string& text, const std::string& origin = "<vocab>");

struct Recipe {
    std::string id;
    std::vector<IngredientId> ingredients;  // sorted, unique, non-empty
    std::uint32_t file_index = 0;
    std::uint32_t line = 0;

    bool pairless() const { return ingredients.size() < 2; }
    bool operator==(const Recipe&) const = default;
};

struct MatchedCorpus {
    std::vector<Recipe> recipes;        // recipes with at least one match, in (file, line) order
    std::size_t n_total_input = 0;      // readable records
    std::size_t n_matched = 0;
    std::size_t n_malformed = 0;
    std::size_t n_raw_names = 0;
    std::size_t n_unmatched_names = 0;
    std::size_t vocab_size = 0;
    std::map<std::string, std::size_t> unmatched_counts;  // normalized name -> occurrences

    std::size_t n_pairless() const;
    bool operator==(const MatchedCorpus&) const = default;
};

/// Reads newline-delimited {"id":..., "ingredients":[...]} records. Files are
/// parsed by up to `workers` threads; the result is independent of `workers`.
MatchedCorpus load_recipes(const std::vector<std::filesystem::path>& paths,
                           const CanonicalVocabulary& vocab, unsigned workers = 1);

/// Expands a shell glob (or a plain path) into a sorted path list.
std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

Json ingest_report(const MatchedCorpus& corpus, const std::vector<std::filesystem::path>& paths);

void save_corpus(const MatchedCorpus& corpus, const std::filesystem::path& path);
MatchedCorpus load_corpus(const std::filesystem::path& path);

}  // namespace epicure
