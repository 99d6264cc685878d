#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epicure/artifact.hpp"
#include "epicure/ingest.hpp"

namespace epicure {

/// Node id in the union namespace: ingredients occupy [0, V), typed compounds [V, V + C).
using NodeId = std::uint32_t;

inline constexpr std::size_t kNumCompoundTypes = 15;

/// The 15 flavor-category compound types (14 named families plus a residual).
const std::array<std::string, kNumCompoundTypes>& compound_type_names();
std::optional<std::uint8_t> parse_compound_type(std::string_view label);

struct CoocEdge {
    IngredientId i = 0;
    IngredientId j = 0;  // i < j
    double w = 0.0;      // NPMI, strictly positive
    bool operator==(const CoocEdge&) const = default;
};

struct NpmiOptions {
    std::size_t min_recipe_count = 20;
    // Pairless (single-match) recipes count toward marginals n_a and N.
    bool count_pairless = true;
    bool operator==(const NpmiOptions&) const = default;
};

struct CoocGraph {
    std::size_t n_nodes = 0;
    std::vector<std::string> names;        // ingredient names, indexed by id
    std::vector<std::uint8_t> active;      // survived the min-frequency filter
    std::vector<std::uint64_t> frequency;  // n_a before filtering
    std::vector<CoocEdge> edges;           // sorted by (i, j)
    std::size_t n_recipes_marginal = 0;    // N
    std::size_t n_recipes_paired = 0;      // recipes contributing pairs
    NpmiOptions options;

    std::size_t n_active() const;
    bool operator==(const CoocGraph&) const = default;
};

/// NPMI for recipe-level counts; returns 1 when p(a,b) = 1.
double npmi_from_counts(std::uint64_t n_ab, std::uint64_t n_a, std::uint64_t n_b, std::uint64_t n);

CoocGraph compute_npmi_graph(const MatchedCorpus& corpus, const std::vector<std::string>& names,
                             NpmiOptions options = {});

struct CompoundRow {
    std::string ingredient;  // normalized
    std::string compound_id;
    std::vector<std::uint8_t> categories;  // sorted, unique
};

std::vector<CompoundRow> parse_compound_file(const std::string& text, const std::string& origin = "<compounds>");
std::vector<CompoundRow> load_compound_file(const std::filesystem::path& path);

struct TypedCompound {
    std::string source_id;
    std::uint8_t category = 0;
    bool operator==(const TypedCompound&) const = default;
};

struct IcEdge {
    IngredientId ingredient = 0;
    NodeId compound = 0;  // union-namespace id (>= V); weight is 1
    bool operator==(const IcEdge&) const = default;
};

struct TypedGraph {
    CoocGraph cooc;                        // ii_edges, passed through untouched
    std::vector<TypedCompound> compounds;  // node id = V + index
    std::vector<IcEdge> ic_edges;          // sorted by (ingredient, compound)
    std::vector<std::uint8_t> hub;         // per ingredient

    std::size_t n_ingredients() const { return cooc.n_nodes; }
    std::size_t n_nodes() const { return cooc.n_nodes + compounds.size(); }
    std::size_t n_hubs() const;
    bool is_compound(NodeId n) const { return n >= cooc.n_nodes; }
    const TypedCompound& compound(NodeId n) const { return compounds.at(n - cooc.n_nodes); }
    std::string node_name(NodeId n) const;
    bool operator==(const TypedGraph&) const = default;
};

struct TypedGraphStats {
    std::size_t n_source_compounds = 0;
    std::size_t n_typed_before_filter = 0;
    std::size_t n_typed_removed = 0;
    std::size_t n_rows_skipped = 0;
};

/// Replicates each compound once per category, filters typed nodes whose
/// degree is below `min_compound_degree` in a single pass, then recomputes hubs.
TypedGraph build_typed_graph(const CoocGraph& cooc, const std::vector<CompoundRow>& rows,
                             std::size_t min_compound_degree = 2, TypedGraphStats* stats = nullptr);

/// A typed graph with no compound layer (all ingredients non-hub).
TypedGraph typed_from_cooc(const CoocGraph& cooc);

void save_graph(const TypedGraph& g, const std::filesystem::path& path, const Json& extra = {});
TypedGraph load_graph(const std::filesystem::path& path);

}  // namespace epicure
