#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "epicure/common.hpp"
#include "epicure/graph.hpp"

namespace epicure {

enum class Variant : std::uint8_t { Cooc, Core, Chem };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view s);

struct WalkSchema {
    Variant variant = Variant::Cooc;
    std::size_t ii_repeat = 0;  // ignored by Cooc
    std::size_t n_types = kNumCompoundTypes;
    std::size_t walks_per_node = 100;
    std::size_t walk_length = 50;
    std::uint64_t rng_seed = 42;

    /// Cooc: native I-I only; Core: ii_repeat = 10; Chem: ii_repeat = 0.
    static WalkSchema for_variant(Variant v);
    void validate() const;
    Json to_json() const;
    static WalkSchema from_json(const Json& j);
    bool operator==(const WalkSchema&) const = default;
};

/// Node role in a metapath. Hubs match both I and H; N matches only non-hubs.
struct Role {
    enum Kind : std::uint8_t { I, H, N, C } kind = I;
    std::uint8_t type = 0;  // compound type, for C only

    static constexpr Role ingredient() { return {I, 0}; }
    static constexpr Role hub() { return {H, 0}; }
    static constexpr Role non_hub() { return {N, 0}; }
    static constexpr Role compound(std::uint8_t t) { return {C, t}; }
    /// Dense index: I=0, H=1, N=2, C[t]=3+t.
    std::size_t slot() const { return kind == C ? 3u + type : static_cast<std::size_t>(kind); }

    bool operator==(const Role&) const = default;
};

inline constexpr std::size_t kNumRoleSlots = 3 + kNumCompoundTypes;

enum class TemplateKind : std::uint8_t { WithinType, ViaCompound, CrossType, PureII };

std::string_view template_kind_name(TemplateKind k);

struct WalkTemplate {
    TemplateKind kind = TemplateKind::PureII;
    std::uint8_t x = 0;
    std::uint8_t y = 0;

    /// within_type(x): H,C[x],H; via_compound(x): N,H,C[x],H,N;
    /// cross_type(x,y): C[x],H,N,H,C[y]; pure_ii: I,I. Cycled by position modulo length.
    std::vector<Role> pattern() const;
    bool operator==(const WalkTemplate&) const = default;
};

/// Templates for one walk round. Core/Chem: one within-type and one via-compound
/// per type, 2n cross-type pairs in which every type is both a source and a
/// target, plus ii_repeat pure I-I templates. Cooc: a single pure I-I template.
std::vector<WalkTemplate> sample_round_templates(const WalkSchema& schema, Rng& rng);

/// Random 2n (x, y) pairs, x != y, each type at least once as x and as y.
std::vector<std::pair<std::uint8_t, std::uint8_t>> sample_cross_type_pairs(std::size_t n_types, Rng& rng);

/// Role-indexed adjacency with cumulative transition weights for every node.
class WalkGraph {
public:
    /// `with_compounds = false` keeps only ingredient nodes and I-I edges (the Cooc graph).
    WalkGraph(const TypedGraph& graph, bool with_compounds);

    std::size_t n_nodes() const { return n_nodes_; }
    std::size_t n_ingredients() const { return n_ingredients_; }
    bool matches(NodeId n, Role r) const;
    bool is_compound(NodeId n) const { return n >= n_ingredients_; }
    bool is_active(NodeId n) const { return active_[n] != 0; }

    struct Candidates {
        std::vector<NodeId> nodes;
        std::vector<double> cumulative;  // prefix sums of edge weights
    };
    const Candidates& candidates(NodeId from, Role r) const { return table_[from][r.slot()]; }
    bool adjacent(NodeId a, NodeId b) const;
    /// Draws a neighbor of `from` conforming to `r` proportionally to edge weight.
    std::optional<NodeId> step(NodeId from, Role r, Rng& rng) const;

private:
    std::size_t n_ingredients_ = 0;
    std::size_t n_nodes_ = 0;
    std::vector<std::uint8_t> hub_;
    std::vector<std::uint8_t> compound_type_;
    std::vector<std::uint8_t> active_;
    std::vector<std::array<Candidates, kNumRoleSlots>> table_;
};

struct WalkCorpus {
    std::vector<NodeId> tokens;
    std::vector<std::uint64_t> offsets{0};  // walk w spans [offsets[w], offsets[w+1])
    std::vector<WalkTemplate> provenance;
    std::size_t n_ingredients = 0;
    std::vector<std::string> node_names;
    WalkSchema schema;

    std::size_t size() const { return provenance.size(); }
    std::span<const NodeId> walk(std::size_t w) const {
        return {tokens.data() + offsets[w], static_cast<std::size_t>(offsets[w + 1] - offsets[w])};
    }
    void append(std::span<const NodeId> walk, WalkTemplate t);
    Json census() const;
    bool operator==(const WalkCorpus&) const = default;
};

/// One walk per (round, start node, applicable template). A template applies to a
/// start node when the node matches the template's first role; start nodes are
/// active ingredients plus typed compounds. Output order is round-major, then
/// node id, then template order, independent of `workers`.
WalkCorpus generate_walks(const TypedGraph& graph, const WalkSchema& schema, unsigned workers = 1);

/// Replays one walk against its template: role at position p must equal
/// pattern[p % len], consecutive tokens must be adjacent, and a walk shorter
/// than `walk_length` must end where no conforming neighbor exists.
bool validate_walk(const WalkGraph& graph, std::span<const NodeId> walk, const WalkTemplate& t,
                   std::size_t walk_length, std::string* why = nullptr);

void save_walks(const WalkCorpus& corpus, const std::filesystem::path& dir);
WalkCorpus load_walks(const std::filesystem::path& dir);

}  // namespace epicure
