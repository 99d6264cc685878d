#include "epicure/walker.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <thread>

namespace epicure {

namespace {

constexpr std::uint64_t kRoundSalt = 0x524f554e44ULL;  // "ROUND"
constexpr char kWalkMagic[8] = {'E', 'P', 'W', 'A', 'L', 'K', '0', '1'};

}  // namespace

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::Cooc: return "cooc";
        case Variant::Core: return "core";
        case Variant::Chem: return "chem";
    }
    return "?";
}

std::optional<Variant> parse_variant(std::string_view s) {
    const std::string k = normalize_name(s);
    if (k == "cooc") return Variant::Cooc;
    if (k == "core") return Variant::Core;
    if (k == "chem") return Variant::Chem;
    return std::nullopt;
}

WalkSchema WalkSchema::for_variant(Variant v) {
    WalkSchema s;
    s.variant = v;
    s.ii_repeat = v == Variant::Core ? 10 : 0;
    return s;
}

void WalkSchema::validate() const {
    if (variant == Variant::Chem && ii_repeat != 0) fail("precondition", "Chem schema requires ii_repeat = 0");
    if (variant == Variant::Core && ii_repeat < 1) fail("precondition", "Core schema requires ii_repeat >= 1");
    if (n_types < 2 || n_types > kNumCompoundTypes)
        fail("precondition", "n_types must be in [2, " + std::to_string(kNumCompoundTypes) + "]");
    if (walks_per_node < 1 || walk_length < 1) fail("precondition", "walks_per_node and walk_length must be >= 1");
}

Json WalkSchema::to_json() const {
    return {{"variant", variant_name(variant)}, {"ii_repeat", ii_repeat},        {"n_types", n_types},
            {"walks_per_node", walks_per_node}, {"walk_length", walk_length}, {"rng_seed", rng_seed}};
}

WalkSchema WalkSchema::from_json(const Json& j) {
    WalkSchema s;
    const auto v = parse_variant(j.at("variant").get<std::string>());
    if (!v) fail("format", "unknown variant in walk schema");
    s.variant = *v;
    s.ii_repeat = j.at("ii_repeat");
    s.n_types = j.at("n_types");
    s.walks_per_node = j.at("walks_per_node");
    s.walk_length = j.at("walk_length");
    s.rng_seed = j.at("rng_seed");
    return s;
}

std::string_view template_kind_name(TemplateKind k) {
    switch (k) {
        case TemplateKind::WithinType: return "within_type";
        case TemplateKind::ViaCompound: return "via_compound";
        case TemplateKind::CrossType: return "cross_type";
        case TemplateKind::PureII: return "pure_ii";
    }
    return "?";
}

std::vector<Role> WalkTemplate::pattern() const {
    switch (kind) {
        case TemplateKind::WithinType: return {Role::hub(), Role::compound(x), Role::hub()};
        case TemplateKind::ViaCompound:
            return {Role::non_hub(), Role::hub(), Role::compound(x), Role::hub(), Role::non_hub()};
        case TemplateKind::CrossType:
            return {Role::compound(x), Role::hub(), Role::non_hub(), Role::hub(), Role::compound(y)};
        case TemplateKind::PureII: return {Role::ingredient(), Role::ingredient()};
    }
    return {};
}

std::vector<std::pair<std::uint8_t, std::uint8_t>> sample_cross_type_pairs(std::size_t n_types, Rng& rng) {
    const std::size_t slots = 2 * n_types;
    std::vector<std::uint8_t> xs, ys;
    for (std::size_t t = 0; t < n_types; ++t) {
        xs.push_back(static_cast<std::uint8_t>(t));
        ys.push_back(static_cast<std::uint8_t>(t));
    }
    // Sample: one guaranteed occurrence per type plus n free draws on each side.
    while (xs.size() < slots) xs.push_back(static_cast<std::uint8_t>(uniform_index(rng, n_types)));
    while (ys.size() < slots) ys.push_back(static_cast<std::uint8_t>(uniform_index(rng, n_types)));
    shuffle_in_place(xs, rng);
    shuffle_in_place(ys, rng);

    // Repair x == y collisions by swapping targets; swaps keep both multisets, so coverage holds.
    for (std::size_t i = 0; i < slots; ++i) {
        if (xs[i] != ys[i]) continue;
        const std::size_t offset = uniform_index(rng, slots);
        bool repaired = false;
        for (std::size_t k = 0; k < slots && !repaired; ++k) {
            const std::size_t j = (offset + k) % slots;
            if (j != i && ys[j] != xs[i] && ys[i] != xs[j]) {
                std::swap(ys[i], ys[j]);
                repaired = true;
            }
        }
        if (!repaired) fail("internal", "cross-type repair found no swap partner");
    }
    std::vector<std::pair<std::uint8_t, std::uint8_t>> pairs;
    for (std::size_t i = 0; i < slots; ++i) pairs.emplace_back(xs[i], ys[i]);
    return pairs;
}

std::vector<WalkTemplate> sample_round_templates(const WalkSchema& schema, Rng& rng) {
    schema.validate();
    std::vector<WalkTemplate> out;
    if (schema.variant == Variant::Cooc) {
        out.push_back({TemplateKind::PureII, 0, 0});
        return out;
    }
    for (std::size_t t = 0; t < schema.n_types; ++t) out.push_back({TemplateKind::WithinType, std::uint8_t(t), 0});
    for (std::size_t t = 0; t < schema.n_types; ++t) out.push_back({TemplateKind::ViaCompound, std::uint8_t(t), 0});
    for (const auto& [x, y] : sample_cross_type_pairs(schema.n_types, rng))
        out.push_back({TemplateKind::CrossType, x, y});
    for (std::size_t k = 0; k < schema.ii_repeat; ++k) out.push_back({TemplateKind::PureII, 0, 0});
    return out;
}

WalkGraph::WalkGraph(const TypedGraph& graph, bool with_compounds)
    : n_ingredients_(graph.n_ingredients()),
      n_nodes_(with_compounds ? graph.n_nodes() : graph.n_ingredients()) {
    hub_.assign(n_ingredients_, 0);
    if (with_compounds) hub_ = graph.hub;
    compound_type_.assign(n_nodes_, 0);
    active_.assign(n_nodes_, 1);
    for (std::size_t i = 0; i < n_ingredients_; ++i) active_[i] = graph.cooc.active[i];
    for (std::size_t c = n_ingredients_; c < n_nodes_; ++c) compound_type_[c] = graph.compound(NodeId(c)).category;
    table_.resize(n_nodes_);

    auto push = [&](NodeId from, NodeId to, double w) {
        for (std::size_t slot = 0; slot < kNumRoleSlots; ++slot) {
            const Role r = slot < 3 ? Role{static_cast<Role::Kind>(slot), 0}
                                    : Role::compound(static_cast<std::uint8_t>(slot - 3));
            if (!matches(to, r)) continue;
            auto& c = table_[from][slot];
            c.nodes.push_back(to);
            c.cumulative.push_back((c.cumulative.empty() ? 0.0 : c.cumulative.back()) + w);
        }
    };
    // Insert in a canonical order (neighbor id ascending) so sampling is reproducible.
    std::vector<std::vector<std::pair<NodeId, double>>> adj(n_nodes_);
    for (const auto& e : graph.cooc.edges) {
        adj[e.i].emplace_back(e.j, e.w);
        adj[e.j].emplace_back(e.i, e.w);
    }
    if (with_compounds) {
        for (const auto& e : graph.ic_edges) {
            adj[e.ingredient].emplace_back(e.compound, 1.0);
            adj[e.compound].emplace_back(e.ingredient, 1.0);
        }
    }
    for (NodeId n = 0; n < n_nodes_; ++n) {
        auto& lst = adj[n];
        std::sort(lst.begin(), lst.end());
        for (const auto& [to, w] : lst) push(n, to, w);
    }
}

bool WalkGraph::matches(NodeId n, Role r) const {
    if (n >= n_nodes_) return false;
    const bool compound = n >= n_ingredients_;
    switch (r.kind) {
        case Role::I: return !compound;
        case Role::H: return !compound && hub_[n];
        case Role::N: return !compound && !hub_[n];
        case Role::C: return compound && compound_type_[n] == r.type;
    }
    return false;
}

bool WalkGraph::adjacent(NodeId a, NodeId b) const {
    if (a >= n_nodes_ || b >= n_nodes_) return false;
    const auto& all = table_[a][is_compound(b) ? Role::compound(compound_type_[b]).slot() : Role::ingredient().slot()];
    return std::binary_search(all.nodes.begin(), all.nodes.end(), b);
}

std::optional<NodeId> WalkGraph::step(NodeId from, Role r, Rng& rng) const {
    const auto& c = candidates(from, r);
    if (c.nodes.empty()) return std::nullopt;
    const double u = uniform01(rng) * c.cumulative.back();
    auto it = std::upper_bound(c.cumulative.begin(), c.cumulative.end(), u);
    if (it == c.cumulative.end()) --it;
    return c.nodes[static_cast<std::size_t>(it - c.cumulative.begin())];
}

void WalkCorpus::append(std::span<const NodeId> walk, WalkTemplate t) {
    tokens.insert(tokens.end(), walk.begin(), walk.end());
    offsets.push_back(tokens.size());
    provenance.push_back(t);
}

Json WalkCorpus::census() const {
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_kind;  // walks, tokens
    std::size_t pairless = 0;
    for (std::size_t w = 0; w < size(); ++w) {
        auto& slot = per_kind[std::string(template_kind_name(provenance[w].kind))];
        ++slot.first;
        slot.second += walk(w).size();
        if (walk(w).size() < 2) ++pairless;
    }
    Json kinds = Json::object();
    for (const auto& [k, v] : per_kind) kinds[k] = {{"walks", v.first}, {"tokens", v.second}};
    std::size_t compound_tokens = 0;
    for (const auto t : tokens)
        if (t >= n_ingredients) ++compound_tokens;
    return {{"walks", size()},
            {"tokens", tokens.size()},
            {"compound_tokens", compound_tokens},
            {"length1_walks", pairless},
            {"by_template", kinds}};
}

namespace {

void walk_from(const WalkGraph& g, NodeId start, const std::vector<Role>& pattern, std::size_t length, Rng& rng,
               std::vector<NodeId>& out) {
    out.clear();
    out.push_back(start);
    NodeId cur = start;
    while (out.size() < length) {
        const Role need = pattern[out.size() % pattern.size()];
        const auto next = g.step(cur, need, rng);
        if (!next) break;
        out.push_back(*next);
        cur = *next;
    }
}

}  // namespace

WalkCorpus generate_walks(const TypedGraph& graph, const WalkSchema& schema, unsigned workers) {
    schema.validate();
    const bool with_compounds = schema.variant != Variant::Cooc;
    const WalkGraph wg(graph, with_compounds);
    if (wg.n_nodes() == 0) fail("precondition", "cannot walk an empty graph");

    WalkCorpus corpus;
    corpus.schema = schema;
    corpus.n_ingredients = graph.n_ingredients();
    for (NodeId n = 0; n < wg.n_nodes(); ++n) corpus.node_names.push_back(graph.node_name(n));

    std::vector<NodeId> starts;
    for (NodeId n = 0; n < wg.n_nodes(); ++n)
        if (wg.is_active(n)) starts.push_back(n);

    workers = std::max(1u, workers);
    for (std::size_t round = 0; round < schema.walks_per_node; ++round) {
        Rng round_rng(derive_seed(schema.rng_seed, kRoundSalt, round));
        const auto templates = sample_round_templates(schema, round_rng);
        std::vector<std::vector<Role>> patterns;
        for (const auto& t : templates) patterns.push_back(t.pattern());

        // Each worker fills a contiguous block of start nodes; blocks are concatenated in order.
        std::vector<WalkCorpus> parts(workers);
        auto run_block = [&](unsigned w) {
            const std::size_t lo = starts.size() * w / workers, hi = starts.size() * (w + 1) / workers;
            std::vector<NodeId> buf;
            for (std::size_t s = lo; s < hi; ++s) {
                const NodeId node = starts[s];
                Rng rng(derive_seed(schema.rng_seed, node, round));
                for (std::size_t k = 0; k < templates.size(); ++k) {
                    if (!wg.matches(node, patterns[k].front())) continue;
                    walk_from(wg, node, patterns[k], schema.walk_length, rng, buf);
                    parts[w].append(buf, templates[k]);
                }
            }
        };
        if (workers == 1) {
            run_block(0);
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run_block, w);
            for (auto& th : pool) th.join();
        }
        for (const auto& p : parts)
            for (std::size_t k = 0; k < p.size(); ++k) corpus.append(p.walk(k), p.provenance[k]);
    }
    return corpus;
}

bool validate_walk(const WalkGraph& g, std::span<const NodeId> walk, const WalkTemplate& t,
                   std::size_t walk_length, std::string* why) {
    auto bad = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    const auto pattern = t.pattern();
    if (walk.empty()) return bad("empty walk");
    if (walk.size() > walk_length) return bad("walk longer than walk_length");
    for (std::size_t p = 0; p < walk.size(); ++p) {
        if (!g.matches(walk[p], pattern[p % pattern.size()]))
            return bad("role mismatch at position " + std::to_string(p));
        if (p > 0 && !g.adjacent(walk[p - 1], walk[p])) return bad("non-edge at position " + std::to_string(p));
    }
    if (walk.size() < walk_length) {
        const Role need = pattern[walk.size() % pattern.size()];
        if (!g.candidates(walk.back(), need).nodes.empty()) return bad("truncated although a conforming neighbor exists");
    }
    return true;
}

void save_walks(const WalkCorpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "walks.bin", std::ios::binary | std::ios::trunc);
    if (!out) fail("io", "cannot write " + (dir / "walks.bin").string());
    out.write(kWalkMagic, sizeof(kWalkMagic));
    for (std::size_t w = 0; w < corpus.size(); ++w) {
        const auto walk = corpus.walk(w);
        const std::uint32_t len = static_cast<std::uint32_t>(walk.size());
        const auto& t = corpus.provenance[w];
        const std::uint8_t tag[4] = {static_cast<std::uint8_t>(t.kind), t.x, t.y, 0};
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(reinterpret_cast<const char*>(tag), sizeof(tag));
        out.write(reinterpret_cast<const char*>(walk.data()), static_cast<std::streamsize>(walk.size_bytes()));
    }
    if (!out) fail("io", "short write on walks.bin");
    const Json side = {{"format", "epicure-walks/1"},
                       {"schema", corpus.schema.to_json()},
                       {"seed", corpus.schema.rng_seed},
                       {"n_ingredients", corpus.n_ingredients},
                       {"node_names", corpus.node_names},
                       {"census", corpus.census()}};
    write_text_file(dir / "walks.json", dump_json(side));
}

WalkCorpus load_walks(const std::filesystem::path& dir) {
    const Json side = Json::parse(read_text_file(dir / "walks.json"));
    WalkCorpus corpus;
    corpus.schema = WalkSchema::from_json(side.at("schema"));
    corpus.n_ingredients = side.at("n_ingredients");
    corpus.node_names = side.at("node_names").get<std::vector<std::string>>();

    std::ifstream in(dir / "walks.bin", std::ios::binary);
    if (!in) fail("io", "cannot open " + (dir / "walks.bin").string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kWalkMagic)) fail("format", "walks.bin has a bad magic");
    std::vector<NodeId> buf;
    while (true) {
        std::uint32_t len = 0;
        if (!in.read(reinterpret_cast<char*>(&len), sizeof(len))) break;
        std::uint8_t tag[4];
        in.read(reinterpret_cast<char*>(tag), sizeof(tag));
        buf.resize(len);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(len * sizeof(NodeId)));
        if (!in || tag[0] > static_cast<std::uint8_t>(TemplateKind::PureII)) fail("format", "truncated walks.bin");
        for (const auto t : buf)
            if (t >= corpus.node_names.size()) fail("format", "walk token outside the node namespace");
        corpus.append(buf, {static_cast<TemplateKind>(tag[0]), tag[1], tag[2]});
    }
    return corpus;
}

}  // namespace epicure
