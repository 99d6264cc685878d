#include "epicure/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "epicure/common.hpp"
#include "epicure/csv.hpp"

namespace epicure {

const std::array<std::string, kNumCompoundTypes>& compound_type_names() {
    static const std::array<std::string, kNumCompoundTypes> names = {
        "balsamic", "citrus", "earthy", "fatty",     "floral",    "fruity", "green", "meaty",
        "minty",    "nutty",  "spicy",  "vegetable", "wine_like", "woody",  "other",
    };
    return names;
}

std::optional<std::uint8_t> parse_compound_type(std::string_view label) {
    const std::string key = normalize_name(label);
    const auto& names = compound_type_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == key) return static_cast<std::uint8_t>(i);
    return std::nullopt;
}

std::size_t CoocGraph::n_active() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

double npmi_from_counts(std::uint64_t n_ab, std::uint64_t n_a, std::uint64_t n_b, std::uint64_t n) {
    const double N = static_cast<double>(n);
    const double p_ab = static_cast<double>(n_ab) / N;
    if (n_ab == n) return 1.0;
    const double p_a = static_cast<double>(n_a) / N;
    const double p_b = static_cast<double>(n_b) / N;
    const double pmi = std::log(p_ab / (p_a * p_b));
    return pmi / -std::log(p_ab);
}

namespace {

// Upper-triangular pair counter; dense for vocabularies that fit, hashed otherwise.
class PairCounter {
public:
    explicit PairCounter(std::size_t v) : v_(v) {
        if (v_ <= kDenseLimit) dense_.assign(v_ * (v_ - (v_ ? 1 : 0)) / 2 + 1, 0);
    }

    void add(std::uint32_t i, std::uint32_t j) {
        if (!dense_.empty()) ++dense_[index(i, j)];
        else ++sparse_[static_cast<std::uint64_t>(i) * v_ + j];
    }

    std::uint64_t get(std::uint32_t i, std::uint32_t j) const {
        if (!dense_.empty()) return dense_[index(i, j)];
        const auto it = sparse_.find(static_cast<std::uint64_t>(i) * v_ + j);
        return it == sparse_.end() ? 0 : it->second;
    }

private:
    static constexpr std::size_t kDenseLimit = 8192;

    std::size_t index(std::size_t i, std::size_t j) const {
        // rows 0..i-1 hold (v-1) + (v-2) + ... entries
        return i * (2 * v_ - i - 1) / 2 + (j - i - 1);
    }

    std::size_t v_;
    std::vector<std::uint32_t> dense_;
    std::unordered_map<std::uint64_t, std::uint32_t> sparse_;
};

}  // namespace

CoocGraph compute_npmi_graph(const MatchedCorpus& corpus, const std::vector<std::string>& names,
                             NpmiOptions options) {
    if (options.min_recipe_count < 1) fail("precondition", "min_recipe_count must be >= 1");
    const std::size_t V = names.size();
    CoocGraph g;
    g.n_nodes = V;
    g.names = names;
    g.options = options;
    g.frequency.assign(V, 0);
    g.active.assign(V, 0);

    for (const auto& r : corpus.recipes) {
        if (!options.count_pairless && r.pairless()) continue;
        for (const auto id : r.ingredients) {
            if (id >= V) fail("invalid_input", "recipe references ingredient id outside the vocabulary");
            ++g.frequency[id];
        }
    }
    for (std::size_t a = 0; a < V; ++a) g.active[a] = g.frequency[a] >= options.min_recipe_count ? 1 : 0;

    // Marginals and pairs are recounted over recipes restricted to surviving ingredients.
    std::vector<std::uint64_t> n_a(V, 0);
    PairCounter pairs(V);
    std::vector<std::uint32_t> kept;
    for (const auto& r : corpus.recipes) {
        kept.clear();
        for (const auto id : r.ingredients)
            if (g.active[id]) kept.push_back(id);
        if (kept.empty()) continue;
        if (kept.size() < 2 && !options.count_pairless) continue;
        ++g.n_recipes_marginal;
        for (const auto id : kept) ++n_a[id];
        if (kept.size() < 2) continue;
        ++g.n_recipes_paired;
        for (std::size_t x = 0; x < kept.size(); ++x)
            for (std::size_t y = x + 1; y < kept.size(); ++y) pairs.add(kept[x], kept[y]);
    }
    if (g.n_recipes_paired == 0) fail("invalid_input", "no usable recipes with two or more surviving ingredients");

    const std::uint64_t N = g.n_recipes_marginal;
    for (std::uint32_t i = 0; i < V; ++i) {
        if (!g.active[i] || n_a[i] == 0) continue;
        for (std::uint32_t j = i + 1; j < V; ++j) {
            if (!g.active[j] || n_a[j] == 0) continue;
            const std::uint64_t n_ab = pairs.get(i, j);
            if (n_ab == 0) continue;
            const double w = npmi_from_counts(n_ab, n_a[i], n_a[j], N);
            if (w > 0.0) g.edges.push_back({i, j, w});
        }
    }
    return g;
}

std::vector<CompoundRow> parse_compound_file(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::vector<CompoundRow> rows;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = csv::split_line(line);
        if (line_no == 1 && !cells.empty() && normalize_name(cells[0]) == "ingredient_name") continue;
        const std::string where = origin + " line " + std::to_string(line_no);
        if (cells.size() < 3) fail("invalid_input", where + ": expected ingredient_name,compound_id,categories");
        CompoundRow row;
        row.ingredient = normalize_name(cells[0]);
        row.compound_id = cells[1];
        std::set<std::uint8_t> cats;
        for (const auto& c : csv::split_list(cells[2])) {
            const auto t = parse_compound_type(c);
            if (!t) fail("unknown_label", where + ": compound category '" + c + "' is not one of the 15 types");
            cats.insert(*t);
        }
        if (cats.empty()) fail("invalid_input", where + ": compound has no category");
        row.categories.assign(cats.begin(), cats.end());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<CompoundRow> load_compound_file(const std::filesystem::path& path) {
    return parse_compound_file(read_text_file(path), path.string());
}

std::size_t TypedGraph::n_hubs() const {
    return static_cast<std::size_t>(std::count(hub.begin(), hub.end(), std::uint8_t{1}));
}

std::string TypedGraph::node_name(NodeId n) const {
    if (!is_compound(n)) return cooc.names.at(n);
    const auto& c = compound(n);
    return "C:" + c.source_id + "@" + compound_type_names()[c.category];
}

TypedGraph typed_from_cooc(const CoocGraph& cooc) {
    TypedGraph g;
    g.cooc = cooc;
    g.hub.assign(cooc.n_nodes, 0);
    return g;
}

TypedGraph build_typed_graph(const CoocGraph& cooc, const std::vector<CompoundRow>& rows,
                             std::size_t min_compound_degree, TypedGraphStats* stats) {
    std::unordered_map<std::string, IngredientId> index;
    for (std::size_t i = 0; i < cooc.names.size(); ++i) index.emplace(cooc.names[i], static_cast<IngredientId>(i));

    TypedGraphStats st;
    // A compound's category set is the union over all rows that mention it.
    std::map<std::string, std::set<std::uint8_t>> categories;
    std::map<std::string, std::set<IngredientId>> links;
    std::set<std::string> warned;
    for (const auto& row : rows) {
        auto& cats = categories[row.compound_id];
        cats.insert(row.categories.begin(), row.categories.end());
        const auto it = index.find(row.ingredient);
        if (it == index.end() || !cooc.active[it->second]) {
            ++st.n_rows_skipped;
            if (warned.insert(row.ingredient).second)
                log_warn("compound file: ingredient '" + row.ingredient +
                         (it == index.end() ? "' not in vocabulary, skipped" : "' below frequency filter, skipped"));
            continue;
        }
        links[row.compound_id].insert(it->second);
    }
    st.n_source_compounds = categories.size();

    TypedGraph g;
    g.cooc = cooc;
    g.hub.assign(cooc.n_nodes, 0);
    for (const auto& [source, cats] : categories) {
        const auto lit = links.find(source);
        const std::size_t degree = lit == links.end() ? 0 : lit->second.size();
        for (const auto cat : cats) {
            ++st.n_typed_before_filter;
            if (degree < min_compound_degree) {
                ++st.n_typed_removed;
                continue;
            }
            const NodeId node = static_cast<NodeId>(cooc.n_nodes + g.compounds.size());
            g.compounds.push_back({source, cat});
            for (const auto ing : lit->second) g.ic_edges.push_back({ing, node});
        }
    }
    std::sort(g.ic_edges.begin(), g.ic_edges.end(), [](const IcEdge& a, const IcEdge& b) {
        return a.ingredient != b.ingredient ? a.ingredient < b.ingredient : a.compound < b.compound;
    });
    for (const auto& e : g.ic_edges) g.hub[e.ingredient] = 1;
    if (stats) *stats = st;
    return g;
}

void save_graph(const TypedGraph& g, const std::filesystem::path& path, const Json& extra) {
    Container c;
    Json compounds = Json::array();
    for (const auto& tc : g.compounds) compounds.push_back({tc.source_id, tc.category});
    c.header = {{"kind", "typed_graph"},
                {"n_ingredients", g.cooc.n_nodes},
                {"names", g.cooc.names},
                {"compounds", compounds},
                {"compound_types", compound_type_names()},
                {"n_recipes_marginal", g.cooc.n_recipes_marginal},
                {"n_recipes_paired", g.cooc.n_recipes_paired},
                {"min_recipe_count", g.cooc.options.min_recipe_count},
                {"count_pairless", g.cooc.options.count_pairless},
                {"stats",
                 {{"ingredient_nodes", g.cooc.n_active()},
                  {"compound_nodes", g.compounds.size()},
                  {"ii_edges", g.cooc.edges.size()},
                  {"ic_edges", g.ic_edges.size()},
                  {"hubs", g.n_hubs()}}}};
    if (!extra.is_null()) c.header["extra"] = extra;

    std::vector<std::uint32_t> ii_i, ii_j, ic_i, ic_c;
    std::vector<double> ii_w;
    for (const auto& e : g.cooc.edges) {
        ii_i.push_back(e.i);
        ii_j.push_back(e.j);
        ii_w.push_back(e.w);
    }
    for (const auto& e : g.ic_edges) {
        ic_i.push_back(e.ingredient);
        ic_c.push_back(e.compound);
    }
    c.add_section("active", pack<std::uint8_t>(g.cooc.active));
    c.add_section("frequency", pack<std::uint64_t>(g.cooc.frequency));
    c.add_section("hub", pack<std::uint8_t>(g.hub));
    c.add_section("ii_i", pack<std::uint32_t>(ii_i));
    c.add_section("ii_j", pack<std::uint32_t>(ii_j));
    c.add_section("ii_w", pack<double>(ii_w));
    c.add_section("ic_ingredient", pack<std::uint32_t>(ic_i));
    c.add_section("ic_compound", pack<std::uint32_t>(ic_c));
    write_container(path, std::move(c));
}

TypedGraph load_graph(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.header.value("kind", "") != "typed_graph") fail("format", path.string() + " is not a graph artifact");
    TypedGraph g;
    g.cooc.n_nodes = c.header.at("n_ingredients");
    g.cooc.names = c.header.at("names").get<std::vector<std::string>>();
    g.cooc.n_recipes_marginal = c.header.at("n_recipes_marginal");
    g.cooc.n_recipes_paired = c.header.at("n_recipes_paired");
    g.cooc.options.min_recipe_count = c.header.at("min_recipe_count");
    g.cooc.options.count_pairless = c.header.at("count_pairless");
    for (const auto& tc : c.header.at("compounds"))
        g.compounds.push_back({tc.at(0).get<std::string>(), tc.at(1).get<std::uint8_t>()});
    g.cooc.active = unpack<std::uint8_t>(c.section("active"));
    g.cooc.frequency = unpack<std::uint64_t>(c.section("frequency"));
    g.hub = unpack<std::uint8_t>(c.section("hub"));
    const auto ii_i = unpack<std::uint32_t>(c.section("ii_i"));
    const auto ii_j = unpack<std::uint32_t>(c.section("ii_j"));
    const auto ii_w = unpack<double>(c.section("ii_w"));
    const auto ic_i = unpack<std::uint32_t>(c.section("ic_ingredient"));
    const auto ic_c = unpack<std::uint32_t>(c.section("ic_compound"));
    if (ii_i.size() != ii_j.size() || ii_i.size() != ii_w.size() || ic_i.size() != ic_c.size() ||
        g.cooc.active.size() != g.cooc.n_nodes || g.hub.size() != g.cooc.n_nodes)
        fail("format", path.string() + ": inconsistent graph sections");
    for (std::size_t k = 0; k < ii_i.size(); ++k) g.cooc.edges.push_back({ii_i[k], ii_j[k], ii_w[k]});
    for (std::size_t k = 0; k < ic_i.size(); ++k) g.ic_edges.push_back({ic_i[k], ic_c[k]});
    return g;
}

}  // namespace epicure
