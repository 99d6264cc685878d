#include "support.hpp"

#include <cmath>

#include "epicure/embedding_view.hpp"

namespace epicure::testsupport {

namespace fs = std::filesystem;

fs::path toy_dir() { return EPICURE_TOY_DIR; }
fs::path golden_dir() { return EPICURE_GOLDEN_DIR; }

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::path(EPICURE_SCRATCH_DIR) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

CanonicalVocabulary numbered_vocab(std::size_t V) {
    std::vector<IngredientEntry> entries(V);
    for (std::size_t i = 0; i < V; ++i) entries[i].name = "i" + std::to_string(i);
    return CanonicalVocabulary(std::move(entries));
}

MatchedCorpus random_corpus(Rng& rng, std::size_t V, std::size_t R) {
    MatchedCorpus c;
    c.vocab_size = V;
    std::vector<double> p(V);
    for (std::size_t a = 0; a < V; ++a) p[a] = 0.02 + 0.3 * uniform01(rng);
    for (std::size_t r = 0; r < R; ++r) {
        Recipe rec;
        rec.id = "r" + std::to_string(r);
        rec.line = static_cast<std::uint32_t>(r + 1);
        for (std::size_t a = 0; a < V; ++a)
            if (uniform01(rng) < p[a]) rec.ingredients.push_back(static_cast<IngredientId>(a));
        c.n_total_input++;
        if (rec.ingredients.empty()) continue;
        c.n_matched++;
        c.recipes.push_back(std::move(rec));
    }
    return c;
}

std::vector<OracleEdge> brute_force_npmi(const MatchedCorpus& corpus, std::size_t V, std::size_t min_recipe_count,
                                         bool count_pairless) {
    auto has = [](const Recipe& r, std::size_t a) {
        for (auto id : r.ingredients)
            if (id == a) return true;
        return false;
    };
    std::vector<bool> alive(V);
    for (std::size_t a = 0; a < V; ++a) {
        std::size_t f = 0;
        for (const auto& r : corpus.recipes)
            if ((count_pairless || r.ingredients.size() >= 2) && has(r, a)) ++f;
        alive[a] = f >= min_recipe_count;
    }
    auto survivors = [&](const Recipe& r) {
        std::size_t n = 0;
        for (auto id : r.ingredients) n += alive[id] ? 1 : 0;
        return n;
    };
    double N = 0;
    for (const auto& r : corpus.recipes) {
        const auto s = survivors(r);
        if (s >= 2 || (s == 1 && count_pairless)) N += 1;
    }
    std::vector<OracleEdge> out;
    for (std::size_t a = 0; a < V; ++a) {
        for (std::size_t b = a + 1; b < V; ++b) {
            if (!alive[a] || !alive[b]) continue;
            double na = 0, nb = 0, nab = 0;
            for (const auto& r : corpus.recipes) {
                const auto s = survivors(r);
                if (!(s >= 2 || (s == 1 && count_pairless))) continue;
                const bool ha = has(r, a), hb = has(r, b);
                na += ha;
                nb += hb;
                nab += ha && hb;
            }
            if (nab == 0) continue;
            double w;
            if (nab == N) {
                w = 1.0;
            } else {
                const double pab = nab / N;
                w = std::log(pab / ((na / N) * (nb / N))) / -std::log(pab);
            }
            if (w > 0) out.push_back({a, b, w});
        }
    }
    return out;
}

EmbeddingMatrix embedding_from_rows(const RowMatrixD& X, const CanonicalVocabulary& vocab, std::string variant) {
    EmbeddingMatrix e;
    for (std::size_t i = 0; i < static_cast<std::size_t>(X.rows()); ++i) {
        e.row_nodes.push_back(static_cast<NodeId>(i));
        e.names.push_back(vocab[static_cast<IngredientId>(i)].name);
        e.is_compound.push_back(0);
    }
    e.center = X.cast<float>();
    e.variant = std::move(variant);
    e.config = Json::object();
    e.config_hash = "test";
    return e;
}

ModeAtlas atlas_from_groups(const RowMatrixD& X, const CanonicalVocabulary& vocab,
                            const std::vector<std::vector<std::size_t>>& groups, const std::string& model) {
    const RowMatrixD U = normalize_rows(X.cast<float>().cast<double>());
    ModeAtlas a;
    a.model = model;
    a.dim = static_cast<std::size_t>(X.cols());
    a.baseline = random_pair_baseline(U, 1000, 7);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Mode m;
        m.source = "F_" + std::to_string(g / 2);
        m.kind = "factor";
        m.mode_id = static_cast<int>(g % 2);
        for (auto r : groups[g]) {
            m.member_ids.push_back(static_cast<IngredientId>(r));
            m.members.push_back(vocab[static_cast<IngredientId>(r)].name);
        }
        const RowMatrixD M = select_rows(U, groups[g]);
        m.pole = M.colwise().sum().transpose().normalized();
        score_mode(m, M);
        m.label = m.members.front();
        a.modes.push_back(std::move(m));
    }
    return a;
}

double laplace(Rng& rng) {
    const double u = uniform01(rng) - 0.5;
    return -(u < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
}

}  // namespace epicure::testsupport
