#include "epicure/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <tuple>

namespace epicure {

namespace {

using Idx = Eigen::Index;

bool ranks_before(const Neighbor& a, const Neighbor& b) { return a.cos != b.cos ? a.cos > b.cos : a.row < b.row; }

std::vector<Neighbor> candidates(const Eigen::VectorXd& sims, std::optional<std::size_t> exclude) {
    std::vector<Neighbor> all;
    all.reserve(static_cast<std::size_t>(sims.size()));
    for (Idx r = 0; r < sims.size(); ++r)
        if (!exclude || static_cast<std::size_t>(r) != *exclude) all.push_back({static_cast<std::size_t>(r), sims[r]});
    return all;
}

}  // namespace

Model Model::make(std::string name, const EmbeddingMatrix& emb, std::shared_ptr<const CanonicalVocabulary> vocab,
                  ModeAtlas atlas) {
    Model m;
    m.name = std::move(name);
    m.vocab = std::move(vocab);
    m.view = make_ingredient_view(emb, *m.vocab);
    m.unit = normalize_rows(m.view.X);
    m.atlas = std::move(atlas);
    for (std::size_t r = 0; r < m.view.size(); ++r) m.row_index.emplace(m.view.names[r], r);
    return m;
}

std::size_t Model::resolve(std::string_view raw) const {
    const auto key = normalize_name(raw);
    if (auto it = row_index.find(key); it != row_index.end()) return it->second;
    throw Error("not_found", "unknown ingredient '" + std::string(raw) + "' in model " + name,
                closest_names(view.names, key));
}

Eigen::VectorXd similarities(const RowMatrixD& unit_rows, const Eigen::VectorXd& query) {
    Eigen::VectorXd s(unit_rows.rows());
    for (Idx r = 0; r < unit_rows.rows(); ++r) s[r] = unit_rows.row(r).dot(query.transpose());
    return s;
}

std::vector<Neighbor> top_k(const Eigen::VectorXd& sims, std::size_t k, std::optional<std::size_t> exclude) {
    auto all = candidates(sims, exclude);
    k = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
    all.resize(k);
    return all;
}

std::vector<Neighbor> top_k_exhaustive(const Eigen::VectorXd& sims, std::size_t k, std::optional<std::size_t> exclude) {
    auto all = candidates(sims, exclude);
    std::sort(all.begin(), all.end(), ranks_before);
    all.resize(std::min(k, all.size()));
    return all;
}

std::vector<Neighbor> nearest_neighbors(const Model& m, std::size_t seed_row, std::size_t k) {
    return neighbors_of_vector(m, m.unit_row(seed_row), k, seed_row);
}

std::vector<Neighbor> neighbors_of_vector(const Model& m, const Eigen::VectorXd& q, std::size_t k,
                                          std::optional<std::size_t> exclude) {
    return top_k(similarities(m.unit, q), k, exclude);
}

ModeHit closest_mode(const ModeAtlas& atlas, const Eigen::VectorXd& query, bool include_supervised) {
    ModeHit best;
    for (const auto& mode : atlas.modes) {
        if (!include_supervised && mode.kind != "factor") continue;
        const double c = mode.pole.dot(query);
        const bool earlier = best.mode && c == best.cos &&
                             std::tie(mode.source, mode.mode_id) < std::tie(best.mode->source, best.mode->mode_id);
        if (!best.mode || c > best.cos || earlier) best = {&mode, c};
    }
    if (!best.mode)
        fail("empty_atlas", include_supervised ? "atlas has no modes" : "atlas has no emergent (factor) modes");
    return best;
}

PoleStyle parse_pole_style(std::string_view s) {
    if (s == "diff") return PoleStyle::Diff;
    if (s == "mean") return PoleStyle::Mean;
    fail("invalid_input", "pole style must be 'diff' or 'mean', got '" + std::string(s) + "'");
}

Eigen::VectorXd supervised_pole(const Model& m, std::string_view spec, PoleStyle style, std::size_t min_positives) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos)
        fail("invalid_input", "label spec must be kind:value (cuisine:<region>, food_group:<group>, nova:processed)");
    const auto kind = normalize_name(spec.substr(0, colon));
    const auto value = spec.substr(colon + 1);
    const auto& vocab = *m.vocab;

    // +1 positive, 0 complement, -1 outside the labeled subset.
    std::vector<int> role(m.size(), -1);
    if (kind == "cuisine") {
        const auto region = parse_region(value);
        if (!region) {
            std::vector<std::string> names;
            for (auto r : all_regions()) names.emplace_back(region_name(r));
            throw Error("unknown_label", "unknown cuisine region '" + std::string(value) + "'",
                        closest_names(names, normalize_name(value)));
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto& e = vocab[m.view.ids[i]];
            if (e.cuisine_specific()) role[i] = e.has_tag(*region) ? 1 : 0;
        }
    } else if (kind == "food_group") {
        const auto g = normalize_name(value);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto& fg = vocab[m.view.ids[i]].food_group;
            if (fg) role[i] = *fg == g ? 1 : 0;
        }
    } else if (kind == "nova") {
        const auto v = normalize_name(value);
        int cls = 0;
        if (v == "processed" || v == "ultra_processed") {
            cls = -4;
        } else if (v.size() == 1 && v[0] >= '1' && v[0] <= '4') {
            cls = v[0] - '0';
        } else {
            fail("unknown_label", "nova spec must be 'processed' or a class 1-4, got '" + std::string(value) + "'");
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto nv = vocab[m.view.ids[i]].nova_class;
            if (!nv) continue;
            if (cls == -4)
                role[i] = *nv == 4 ? 1 : (*nv <= 2 ? 0 : -1);
            else
                role[i] = *nv == cls ? 1 : 0;
        }
    } else {
        fail("unknown_label", "unknown label kind '" + std::string(spec.substr(0, colon)) +
                                  "' (expected cuisine, food_group or nova)");
    }
    Eigen::VectorXd pos = Eigen::VectorXd::Zero(m.unit.cols()), neg = pos;
    std::size_t np = 0, nn = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (role[i] == 1) {
            pos += m.unit_row(i);
            ++np;
        } else if (role[i] == 0) {
            neg += m.unit_row(i);
            ++nn;
        }
    }
    if (np < min_positives)
        fail("insufficient_data", "label " + std::string(spec) + " has " + std::to_string(np) +
                                      " positive ingredients in model " + m.name + "; need at least " +
                                      std::to_string(min_positives));
    Eigen::VectorXd d = pos / static_cast<double>(np);
    if (style == PoleStyle::Diff) {
        if (nn == 0) fail("insufficient_data", "label " + std::string(spec) + " has an empty complement");
        d -= neg / static_cast<double>(nn);
    }
    const double n = d.norm();
    if (n < 1e-12) fail("degenerate_pole", "label " + std::string(spec) + " yields a zero pole");
    return d / n;
}

Eigen::VectorXd blend_directions(const std::vector<Eigen::VectorXd>& poles) {
    if (poles.size() < 2) fail("invalid_input", "blend needs at least two directions");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(poles.front().size());
    for (const auto& p : poles) {
        if (p.size() != sum.size()) fail("invalid_input", "blend: dimension mismatch");
        const double n = p.norm();
        if (n == 0.0) fail("invalid_input", "blend: zero direction");
        sum += p / n;
    }
    sum /= static_cast<double>(poles.size());
    const double n = sum.norm();
    if (n < 1e-9) fail("antipodal_targets", "blended targets cancel out (mean norm below 1e-9)");
    return sum / n;
}

Eigen::VectorXd slerp_rotate(const Eigen::VectorXd& seed, const Eigen::VectorXd& target, double angle_deg) {
    if (!(angle_deg >= 0.0 && angle_deg <= 90.0))
        fail("invalid_input", "angle_deg must be within [0, 90], got " + std::to_string(angle_deg));
    const double sn = seed.norm();
    if (sn == 0.0) fail("invalid_input", "seed vector has zero norm");
    if (angle_deg == 0.0) return std::abs(sn - 1.0) < 1e-12 ? seed : Eigen::VectorXd(seed / sn);
    const Eigen::VectorXd s = seed / sn;
    const double tn = target.norm();
    if (tn == 0.0) fail("invalid_input", "target vector has zero norm");
    const Eigen::VectorXd t = target / tn;
    const double proj = t.dot(s);
    Eigen::VectorXd perp = t - proj * s;
    const double pn = perp.norm();
    if (pn < 1e-9) {
        if (proj > 0) fail("target_parallel", "target indistinguishable from seed");
        fail("target_antipodal", "target is antipodal to the seed");
    }
    perp /= pn;
    const double th = angle_deg * std::numbers::pi / 180.0;
    const double c = angle_deg == 90.0 ? 0.0 : std::cos(th);
    const double sv = angle_deg == 90.0 ? 1.0 : std::sin(th);
    return s * c + perp * sv;
}

}  // namespace epicure
