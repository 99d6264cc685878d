#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "epicure/embedding_view.hpp"
#include "epicure/factors.hpp"

namespace epicure {

/// A loaded model ready for queries: unit ingredient rows plus its mode atlas.
struct Model {
    std::string name;
    std::shared_ptr<const CanonicalVocabulary> vocab;
    IngredientView view;
    RowMatrixD unit;
    ModeAtlas atlas;
    std::unordered_map<std::string, std::size_t> row_index;

    static Model make(std::string name, const EmbeddingMatrix& emb, std::shared_ptr<const CanonicalVocabulary> vocab,
                      ModeAtlas atlas);

    std::size_t size() const { return view.size(); }
    /// Row of an ingredient by (normalized) name; throws not_found with suggestions.
    std::size_t resolve(std::string_view name) const;
    Eigen::VectorXd unit_row(std::size_t r) const { return unit.row(static_cast<Eigen::Index>(r)).transpose(); }
};

struct Neighbor {
    std::size_t row = 0;
    double cos = 0.0;
};

/// Cosine of every row against a unit query.
Eigen::VectorXd similarities(const RowMatrixD& unit_rows, const Eigen::VectorXd& query);

/// Top-k by cosine, descending, ties by row ascending, `exclude` left out.
std::vector<Neighbor> top_k(const Eigen::VectorXd& sims, std::size_t k, std::optional<std::size_t> exclude);
/// The same ranking by sorting every row.
std::vector<Neighbor> top_k_exhaustive(const Eigen::VectorXd& sims, std::size_t k, std::optional<std::size_t> exclude);

std::vector<Neighbor> nearest_neighbors(const Model& m, std::size_t seed_row, std::size_t k);
std::vector<Neighbor> neighbors_of_vector(const Model& m, const Eigen::VectorXd& q, std::size_t k,
                                          std::optional<std::size_t> exclude);

struct ModeHit {
    const Mode* mode = nullptr;
    double cos = 0.0;
};

/// Highest cos(query, pole) among factor modes (or all modes); earliest (source, mode_id) wins ties.
ModeHit closest_mode(const ModeAtlas& atlas, const Eigen::VectorXd& query, bool include_supervised = false);

enum class PoleStyle { Diff, Mean };
PoleStyle parse_pole_style(std::string_view s);

/// Pole from a label spec: cuisine:<region>, food_group:<group>, nova:processed, nova:<1-4>.
Eigen::VectorXd supervised_pole(const Model& m, std::string_view spec, PoleStyle style = PoleStyle::Diff,
                                std::size_t min_positives = 5);

/// Unit-normalized mean of two or more unit vectors.
Eigen::VectorXd blend_directions(const std::vector<Eigen::VectorXd>& poles);

/// q(theta) = s cos(theta) + d_perp sin(theta), with d_perp the unit part of the target
/// orthogonal to the unit seed.
Eigen::VectorXd slerp_rotate(const Eigen::VectorXd& seed, const Eigen::VectorXd& target, double angle_deg);

}  // namespace epicure
