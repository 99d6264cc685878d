#pragma once

#include <vector>

#include "epicure/ingest.hpp"
#include "epicure/trainer.hpp"

namespace epicure {

/// Ingredient rows of a model joined to the vocabulary by name. Compound rows and
/// rows whose name is not in the vocabulary are left out.
struct IngredientView {
    RowMatrixD X;                           // raw (not normalized) vectors
    std::vector<IngredientId> ids;          // vocabulary id per row
    std::vector<std::string> names;
    std::vector<std::size_t> embedding_row; // source row in the EmbeddingMatrix

    std::size_t size() const { return ids.size(); }
};

IngredientView make_ingredient_view(const EmbeddingMatrix& emb, const CanonicalVocabulary& vocab);

/// Unit-normalized copy; zero rows stay zero.
RowMatrixD normalize_rows(const RowMatrixD& X);

/// Rows of X selected by index.
RowMatrixD select_rows(const RowMatrixD& X, std::span<const std::size_t> rows);

}  // namespace epicure
