#include "epicure/embedding_view.hpp"

namespace epicure {

IngredientView make_ingredient_view(const EmbeddingMatrix& emb, const CanonicalVocabulary& vocab) {
    IngredientView v;
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < emb.rows(); ++r) {
        if (emb.is_compound[r]) continue;
        const auto id = vocab.find(emb.names[r]);
        if (!id) continue;
        rows.push_back(r);
        v.ids.push_back(*id);
        v.names.push_back(emb.names[r]);
    }
    v.embedding_row = rows;
    v.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(emb.dim()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        v.X.row(static_cast<Eigen::Index>(i)) = emb.center.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
    return v;
}

RowMatrixD normalize_rows(const RowMatrixD& X) {
    RowMatrixD out = X;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double n = out.row(r).norm();
        if (n > 0) out.row(r) /= n;
    }
    return out;
}

RowMatrixD select_rows(const RowMatrixD& X, std::span<const std::size_t> rows) {
    RowMatrixD out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

}  // namespace epicure
