#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "epicure/embedding_view.hpp"

namespace epicure {

/// Eigenvalues of the mean-centered sample covariance, descending.
std::vector<double> covariance_spectrum(const RowMatrixD& X);

/// (sum lambda)^2 / sum lambda^2 over the covariance spectrum. Needs >= 2 rows
/// and nonzero covariance.
double participation_ratio(const RowMatrixD& X);

/// Fraction of total variance in the top `k` principal components.
double pca_variance_share(const std::vector<double>& spectrum, std::size_t k);

/// Mean cosine over pairs i < j of nonzero rows. Exact when the row count is at
/// most `exact_limit`, otherwise a seeded uniform sample of `n_pairs` pairs.
double avg_pairwise_cosine(const RowMatrixD& X, std::uint64_t seed = 42, std::size_t exact_limit = 4096,
                           std::size_t n_pairs = 1'000'000);

struct KMeansResult {
    std::vector<int> labels;
    RowMatrixD centers;
    double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
KMeansResult kmeans(const RowMatrixD& X, std::size_t k, std::size_t restarts, std::uint64_t seed,
                    std::size_t max_iter = 100);

/// NMI with arithmetic-mean normalization on a (possibly fractional) contingency
/// table. Two single-cluster labelings give 1.
double nmi_from_contingency(const std::vector<std::vector<double>>& table);
double nmi(std::span<const int> a, std::span<const int> b);

/// Each item spreads mass 1/|labels| over its label set against hard clusters.
double soft_nmi(const std::vector<std::vector<int>>& label_sets, std::span<const int> clusters);

/// Mean fraction of the k cosine-nearest other items that share the item's label.
double knn_purity(const RowMatrixD& unit_rows, std::span<const int> labels, std::size_t k = 5);

/// Mean over items of the mean Jaccard overlap between the item's label set and
/// those of its k cosine-nearest other items.
double knn_jaccard_purity(const RowMatrixD& unit_rows, const std::vector<std::vector<int>>& label_sets,
                          std::size_t k = 5);

/// Mean silhouette with cosine distance. Items whose label has fewer than two
/// members are excluded.
double silhouette_cosine(const RowMatrixD& X, std::span<const int> labels);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// 2.5/97.5 percentiles of `metric` over `n_iter` subsamples, each drawing
/// round(frac * n) indices without replacement.
Interval bootstrap_ci(const std::function<double(std::span<const std::size_t>)>& metric, std::size_t n,
                      std::size_t n_iter = 200, double frac = 0.8, std::uint64_t seed = 42);

struct GeometryOptions {
    std::size_t bootstrap_iters = 200;
    double bootstrap_frac = 0.8;
    std::size_t kmeans_restarts = 10;
    std::size_t knn_k = 5;
    std::uint64_t seed = 42;
};

struct MetricWithCi {
    double value = 0.0;
    Interval ci95;
};

struct GeometryReport {
    std::size_t n_ingredients = 0;
    std::size_t dim = 0;
    double pr = 0.0;
    double avg_cos = 0.0;
    double pca_top10 = 0.0;
    double pca_top50 = 0.0;
    std::size_t food_group_n = 0, food_group_labels = 0;
    MetricWithCi food_group_nmi, food_group_knn_purity, food_group_silhouette;
    std::size_t cuisine_n = 0;
    MetricWithCi cuisine_soft_nmi, cuisine_knn_jaccard, cuisine_silhouette;

    Json to_json() const;
};

GeometryReport geometry_report(const IngredientView& view, const CanonicalVocabulary& vocab,
                               const GeometryOptions& opts = {});

}  // namespace epicure
