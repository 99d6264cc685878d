#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epicure/embedding_view.hpp"
#include "epicure/geometry.hpp"

namespace epicure {

/// Spearman rank correlation with average ranks for ties. Throws if either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

/// Ranks (1-based) with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> v);

/// Ridge regression with an unpenalized intercept. Returns the weight vector.
Eigen::VectorXd ridge_fit(const RowMatrixD& X, std::span<const double> y, double lambda);

/// The decade grid 1e-3 .. 1e3.
std::vector<double> ridge_lambda_grid();

/// Lambda minimizing 3-fold mean squared error over the grid.
double select_ridge_lambda(const RowMatrixD& X, std::span<const double> y, std::uint64_t seed);

enum class Stratum { BakedInCf, HeldOutCf, Usda, Cuisine, Other };
std::string_view stratum_name(Stratum s);
/// cf_<compound type> is baked in, any other cf_ probe is held out, usda_ is usda.
Stratum stratum_of_probe(std::string_view name);

struct ProbeOptions {
    std::size_t folds = 5;
    std::size_t repeats = 5;
    std::uint64_t seed = 42;
    std::size_t min_n = 10;
};

struct ProbeResult {
    std::string name;
    Stratum stratum = Stratum::Other;
    double estimate = 0.0;  // Spearman rho, or |Cohen's d|
    Interval ci95;
    std::size_t n = 0;
    double lambda = 0.0;                   // continuous probes only
    std::vector<double> repeat_estimates;  // one per repeat
    std::vector<double> fold_estimates;    // per (repeat, fold), repeat-major
    // Per repeat, the test fold of every row (row order of the caller's input).
    std::vector<std::vector<std::uint32_t>> fold_of;

    Json to_json() const;
};

/// Ridge direction per fold, Spearman rho over pooled out-of-fold projections.
ProbeResult continuous_direction_cv(const RowMatrixD& X, std::span<const double> scores, const ProbeOptions& opts);

/// Difference-of-means direction per fold, Cohen's d over pooled out-of-fold projections.
/// Folds are stratified by class.
ProbeResult cuisine_direction_cv(const RowMatrixD& X, std::span<const std::uint8_t> positive,
                                 const ProbeOptions& opts);

/// Cohen's d with pooled standard deviation (positive minus negative).
double cohens_d(std::span<const double> pos, std::span<const double> neg);

struct StratumSummary {
    Stratum stratum;
    std::size_t count = 0;
    double mean = 0.0;
};

struct ProbeReport {
    std::vector<ProbeResult> results;  // continuous probes in vocabulary order, then regions
    std::vector<StratumSummary> strata;

    Json to_json() const;
};

ProbeReport stratified_report(const IngredientView& view, const CanonicalVocabulary& vocab,
                              const ProbeOptions& opts = {});

}  // namespace epicure
