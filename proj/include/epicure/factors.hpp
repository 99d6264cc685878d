#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epicure/embedding_view.hpp"

namespace epicure {

/// Group-mean residuals for labeled rows (one-hot plus intercept least squares);
/// unlabeled rows (group < 0) are centered on the labeled grand mean.
RowMatrixD residualize(const RowMatrixD& X, std::span<const int> groups);

/// Minimum-cost assignment of rows to distinct columns (rows <= cols).
/// Returns the column for each row.
std::vector<int> hungarian_min(const Eigen::MatrixXd& cost);

struct Matching {
    std::vector<int> perm;  // perm[i] = component of B matched to component i of A
    std::vector<double> cos;  // matched |cosine| per component of A
    double mean = 0.0;
};

/// Matches rows of A to rows of B maximizing total |cosine|.
Matching match_components(const RowMatrixD& A, const RowMatrixD& B);

struct IcaOptions {
    std::size_t n_components = 20;
    std::size_t max_iter = 1000;
    double tol = 1e-6;
};

struct IcaFit {
    bool converged = false;
    std::size_t iterations = 0;
    RowMatrixD components;  // unit mixing directions in embedding space, one per row
    RowMatrixD filters;     // unmixing rows: source = filter . (x - mean)
    Eigen::RowVectorXd mean;
};

/// FastICA: PCA whitening to n_components, logcosh contrast, symmetric
/// decorrelation. Each component is oriented so its sources have positive skew.
IcaFit fastica(const RowMatrixD& X, const IcaOptions& opts, std::uint64_t seed);

struct FactorSet {
    RowMatrixD components;  // sorted by stability, descending
    RowMatrixD filters;
    Eigen::RowVectorXd mean;
    std::vector<double> stability;
    std::vector<double> split_half;
    std::vector<std::uint8_t> kept;
    std::size_t retained_seed = 0;
    std::vector<std::size_t> usable_seeds;

    std::size_t size() const { return stability.size(); }
    /// Source values of every row of X for factor f.
    Eigen::VectorXd project(const RowMatrixD& X, std::size_t f) const;
};

struct FactorOptions {
    IcaOptions ica;
    std::size_t seeds = 10;
    double split_half_threshold = 0.6;
    std::uint64_t seed = 42;
};

FactorSet fastica_multiseed(const RowMatrixD& X_resid, const FactorOptions& opts);

struct GmmFit {
    std::size_t k = 0;
    RowMatrixD means, vars;
    Eigen::VectorXd weights;
    double log_likelihood = 0.0;
    double bic = 0.0;
    std::vector<int> assignment;  // hard assignment by max responsibility
    bool floored = false;         // a variance hit the floor
};

/// Diagonal-covariance EM, best of `restarts` by likelihood.
GmmFit fit_gmm(const RowMatrixD& Y, std::size_t k, std::size_t restarts, std::uint64_t seed,
               std::size_t max_iter = 300);

struct GmmSelectOptions {
    std::size_t k_min = 3;
    std::size_t k_max = 7;
    std::size_t min_members = 6;
    std::size_t restarts = 20;
};

struct GmmSelection {
    std::size_t k = 0;         // K of the chosen fit (0 when everything collapsed to one mode)
    bool fallback = false;
    std::vector<std::vector<std::size_t>> groups;  // row indices per emitted mode
};

/// BIC-minimizing K among fits where every component has >= min_members; otherwise
/// the largest K whose undersized components can be dropped leaving >= 2 modes;
/// otherwise one mode holding every row.
GmmSelection select_gmm(const RowMatrixD& Y, const GmmSelectOptions& opts, std::uint64_t seed);

/// Principal-component scores of the mean-centered rows, first `dim` columns.
RowMatrixD pca_scores(const RowMatrixD& X, std::size_t dim);

struct Mode {
    std::string source;  // "F_<index>" for factors, property name otherwise
    std::string kind;    // "factor" or "property"
    int mode_id = 0;
    std::vector<IngredientId> member_ids;
    std::vector<std::string> members;
    Eigen::VectorXd pole;
    double coherence = 0.0;
    double pairwise = 0.0;
    std::string label;

    std::string key() const { return source + "/M" + std::to_string(mode_id); }
};

struct ModeOptions {
    double top_fraction = 0.25;
    std::size_t min_high = 18;
    std::size_t max_pca_dim = 10;
    GmmSelectOptions gmm;
};

/// Modes among `rows` (indices into the view). `rows` is the high set already.
std::vector<Mode> modes_from_rows(const IngredientView& view, const RowMatrixD& unit_rows,
                                  std::span<const std::size_t> rows, const std::string& source,
                                  const std::string& kind, const ModeOptions& opts, std::uint64_t seed);

/// Rows whose value is at or above the (1 - top_fraction) quantile.
std::vector<std::size_t> high_set(std::span<const double> values, double top_fraction);

/// Member-to-pole and pairwise mean cosine on unit rows.
void score_mode(Mode& m, const RowMatrixD& unit_rows_of_members);

/// Mean cosine over seeded random pairs of distinct rows.
double random_pair_baseline(const RowMatrixD& unit_rows, std::size_t n_pairs, std::uint64_t seed);

struct ModeAtlas {
    std::string model;
    std::size_t dim = 0;
    double baseline = 0.0;
    std::vector<Mode> modes;  // sorted by (source, mode_id)
    std::vector<double> factor_stability, factor_split_half;
    std::vector<std::uint8_t> factor_kept;

    const Mode* find(std::string_view source, int mode_id) const;
    Json to_json() const;
    static ModeAtlas from_json(const Json& j);
};

struct AtlasOptions {
    FactorOptions factors;
    ModeOptions modes;
    std::size_t baseline_pairs = 10'000;
    bool supervised_sources = true;
};

/// Residualize, extract factors, discover modes for kept factors and supervised
/// properties, score coherence.
ModeAtlas build_atlas(const IngredientView& view, const CanonicalVocabulary& vocab, const AtlasOptions& opts,
                      const std::string& model_name, FactorSet* factors_out = nullptr);

/// Labels keyed by "source,mode_id" from a CSV file with header source,mode_id,label.
void apply_labels(ModeAtlas& atlas, const std::filesystem::path& label_csv);

void save_atlas(const ModeAtlas& atlas, const std::filesystem::path& path);
ModeAtlas load_atlas(const std::filesystem::path& path);

}  // namespace epicure
