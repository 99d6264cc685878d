#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "epicure/common.hpp"
#include "epicure/walker.hpp"

namespace epicure {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TrainConfig {
    std::size_t dim = 300;
    std::size_t window = 7;  // radius: contexts at offsets 1..window on each side
    std::size_t negatives = 5;
    std::size_t batch_size = 32768;
    double lr = 0.0025;
    std::size_t epochs = 20;
    std::uint64_t seed = 42;
    double neg_exponent = 0.75;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // 1 = deterministic single worker. More workers accumulate gradients under
    // striped locks, which makes floating-point sums order-dependent.
    unsigned workers = 1;

    void validate() const;
    Json to_json() const;
    static TrainConfig from_json(const Json& j);
    /// sha256 over the hyperparameters that affect the result (not `workers`).
    std::string hash() const;
};

/// Row-index pair: gradient flows into center row `center` and context row `context`.
struct TrainPair {
    std::uint32_t center = 0;
    std::uint32_t context = 0;
    bool operator==(const TrainPair&) const = default;
    auto operator<=>(const TrainPair&) const = default;
};

/// Appends (w_t, w_{t+j}) for 1 <= |j| <= window within the walk, skipping identical ids.
void extract_pairs(std::span<const std::uint32_t> walk, std::size_t window, std::vector<TrainPair>& out);
std::vector<TrainPair> extract_pairs(const WalkCorpus& corpus, std::size_t window);

/// Negative-sampling distribution over rows: count^exponent, normalized.
class NoiseTable {
public:
    NoiseTable(std::span<const std::uint64_t> counts, double exponent);
    std::uint32_t draw(Rng& rng) const;
    double probability(std::uint32_t row) const { return probs_.at(row); }
    std::size_t size() const { return probs_.size(); }

private:
    std::vector<double> probs_;
    mutable std::discrete_distribution<std::uint32_t> dist_;
};

struct SgnsParams {
    RowMatrixD center;   // v_w
    RowMatrixD context;  // u_c
};

struct SgnsGradient {
    double loss = 0.0;  // mean per-pair loss
    RowMatrixD center;
    RowMatrixD context;
};

/// Mean over pairs of -ln s(u_c.v_w) - sum_k ln s(-u_{n_k}.v_w), with its exact gradient.
/// `negatives` holds `pairs.size() * k` context rows.
SgnsGradient sgns_loss_and_grad(const SgnsParams& params, std::span<const TrainPair> pairs,
                                std::span<const std::uint32_t> negatives);
double sgns_loss(const SgnsParams& params, std::span<const TrainPair> pairs, std::span<const std::uint32_t> negatives);

/// Sparse adaptive-moment optimizer: moment state and parameters change only
/// for rows present in the step's gradient.
class SparseAdam {
public:
    SparseAdam(std::size_t rows, std::size_t dim, double lr, double beta1, double beta2, double eps);
    void step(SgnsParams& params, std::span<const std::uint32_t> center_rows, const RowMatrixD& center_grad,
              std::span<const std::uint32_t> context_rows, const RowMatrixD& context_grad);
    std::uint64_t steps() const { return t_; }

private:
    void update(RowMatrixD& p, RowMatrixD& m, RowMatrixD& v, std::span<const std::uint32_t> rows,
                const RowMatrixD& g, double step_size);
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    RowMatrixD m_center_, v_center_, m_context_, v_context_;
};

/// Holds parameters, optimizer and scratch buffers for one training run.
class SgnsTrainer {
public:
    SgnsTrainer(std::size_t rows, const NoiseTable& noise, const TrainConfig& cfg);

    /// Draws negatives, computes the batch loss and gradient, applies one optimizer step.
    /// Throws Error("numeric") on a non-finite loss.
    double step(std::span<const TrainPair> batch, Rng& rng);

    SgnsParams& params() { return params_; }
    const SgnsParams& params() const { return params_; }

private:
    double accumulate(std::span<const TrainPair> batch, std::span<const std::uint32_t> negatives);
    const NoiseTable& noise_;
    TrainConfig cfg_;
    SgnsParams params_;
    SparseAdam adam_;
    RowMatrixD grad_center_, grad_context_;
    std::vector<std::uint8_t> touched_center_, touched_context_;
    std::vector<std::uint32_t> rows_center_, rows_context_;
};

struct EmbeddingMatrix {
    std::vector<NodeId> row_nodes;    // node id per row, ascending
    std::vector<std::string> names;   // node name per row
    std::vector<std::uint8_t> is_compound;
    RowMatrixF center;                // published embedding
    RowMatrixD context;               // training only; not persisted
    std::string variant;
    std::string config_hash;
    Json config;
    std::vector<double> epoch_losses;

    std::size_t rows() const { return static_cast<std::size_t>(center.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(center.cols()); }
    std::optional<std::size_t> row_of(NodeId node) const;
    std::optional<std::size_t> row_of_name(std::string_view name) const;
};

EmbeddingMatrix train(const WalkCorpus& corpus, const TrainConfig& cfg);

void save_embedding(const EmbeddingMatrix& e, const std::filesystem::path& path);
EmbeddingMatrix load_embedding(const std::filesystem::path& path);

}  // namespace epicure
