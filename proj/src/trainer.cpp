#include "epicure/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace epicure {

namespace {

constexpr std::uint64_t kEpochSalt = 0x45504f4348ULL;  // "EPOCH"
constexpr std::uint64_t kInitSalt = 0x494e4954ULL;     // "INIT"
constexpr std::size_t kLockStripes = 64;

/// -ln(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) {
    return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

void TrainConfig::validate() const {
    if (dim < 2) fail("precondition", "dim must be >= 2");
    if (window < 1 || negatives < 1 || batch_size < 1 || epochs < 1)
        fail("precondition", "window, negatives, batch_size and epochs must be positive");
    if (!(lr >= 0.0) || !(neg_exponent > 0.0)) fail("precondition", "lr must be >= 0 and neg_exponent > 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
        fail("precondition", "invalid adaptive-moment hyperparameters");
}

Json TrainConfig::to_json() const {
    return {{"dim", dim},       {"window", window}, {"negatives", negatives}, {"batch_size", batch_size},
            {"lr", lr},         {"epochs", epochs}, {"seed", seed},           {"neg_exponent", neg_exponent},
            {"beta1", beta1},   {"beta2", beta2},   {"eps", eps}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
    TrainConfig c;
    c.dim = j.value("dim", c.dim);
    c.window = j.value("window", c.window);
    c.negatives = j.value("negatives", c.negatives);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.neg_exponent = j.value("neg_exponent", c.neg_exponent);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    return c;
}

std::string TrainConfig::hash() const { return sha256_hex(to_json().dump()); }

void extract_pairs(std::span<const std::uint32_t> walk, std::size_t window, std::vector<TrainPair>& out) {
    const std::size_t n = walk.size();
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= window ? t - window : 0;
        const std::size_t hi = std::min(n - 1, t + window);
        for (std::size_t c = lo; c <= hi; ++c) {
            if (c == t || walk[c] == walk[t]) continue;
            out.push_back({walk[t], walk[c]});
        }
    }
}

std::vector<TrainPair> extract_pairs(const WalkCorpus& corpus, std::size_t window) {
    if (window < 1) fail("precondition", "window must be >= 1");
    std::vector<TrainPair> out;
    for (std::size_t w = 0; w < corpus.size(); ++w) extract_pairs(corpus.walk(w), window, out);
    return out;
}

NoiseTable::NoiseTable(std::span<const std::uint64_t> counts, double exponent) {
    std::vector<double> weights;
    double total = 0.0;
    for (const auto c : counts) {
        weights.push_back(std::pow(static_cast<double>(c), exponent));
        total += weights.back();
    }
    if (!(total > 0.0)) fail("precondition", "noise distribution has zero mass");
    for (const auto w : weights) probs_.push_back(w / total);
    dist_ = std::discrete_distribution<std::uint32_t>(weights.begin(), weights.end());
}

std::uint32_t NoiseTable::draw(Rng& rng) const { return dist_(rng); }

SgnsGradient sgns_loss_and_grad(const SgnsParams& params, std::span<const TrainPair> pairs,
                                std::span<const std::uint32_t> negatives) {
    const auto dim = static_cast<std::size_t>(params.center.cols());
    const std::size_t k = pairs.empty() ? 0 : negatives.size() / pairs.size();
    SgnsGradient g;
    g.center = RowMatrixD::Zero(params.center.rows(), params.center.cols());
    g.context = RowMatrixD::Zero(params.context.rows(), params.context.cols());
    const double scale = 1.0 / static_cast<double>(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double* v = params.center.row(pairs[p].center).data();
        double* gv = g.center.row(pairs[p].center).data();
        const double* u = params.context.row(pairs[p].context).data();
        const double s = dot(u, v, dim);
        g.loss += neg_log_sigmoid(s);
        const double coef = -(1.0 - sigmoid(s)) * scale;
        axpy(coef, u, gv, dim);
        axpy(coef, v, g.context.row(pairs[p].context).data(), dim);
        for (std::size_t j = 0; j < k; ++j) {
            const auto n = negatives[p * k + j];
            const double* un = params.context.row(n).data();
            const double sn = dot(un, v, dim);
            g.loss += neg_log_sigmoid(-sn);
            const double cn = sigmoid(sn) * scale;
            axpy(cn, un, gv, dim);
            axpy(cn, v, g.context.row(n).data(), dim);
        }
    }
    g.loss *= scale;
    return g;
}

double sgns_loss(const SgnsParams& params, std::span<const TrainPair> pairs, std::span<const std::uint32_t> negatives) {
    const auto dim = static_cast<std::size_t>(params.center.cols());
    const std::size_t k = negatives.size() / pairs.size();
    double loss = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double* v = params.center.row(pairs[p].center).data();
        loss += neg_log_sigmoid(dot(params.context.row(pairs[p].context).data(), v, dim));
        for (std::size_t j = 0; j < k; ++j)
            loss += neg_log_sigmoid(-dot(params.context.row(negatives[p * k + j]).data(), v, dim));
    }
    return loss / static_cast<double>(pairs.size());
}

SparseAdam::SparseAdam(std::size_t rows, std::size_t dim, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_center_(RowMatrixD::Zero(rows, dim)), v_center_(RowMatrixD::Zero(rows, dim)),
      m_context_(RowMatrixD::Zero(rows, dim)), v_context_(RowMatrixD::Zero(rows, dim)) {}

void SparseAdam::update(RowMatrixD& p, RowMatrixD& m, RowMatrixD& v, std::span<const std::uint32_t> rows,
                        const RowMatrixD& g, double step_size) {
    const auto dim = p.cols();
    for (const auto r : rows) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            const double gi = g(r, c);
            m(r, c) = beta1_ * m(r, c) + (1.0 - beta1_) * gi;
            v(r, c) = beta2_ * v(r, c) + (1.0 - beta2_) * gi * gi;
            p(r, c) -= step_size * m(r, c) / (std::sqrt(v(r, c)) + eps_);
        }
    }
}

void SparseAdam::step(SgnsParams& params, std::span<const std::uint32_t> center_rows, const RowMatrixD& center_grad,
                      std::span<const std::uint32_t> context_rows, const RowMatrixD& context_grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double step_size = lr_ * std::sqrt(bc2) / bc1;
    update(params.center, m_center_, v_center_, center_rows, center_grad, step_size);
    update(params.context, m_context_, v_context_, context_rows, context_grad, step_size);
}

SgnsTrainer::SgnsTrainer(std::size_t rows, const NoiseTable& noise, const TrainConfig& cfg)
    : noise_(noise), cfg_(cfg), adam_(rows, cfg.dim, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps) {
    cfg_.validate();
    Rng rng(derive_seed(cfg.seed, kInitSalt));
    const double half = 0.5 / static_cast<double>(cfg.dim);
    params_.center.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cfg.dim));
    for (Eigen::Index r = 0; r < params_.center.rows(); ++r)
        for (Eigen::Index c = 0; c < params_.center.cols(); ++c) params_.center(r, c) = (2.0 * uniform01(rng) - 1.0) * half;
    params_.context = RowMatrixD::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cfg.dim));
    grad_center_ = RowMatrixD::Zero(params_.center.rows(), params_.center.cols());
    grad_context_ = RowMatrixD::Zero(params_.center.rows(), params_.center.cols());
    touched_center_.assign(rows, 0);
    touched_context_.assign(rows, 0);
}

double SgnsTrainer::accumulate(std::span<const TrainPair> batch, std::span<const std::uint32_t> negatives) {
    const std::size_t dim = cfg_.dim, k = cfg_.negatives;
    const double scale = 1.0 / static_cast<double>(batch.size());
    auto pair_loss = [&](std::size_t p, double* gv_out, std::vector<std::pair<std::uint32_t, double>>& ctx_coefs) {
        const double* v = params_.center.row(batch[p].center).data();
        const double* u = params_.context.row(batch[p].context).data();
        const double s = dot(u, v, dim);
        double loss = neg_log_sigmoid(s);
        const double coef = -(1.0 - sigmoid(s)) * scale;
        axpy(coef, u, gv_out, dim);
        ctx_coefs.emplace_back(batch[p].context, coef);
        for (std::size_t j = 0; j < k; ++j) {
            const auto n = negatives[p * k + j];
            const double* un = params_.context.row(n).data();
            const double sn = dot(un, v, dim);
            loss += neg_log_sigmoid(-sn);
            const double cn = sigmoid(sn) * scale;
            axpy(cn, un, gv_out, dim);
            ctx_coefs.emplace_back(n, cn);
        }
        return loss;
    };

    if (cfg_.workers <= 1) {
        double loss = 0.0;
        std::vector<std::pair<std::uint32_t, double>> coefs;
        for (std::size_t p = 0; p < batch.size(); ++p) {
            coefs.clear();
            loss += pair_loss(p, grad_center_.row(batch[p].center).data(), coefs);
            const double* v = params_.center.row(batch[p].center).data();
            for (const auto& [row, c] : coefs) axpy(c, v, grad_context_.row(row).data(), dim);
        }
        return loss * scale;
    }

    std::array<std::mutex, kLockStripes> stripes;
    std::vector<double> partial(cfg_.workers, 0.0);
    auto worker = [&](unsigned w) {
        std::vector<std::pair<std::uint32_t, double>> coefs;
        std::vector<double> gv(dim);
        const std::size_t lo = batch.size() * w / cfg_.workers, hi = batch.size() * (w + 1) / cfg_.workers;
        for (std::size_t p = lo; p < hi; ++p) {
            coefs.clear();
            std::fill(gv.begin(), gv.end(), 0.0);
            partial[w] += pair_loss(p, gv.data(), coefs);
            const double* v = params_.center.row(batch[p].center).data();
            {
                std::lock_guard lock(stripes[batch[p].center % kLockStripes]);
                axpy(1.0, gv.data(), grad_center_.row(batch[p].center).data(), dim);
            }
            for (const auto& [row, c] : coefs) {
                std::lock_guard lock(stripes[row % kLockStripes]);
                axpy(c, v, grad_context_.row(row).data(), dim);
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < cfg_.workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
    double loss = 0.0;
    for (const auto l : partial) loss += l;
    return loss * scale;
}

double SgnsTrainer::step(std::span<const TrainPair> batch, Rng& rng) {
    if (batch.empty()) fail("precondition", "empty batch");
    std::vector<std::uint32_t> negatives(batch.size() * cfg_.negatives);
    for (auto& n : negatives) n = noise_.draw(rng);

    rows_center_.clear();
    rows_context_.clear();
    for (std::size_t p = 0; p < batch.size(); ++p) {
        if (!touched_center_[batch[p].center]) {
            touched_center_[batch[p].center] = 1;
            rows_center_.push_back(batch[p].center);
        }
        if (!touched_context_[batch[p].context]) {
            touched_context_[batch[p].context] = 1;
            rows_context_.push_back(batch[p].context);
        }
    }
    for (const auto n : negatives) {
        if (!touched_context_[n]) {
            touched_context_[n] = 1;
            rows_context_.push_back(n);
        }
    }
    std::sort(rows_center_.begin(), rows_center_.end());
    std::sort(rows_context_.begin(), rows_context_.end());

    const double loss = accumulate(batch, negatives);
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite SGNS loss (" << loss << ") on a batch of " << batch.size() << " pairs; first pairs:";
        for (std::size_t p = 0; p < std::min<std::size_t>(batch.size(), 5); ++p)
            os << " (" << batch[p].center << "," << batch[p].context << ")";
        os << "; max |center| " << params_.center.cwiseAbs().maxCoeff() << ", max |context| "
           << params_.context.cwiseAbs().maxCoeff();
        fail("numeric", os.str());
    }
    adam_.step(params_, rows_center_, grad_center_, rows_context_, grad_context_);

    for (const auto r : rows_center_) {
        grad_center_.row(r).setZero();
        touched_center_[r] = 0;
    }
    for (const auto r : rows_context_) {
        grad_context_.row(r).setZero();
        touched_context_[r] = 0;
    }
    return loss;
}

std::optional<std::size_t> EmbeddingMatrix::row_of(NodeId node) const {
    const auto it = std::lower_bound(row_nodes.begin(), row_nodes.end(), node);
    if (it == row_nodes.end() || *it != node) return std::nullopt;
    return static_cast<std::size_t>(it - row_nodes.begin());
}

std::optional<std::size_t> EmbeddingMatrix::row_of_name(std::string_view name) const {
    for (std::size_t r = 0; r < names.size(); ++r)
        if (names[r] == name) return r;
    return std::nullopt;
}

EmbeddingMatrix train(const WalkCorpus& corpus, const TrainConfig& cfg) {
    cfg.validate();
    // Rows: every node that occurs in the corpus, ascending by node id.
    std::vector<std::int64_t> row_of_node(corpus.node_names.size(), -1);
    for (const auto t : corpus.tokens) row_of_node.at(t) = 0;
    EmbeddingMatrix emb;
    for (std::size_t n = 0; n < row_of_node.size(); ++n) {
        if (row_of_node[n] < 0) continue;
        row_of_node[n] = static_cast<std::int64_t>(emb.row_nodes.size());
        emb.row_nodes.push_back(static_cast<NodeId>(n));
        emb.names.push_back(corpus.node_names[n]);
        emb.is_compound.push_back(n >= corpus.n_ingredients ? 1 : 0);
    }
    const std::size_t rows = emb.row_nodes.size();

    // Walks re-expressed in row space once; pairless walks are dropped here.
    std::vector<std::vector<std::uint32_t>> walks;
    std::vector<std::uint64_t> counts(rows, 0);
    std::size_t total_pairs = 0;
    std::vector<TrainPair> probe;
    for (std::size_t w = 0; w < corpus.size(); ++w) {
        const auto walk = corpus.walk(w);
        if (walk.size() < 2) continue;
        std::vector<std::uint32_t> rw;
        rw.reserve(walk.size());
        for (const auto t : walk) {
            rw.push_back(static_cast<std::uint32_t>(row_of_node[t]));
            ++counts[rw.back()];
        }
        probe.clear();
        extract_pairs(rw, cfg.window, probe);
        if (probe.empty()) continue;
        total_pairs += probe.size();
        walks.push_back(std::move(rw));
    }
    if (total_pairs == 0) fail("precondition", "walk corpus yields no training pairs");

    const NoiseTable noise(counts, cfg.neg_exponent);
    SgnsTrainer trainer(rows, noise, cfg);
    std::vector<std::size_t> order(walks.size());
    std::vector<TrainPair> batch;
    batch.reserve(cfg.batch_size + 64);
    std::vector<TrainPair> pending;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, kEpochSalt, epoch));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_in_place(order, rng);
        double loss_sum = 0.0;
        std::size_t loss_pairs = 0;
        batch.clear();
        auto flush = [&] {
            if (batch.empty()) return;
            loss_sum += trainer.step(batch, rng) * static_cast<double>(batch.size());
            loss_pairs += batch.size();
            batch.clear();
        };
        for (const auto w : order) {
            pending.clear();
            extract_pairs(walks[w], cfg.window, pending);
            for (const auto& p : pending) {
                batch.push_back(p);
                if (batch.size() == cfg.batch_size) flush();
            }
        }
        flush();
        emb.epoch_losses.push_back(loss_sum / static_cast<double>(loss_pairs));
        log_info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
                 " mean loss " + std::to_string(emb.epoch_losses.back()));
    }

    emb.center = trainer.params().center.cast<float>();
    emb.context = trainer.params().context;
    emb.variant = std::string(variant_name(corpus.schema.variant));
    emb.config = cfg.to_json();
    emb.config_hash = cfg.hash();
    return emb;
}

void save_embedding(const EmbeddingMatrix& e, const std::filesystem::path& path) {
    Container c;
    c.header = {{"kind", "embedding"},    {"dim", e.dim()},           {"rows", e.rows()},
                {"variant", e.variant},   {"config_hash", e.config_hash}, {"config", e.config},
                {"names", e.names},       {"node_ids", e.row_nodes},  {"is_compound", e.is_compound},
                {"epoch_losses", e.epoch_losses}};
    std::vector<std::uint8_t> payload(static_cast<std::size_t>(e.center.size()) * sizeof(float));
    if (!payload.empty()) std::memcpy(payload.data(), e.center.data(), payload.size());
    c.add_section("center_f32", std::move(payload));
    write_container(path, std::move(c));
}

EmbeddingMatrix load_embedding(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.header.value("kind", "") != "embedding") fail("format", path.string() + " is not an embedding artifact");
    EmbeddingMatrix e;
    const std::size_t dim = c.header.at("dim"), rows = c.header.at("rows");
    e.variant = c.header.at("variant");
    e.config_hash = c.header.at("config_hash");
    e.config = c.header.at("config");
    e.names = c.header.at("names").get<std::vector<std::string>>();
    e.row_nodes = c.header.at("node_ids").get<std::vector<NodeId>>();
    e.is_compound = c.header.at("is_compound").get<std::vector<std::uint8_t>>();
    e.epoch_losses = c.header.value("epoch_losses", std::vector<double>{});
    const auto& payload = c.section("center_f32");
    if (payload.size() != rows * dim * sizeof(float) || e.names.size() != rows || e.row_nodes.size() != rows ||
        e.is_compound.size() != rows)
        fail("format", path.string() + ": embedding payload does not match its header");
    e.center.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    if (!payload.empty()) std::memcpy(e.center.data(), payload.data(), payload.size());
    if (!e.center.allFinite()) fail("format", path.string() + ": embedding contains non-finite entries");
    return e;
}

}  // namespace epicure
