#include "epicure/factors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "epicure/csv.hpp"

namespace epicure {

namespace {

using Idx = Eigen::Index;
constexpr double kVarFloor = 1e-6;
constexpr double kLog2Pi = 1.8378770664093453;

Eigen::MatrixXd sym_decorrelate(const Eigen::MatrixXd& W) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W * W.transpose());
    const Eigen::VectorXd s = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose() * W;
}

RowMatrixD unit_rows_of(const RowMatrixD& M) { return normalize_rows(M); }

}  // namespace

RowMatrixD residualize(const RowMatrixD& X, std::span<const int> groups) {
    if (groups.size() != static_cast<std::size_t>(X.rows())) fail("invalid_input", "residualize: group count mismatch");
    std::map<int, std::pair<Eigen::RowVectorXd, std::size_t>> sums;
    Eigen::RowVectorXd grand = Eigen::RowVectorXd::Zero(X.cols());
    std::size_t n_labeled = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i] < 0) continue;
        auto [it, fresh] = sums.try_emplace(groups[i], Eigen::RowVectorXd::Zero(X.cols()), 0);
        it->second.first += X.row(static_cast<Idx>(i));
        ++it->second.second;
        grand += X.row(static_cast<Idx>(i));
        ++n_labeled;
    }
    if (n_labeled == 0) fail("invalid_input", "residualize: no labeled rows");
    if (sums.size() < 2) log_warn("residualize: only one group among labeled rows");
    grand /= static_cast<double>(n_labeled);
    for (auto& [g, s] : sums) s.first /= static_cast<double>(s.second);
    RowMatrixD R(X.rows(), X.cols());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto r = static_cast<Idx>(i);
        R.row(r) = X.row(r) - (groups[i] < 0 ? grand : sums.at(groups[i]).first);
    }
    return R;
}

std::vector<int> hungarian_min(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
    if (n > m) fail("invalid_input", "hungarian: more rows than columns");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assign(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] > 0) assign[p[j] - 1] = j - 1;
    return assign;
}

Matching match_components(const RowMatrixD& A, const RowMatrixD& B) {
    const RowMatrixD Ua = unit_rows_of(A), Ub = unit_rows_of(B);
    const Eigen::MatrixXd C = (Ua * Ub.transpose()).cwiseAbs();
    Matching m;
    m.perm = hungarian_min(-C);
    for (std::size_t i = 0; i < m.perm.size(); ++i) m.cos.push_back(C(static_cast<Idx>(i), m.perm[i]));
    m.mean = m.cos.empty() ? 0.0 : std::accumulate(m.cos.begin(), m.cos.end(), 0.0) / static_cast<double>(m.cos.size());
    return m;
}

IcaFit fastica(const RowMatrixD& X, const IcaOptions& opts, std::uint64_t seed) {
    const Idx n = X.rows(), d = X.cols();
    const Idx c = static_cast<Idx>(opts.n_components);
    if (c < 1 || c > d || c >= n) fail("invalid_input", "fastica: need 1 <= n_components <= min(dim, rows - 1)");
    IcaFit fit;
    fit.mean = X.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - fit.mean;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((Xc.transpose() * Xc) / static_cast<double>(n));
    // Eigenvalues ascend; take the top c.
    Eigen::MatrixXd E(d, c);
    Eigen::VectorXd D(c);
    for (Idx k = 0; k < c; ++k) {
        E.col(k) = es.eigenvectors().col(d - 1 - k);
        D[k] = es.eigenvalues()[d - 1 - k];
    }
    if (D.minCoeff() <= 1e-12 * std::max(1.0, D.maxCoeff()))
        fail("numeric", "fastica: data rank is below n_components");
    const Eigen::MatrixXd K = D.cwiseSqrt().cwiseInverse().asDiagonal() * E.transpose();  // c x d
    const Eigen::MatrixXd Z = K * Xc.transpose();                                         // c x n

    Rng rng(seed);
    Eigen::MatrixXd W(c, c);
    for (Idx i = 0; i < c; ++i)
        for (Idx j = 0; j < c; ++j) W(i, j) = standard_normal(rng);
    W = sym_decorrelate(W);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        const Eigen::MatrixXd G = (W * Z).array().tanh().matrix();
        const Eigen::VectorXd gp = (1.0 - G.array().square()).rowwise().mean();
        Eigen::MatrixXd W1 = G * Z.transpose() * inv_n - gp.asDiagonal() * W;
        W1 = sym_decorrelate(W1);
        const double lim = ((W1 * W.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
        W = W1;
        fit.iterations = it + 1;
        if (lim < opts.tol) {
            fit.converged = true;
            break;
        }
    }
    RowMatrixD filters = W * K;                                           // c x d
    RowMatrixD mixing = (E * D.cwiseSqrt().asDiagonal() * W.transpose()).transpose();  // c x d
    const Eigen::MatrixXd S = filters * Xc.transpose();
    for (Idx f = 0; f < c; ++f) {
        const double skew = S.row(f).array().cube().mean();
        if (skew < 0) {
            filters.row(f) *= -1.0;
            mixing.row(f) *= -1.0;
        }
    }
    fit.filters = filters;
    fit.components = normalize_rows(mixing);
    return fit;
}

Eigen::VectorXd FactorSet::project(const RowMatrixD& X, std::size_t f) const {
    return (X.rowwise() - mean) * filters.row(static_cast<Idx>(f)).transpose();
}

FactorSet fastica_multiseed(const RowMatrixD& X, const FactorOptions& opts) {
    const std::size_t c = opts.ica.n_components;
    if (static_cast<std::size_t>(X.rows()) < 10 * c)
        fail("insufficient_data", "fastica needs at least " + std::to_string(10 * c) + " rows for " +
                                      std::to_string(c) + " components, got " + std::to_string(X.rows()));
    std::vector<IcaFit> fits;
    FactorSet fs;
    for (std::size_t s = 0; s < opts.seeds; ++s) {
        auto fit = fastica(X, opts.ica, derive_seed(opts.seed, 0x1CAULL, s));
        if (!fit.converged) {
            log_warn("fastica: seed " + std::to_string(s) + " did not converge in " +
                     std::to_string(opts.ica.max_iter) + " iterations; excluded");
            continue;
        }
        fs.usable_seeds.push_back(s);
        fits.push_back(std::move(fit));
    }
    if (fits.size() < 3)
        fail("numeric", "fastica: only " + std::to_string(fits.size()) + " of " + std::to_string(opts.seeds) +
                            " seeds converged; at least 3 are required");

    const std::size_t u = fits.size();
    std::vector<std::vector<Matching>> match(u, std::vector<Matching>(u));
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t a = 0; a < u; ++a) {
        double score = 0.0;
        for (std::size_t b = 0; b < u; ++b) {
            if (a == b) continue;
            match[a][b] = match_components(fits[a].components, fits[b].components);
            score += match[a][b].mean;
        }
        score /= static_cast<double>(u - 1);
        if (score > best_score) {
            best_score = score;
            best = a;
        }
    }
    std::vector<double> stability(c, 0.0);
    for (std::size_t b = 0; b < u; ++b) {
        if (b == best) continue;
        for (std::size_t f = 0; f < c; ++f) stability[f] += match[best][b].cos[f];
    }
    for (auto& s : stability) s /= static_cast<double>(u - 1);

    // Split-half: two fits on disjoint random halves of the rows.
    std::vector<std::size_t> perm(static_cast<std::size_t>(X.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(opts.seed, 0x5B11ULL));
    shuffle_in_place(perm, rng);
    const std::size_t half = perm.size() / 2;
    std::vector<std::size_t> ha(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<std::size_t> hb(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end());
    std::sort(ha.begin(), ha.end());
    std::sort(hb.begin(), hb.end());
    const auto fa = fastica(select_rows(X, ha), opts.ica, derive_seed(opts.seed, 0x5B12ULL, 0));
    const auto fb = fastica(select_rows(X, hb), opts.ica, derive_seed(opts.seed, 0x5B12ULL, 1));
    if (!fa.converged || !fb.converged) log_warn("fastica: a split-half fit did not converge");
    const auto ma = match_components(fits[best].components, fa.components);
    const auto mb = match_components(fits[best].components, fb.components);
    std::vector<double> split(c);
    for (std::size_t f = 0; f < c; ++f)
        split[f] = std::abs(fa.components.row(ma.perm[f]).dot(fb.components.row(mb.perm[f])));

    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return stability[a] > stability[b]; });
    const auto& keep = fits[best];
    fs.components.resize(static_cast<Idx>(c), X.cols());
    fs.filters.resize(static_cast<Idx>(c), X.cols());
    fs.mean = keep.mean;
    for (std::size_t r = 0; r < c; ++r) {
        const auto f = order[r];
        fs.components.row(static_cast<Idx>(r)) = keep.components.row(static_cast<Idx>(f));
        fs.filters.row(static_cast<Idx>(r)) = keep.filters.row(static_cast<Idx>(f));
        fs.stability.push_back(stability[f]);
        fs.split_half.push_back(split[f]);
        fs.kept.push_back(split[f] > opts.split_half_threshold ? 1 : 0);
    }
    fs.retained_seed = fs.usable_seeds[best];
    return fs;
}

RowMatrixD pca_scores(const RowMatrixD& X, std::size_t dim) {
    const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinU);
    const Idx k = std::min<Idx>(static_cast<Idx>(dim), svd.singularValues().size());
    RowMatrixD Y = svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal();
    // Fix the sign of each score column so the largest-magnitude entry is positive.
    for (Idx j = 0; j < Y.cols(); ++j) {
        Idx arg = 0;
        Y.col(j).cwiseAbs().maxCoeff(&arg);
        if (Y(arg, j) < 0) Y.col(j) *= -1.0;
    }
    return Y;
}

GmmFit fit_gmm(const RowMatrixD& Y, std::size_t k, std::size_t restarts, std::uint64_t seed, std::size_t max_iter) {
    const Idx n = Y.rows(), p = Y.cols();
    const Idx K = static_cast<Idx>(k);
    if (K < 1 || n < K) fail("invalid_input", "gmm: need 1 <= k <= rows");
    const Eigen::RowVectorXd gmean = Y.colwise().mean();
    Eigen::RowVectorXd gvar = (Y.rowwise() - gmean).array().square().colwise().mean();
    gvar = gvar.cwiseMax(kVarFloor);

    GmmFit best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    for (std::size_t rs = 0; rs < std::max<std::size_t>(1, restarts); ++rs) {
        Rng rng(derive_seed(seed, 0x6A3ULL, k, rs));
        RowMatrixD mu(K, p), var(K, p);
        // k-means++ style seeding of the means.
        std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
        mu.row(0) = Y.row(static_cast<Idx>(uniform_index(rng, static_cast<std::uint64_t>(n))));
        for (Idx c = 1; c < K; ++c) {
            double sum = 0.0;
            for (Idx i = 0; i < n; ++i) {
                d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (Y.row(i) - mu.row(c - 1)).squaredNorm());
                sum += d2[static_cast<std::size_t>(i)];
            }
            Idx pick = static_cast<Idx>(uniform_index(rng, static_cast<std::uint64_t>(n)));
            if (sum > 0) {
                double t = uniform01(rng) * sum;
                for (Idx i = 0; i < n; ++i) {
                    t -= d2[static_cast<std::size_t>(i)];
                    if (t < 0) {
                        pick = i;
                        break;
                    }
                }
            }
            mu.row(c) = Y.row(pick);
        }
        for (Idx c = 0; c < K; ++c) var.row(c) = gvar;
        Eigen::VectorXd w = Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));

        Eigen::MatrixXd logr(n, K);
        double ll = -std::numeric_limits<double>::infinity();
        bool floored = false;
        for (std::size_t it = 0; it < max_iter; ++it) {
            for (Idx c = 0; c < K; ++c) {
                const double base = std::log(w[c]) - 0.5 * (static_cast<double>(p) * kLog2Pi + var.row(c).array().log().sum());
                const Eigen::RowVectorXd inv = var.row(c).cwiseInverse();
                for (Idx i = 0; i < n; ++i)
                    logr(i, c) = base - 0.5 * ((Y.row(i) - mu.row(c)).array().square() * inv.array()).sum();
            }
            double new_ll = 0.0;
            for (Idx i = 0; i < n; ++i) {
                const double mx = logr.row(i).maxCoeff();
                const double lse = mx + std::log((logr.row(i).array() - mx).exp().sum());
                logr.row(i).array() -= lse;
                new_ll += lse;
            }
            const Eigen::MatrixXd R = logr.array().exp().matrix();
            const Eigen::VectorXd Nk = R.colwise().sum().transpose();
            for (Idx c = 0; c < K; ++c) {
                if (Nk[c] < 1e-10) {
                    mu.row(c) = Y.row(static_cast<Idx>(uniform_index(rng, static_cast<std::uint64_t>(n))));
                    var.row(c) = gvar;
                    w[c] = 1e-10;
                    continue;
                }
                mu.row(c) = (R.col(c).transpose() * Y) / Nk[c];
                Eigen::RowVectorXd v = (R.col(c).transpose() * (Y.rowwise() - mu.row(c)).array().square().matrix()) / Nk[c];
                if ((v.array() < kVarFloor).any()) floored = true;
                var.row(c) = v.cwiseMax(kVarFloor);
                w[c] = Nk[c] / static_cast<double>(n);
            }
            w /= w.sum();
            const bool done = std::abs(new_ll - ll) < 1e-8 * std::max(1.0, std::abs(new_ll));
            ll = new_ll;
            if (done) break;
        }
        if (ll > best.log_likelihood) {
            best.k = k;
            best.means = mu;
            best.vars = var;
            best.weights = w;
            best.log_likelihood = ll;
            best.floored = floored;
            best.assignment.assign(static_cast<std::size_t>(n), 0);
            for (Idx i = 0; i < n; ++i) {
                Idx arg = 0;
                logr.row(i).maxCoeff(&arg);
                best.assignment[static_cast<std::size_t>(i)] = static_cast<int>(arg);
            }
        }
    }
    const double n_params = static_cast<double>(K * 2 * p + (K - 1));
    best.bic = n_params * std::log(static_cast<double>(n)) - 2.0 * best.log_likelihood;
    return best;
}

GmmSelection select_gmm(const RowMatrixD& Y, const GmmSelectOptions& opts, std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(Y.rows());
    GmmSelection sel;
    auto all_rows = [&] {
        std::vector<std::size_t> r(n);
        std::iota(r.begin(), r.end(), 0);
        return r;
    };
    const double total_var = (Y.rowwise() - Y.colwise().mean()).squaredNorm();
    if (n == 0) return sel;
    if (total_var <= 0.0 || Y.cols() == 0) {
        sel.fallback = true;
        sel.groups.push_back(all_rows());
        return sel;
    }
    std::vector<GmmFit> fits;
    bool floored = false;
    for (std::size_t k = opts.k_min; k <= opts.k_max && k < n; ++k) {
        fits.push_back(fit_gmm(Y, k, opts.restarts, seed));
        floored = floored || fits.back().floored;
    }
    if (floored) log_warn("gmm: variance floor " + std::to_string(kVarFloor) + " applied");

    auto groups_of = [&](const GmmFit& f) {
        std::vector<std::vector<std::size_t>> g(f.k);
        for (std::size_t i = 0; i < n; ++i) g[static_cast<std::size_t>(f.assignment[i])].push_back(i);
        return g;
    };
    const GmmFit* chosen = nullptr;
    for (const auto& f : fits) {
        const auto g = groups_of(f);
        const bool ok = std::all_of(g.begin(), g.end(), [&](const auto& x) { return x.size() >= opts.min_members; });
        if (ok && (!chosen || f.bic < chosen->bic)) chosen = &f;
    }
    if (chosen) {
        sel.k = chosen->k;
        sel.groups = groups_of(*chosen);
    } else {
        sel.fallback = true;
        for (auto it = fits.rbegin(); it != fits.rend(); ++it) {
            auto g = groups_of(*it);
            std::erase_if(g, [&](const auto& x) { return x.size() < opts.min_members; });
            if (g.size() >= 2) {
                sel.k = it->k;
                sel.groups = std::move(g);
                break;
            }
        }
        if (sel.groups.empty()) sel.groups.push_back(all_rows());
    }
    std::sort(sel.groups.begin(), sel.groups.end(), [](const auto& a, const auto& b) {
        return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
    });
    return sel;
}

std::vector<std::size_t> high_set(std::span<const double> values, double top_fraction) {
    std::vector<std::size_t> out;
    if (values.empty()) return out;
    const double thr = percentile(std::vector<double>(values.begin(), values.end()), 100.0 * (1.0 - top_fraction));
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] >= thr) out.push_back(i);
    return out;
}

void score_mode(Mode& m, const RowMatrixD& U) {
    const Idx n = U.rows();
    m.coherence = (U * m.pole).mean();
    if (n < 2) {
        m.pairwise = 1.0;
        return;
    }
    const Eigen::MatrixXd G = U * U.transpose();
    m.pairwise = (G.sum() - G.trace()) / static_cast<double>(n * (n - 1));
}

double random_pair_baseline(const RowMatrixD& U, std::size_t n_pairs, std::uint64_t seed) {
    const auto n = static_cast<std::uint64_t>(U.rows());
    if (n < 2 || n_pairs == 0) return 0.0;
    Rng rng(derive_seed(seed, 0xBA5EULL));
    double total = 0.0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const auto i = uniform_index(rng, n);
        auto j = uniform_index(rng, n - 1);
        if (j >= i) ++j;
        total += U.row(static_cast<Idx>(i)).dot(U.row(static_cast<Idx>(j)));
    }
    return total / static_cast<double>(n_pairs);
}

std::vector<Mode> modes_from_rows(const IngredientView& view, const RowMatrixD& unit_rows,
                                  std::span<const std::size_t> rows, const std::string& source,
                                  const std::string& kind, const ModeOptions& opts, std::uint64_t seed) {
    std::vector<Mode> out;
    const std::size_t m = rows.size();
    if (m < opts.min_high) {
        log_warn("modes: source " + source + " skipped, high set has " + std::to_string(m) + " members (< " +
                 std::to_string(opts.min_high) + ")");
        return out;
    }
    const RowMatrixD sub = select_rows(unit_rows, rows);
    const RowMatrixD Y = pca_scores(sub, std::min(opts.max_pca_dim, m - 1));
    const auto sel = select_gmm(Y, opts.gmm, seed);
    int id = 0;
    for (const auto& g : sel.groups) {
        Mode mode;
        mode.source = source;
        mode.kind = kind;
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(unit_rows.cols());
        std::vector<std::size_t> member_rows;
        for (auto local : g) {
            const auto r = rows[local];
            member_rows.push_back(r);
            sum += unit_rows.row(static_cast<Idx>(r)).transpose();
        }
        std::sort(member_rows.begin(), member_rows.end());
        const double norm = sum.norm();
        if (norm < 1e-12) {
            log_warn("modes: source " + source + " produced a mode with zero mean; dropped");
            continue;
        }
        mode.pole = sum / norm;
        for (auto r : member_rows) {
            mode.member_ids.push_back(view.ids[r]);
            mode.members.push_back(view.names[r]);
        }
        const RowMatrixD Um = select_rows(unit_rows, member_rows);
        score_mode(mode, Um);
        // Default label: three members closest to the pole.
        const Eigen::VectorXd c = Um * mode.pole;
        std::vector<std::size_t> ord(member_rows.size());
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return c[static_cast<Idx>(a)] > c[static_cast<Idx>(b)]; });
        for (std::size_t t = 0; t < std::min<std::size_t>(3, ord.size()); ++t)
            mode.label += (t ? ", " : "") + mode.members[ord[t]];
        mode.mode_id = id++;
        out.push_back(std::move(mode));
    }
    return out;
}

const Mode* ModeAtlas::find(std::string_view source, int mode_id) const {
    for (const auto& m : modes)
        if (m.source == source && m.mode_id == mode_id) return &m;
    return nullptr;
}

Json ModeAtlas::to_json() const {
    Json ms = Json::array();
    for (const auto& m : modes) {
        ms.push_back({{"source", m.source},
                      {"kind", m.kind},
                      {"mode_id", m.mode_id},
                      {"label", m.label},
                      {"members", m.members},
                      {"member_ids", m.member_ids},
                      {"coherence", m.coherence},
                      {"pairwise", m.pairwise},
                      {"pole", std::vector<double>(m.pole.data(), m.pole.data() + m.pole.size())}});
    }
    Json fs = Json::array();
    for (std::size_t f = 0; f < factor_stability.size(); ++f)
        fs.push_back({{"index", f},
                      {"stability", factor_stability[f]},
                      {"split_half", factor_split_half[f]},
                      {"kept", factor_kept[f] != 0}});
    return Json{{"kind", "mode_atlas"}, {"model", model}, {"dim", dim}, {"baseline", baseline}, {"factors", fs}, {"modes", ms}};
}

ModeAtlas ModeAtlas::from_json(const Json& j) {
    ModeAtlas a;
    try {
        if (j.value("kind", "") != "mode_atlas") fail("corrupt_artifact", "not a mode atlas");
        a.model = j.at("model").get<std::string>();
        a.dim = j.at("dim").get<std::size_t>();
        a.baseline = j.at("baseline").get<double>();
        for (const auto& f : j.at("factors")) {
            a.factor_stability.push_back(f.at("stability").get<double>());
            a.factor_split_half.push_back(f.at("split_half").get<double>());
            a.factor_kept.push_back(f.at("kept").get<bool>() ? 1 : 0);
        }
        for (const auto& mj : j.at("modes")) {
            Mode m;
            m.source = mj.at("source").get<std::string>();
            m.kind = mj.at("kind").get<std::string>();
            m.mode_id = mj.at("mode_id").get<int>();
            m.label = mj.value("label", "");
            m.members = mj.at("members").get<std::vector<std::string>>();
            m.member_ids = mj.at("member_ids").get<std::vector<IngredientId>>();
            m.coherence = mj.at("coherence").get<double>();
            m.pairwise = mj.at("pairwise").get<double>();
            const auto pole = mj.at("pole").get<std::vector<double>>();
            m.pole = Eigen::Map<const Eigen::VectorXd>(pole.data(), static_cast<Idx>(pole.size()));
            a.modes.push_back(std::move(m));
        }
    } catch (const Json::exception& e) {
        fail("corrupt_artifact", std::string("malformed atlas: ") + e.what());
    }
    return a;
}

ModeAtlas build_atlas(const IngredientView& view, const CanonicalVocabulary& vocab, const AtlasOptions& opts,
                      const std::string& model_name, FactorSet* factors_out) {
    ModeAtlas atlas;
    atlas.model = model_name;
    atlas.dim = static_cast<std::size_t>(view.X.cols());
    const RowMatrixD U = normalize_rows(view.X);

    std::map<std::string, int> codes;
    for (auto id : view.ids)
        if (vocab[id].food_group) codes.emplace(*vocab[id].food_group, 0);
    int c = 0;
    for (auto& [g, v] : codes) v = c++;
    std::vector<int> groups;
    for (auto id : view.ids) groups.push_back(vocab[id].food_group ? codes[*vocab[id].food_group] : -1);

    const RowMatrixD R = codes.empty() ? RowMatrixD(U.rowwise() - U.colwise().mean()) : residualize(U, groups);
    const FactorSet fs = fastica_multiseed(R, opts.factors);
    atlas.factor_stability = fs.stability;
    atlas.factor_split_half = fs.split_half;
    atlas.factor_kept = fs.kept;

    std::uint64_t src = 0;
    auto add = [&](std::vector<Mode> ms) {
        for (auto& m : ms) atlas.modes.push_back(std::move(m));
    };
    for (std::size_t f = 0; f < fs.size(); ++f) {
        ++src;
        if (!fs.kept[f]) continue;
        const Eigen::VectorXd proj = fs.project(R, f);
        const auto high = high_set(std::span<const double>(proj.data(), static_cast<std::size_t>(proj.size())),
                                   opts.modes.top_fraction);
        add(modes_from_rows(view, U, high, "F_" + std::to_string(f), "factor", opts.modes,
                            derive_seed(opts.factors.seed, 0x30DEULL, src)));
    }
    if (opts.supervised_sources) {
        auto from_values = [&](const std::string& name, const std::vector<std::size_t>& rows,
                               const std::vector<double>& vals) {
            ++src;
            if (rows.empty()) return;
            std::vector<std::size_t> high;
            for (auto local : high_set(vals, opts.modes.top_fraction)) high.push_back(rows[local]);
            add(modes_from_rows(view, U, high, name, "property", opts.modes,
                                derive_seed(opts.factors.seed, 0x30DEULL, src)));
        };
        {
            std::vector<std::size_t> rows;
            std::vector<double> vals;
            for (std::size_t i = 0; i < view.size(); ++i)
                if (const auto nv = vocab[view.ids[i]].nova_class) {
                    rows.push_back(i);
                    vals.push_back(*nv);
                }
            from_values("nova", rows, vals);
        }
        for (const auto& p : vocab.probe_names()) {
            std::vector<std::size_t> rows;
            std::vector<double> vals;
            for (std::size_t i = 0; i < view.size(); ++i) {
                const auto& sc = vocab[view.ids[i]].continuous_scores;
                if (auto it = sc.find(p); it != sc.end()) {
                    rows.push_back(i);
                    vals.push_back(it->second);
                }
            }
            from_values(p, rows, vals);
        }
        for (const auto& [g, code] : codes) {
            ++src;
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < view.size(); ++i)
                if (groups[i] == code) rows.push_back(i);
            add(modes_from_rows(view, U, rows, "fg:" + g, "property", opts.modes,
                                derive_seed(opts.factors.seed, 0x30DEULL, src)));
        }
    }
    std::stable_sort(atlas.modes.begin(), atlas.modes.end(), [](const Mode& a, const Mode& b) {
        return a.source != b.source ? a.source < b.source : a.mode_id < b.mode_id;
    });
    atlas.baseline = random_pair_baseline(U, opts.baseline_pairs, opts.factors.seed);
    if (factors_out) *factors_out = fs;
    return atlas;
}

void apply_labels(ModeAtlas& atlas, const std::filesystem::path& label_csv) {
    const auto text = read_text_file(label_csv);
    std::size_t line_no = 0, applied = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = csv::split_line(line);
        if (line_no == 1 && !f.empty() && f[0] == "source") continue;
        if (f.size() < 3)
            fail("invalid_input", label_csv.string() + ":" + std::to_string(line_no) + ": expected source,mode_id,label");
        int id = 0;
        try {
            id = std::stoi(f[1]);
        } catch (const std::exception&) {
            fail("invalid_input", label_csv.string() + ":" + std::to_string(line_no) + ": bad mode_id '" + f[1] + "'");
        }
        bool hit = false;
        for (auto& m : atlas.modes)
            if (m.source == f[0] && m.mode_id == id) {
                m.label = f[2];
                hit = true;
            }
        if (!hit) log_warn("labels: no mode " + f[0] + "/" + f[1] + " in atlas");
        applied += hit;
    }
    log_info("labels: applied " + std::to_string(applied) + " labels");
}

void save_atlas(const ModeAtlas& atlas, const std::filesystem::path& path) {
    write_text_file(path, dump_json(atlas.to_json()));
}

ModeAtlas load_atlas(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        fail("corrupt_artifact", path.string() + ": " + e.what());
    }
    return ModeAtlas::from_json(j);
}

}  // namespace epicure
