#include "epicure/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>

namespace epicure {

namespace {

using Idx = Eigen::Index;

// Indices of the k largest entries of `sims` excluding `self`; descending by value,
// ties by index ascending.
std::vector<std::size_t> top_k_excluding(const Eigen::VectorXd& sims, std::size_t self, std::size_t k) {
    std::vector<std::size_t> idx;
    idx.reserve(static_cast<std::size_t>(sims.size()));
    for (Idx j = 0; j < sims.size(); ++j)
        if (static_cast<std::size_t>(j) != self) idx.push_back(static_cast<std::size_t>(j));
    k = std::min(k, idx.size());
    auto better = [&](std::size_t a, std::size_t b) {
        const double sa = sims[static_cast<Idx>(a)], sb = sims[static_cast<Idx>(b)];
        return sa != sb ? sa > sb : a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    idx.resize(k);
    return idx;
}

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0) h -= x * std::log(x);
    return h;
}

std::vector<std::vector<double>> contingency(std::span<const int> a, std::span<const int> b) {
    std::map<int, std::size_t> ia, ib;
    for (int x : a) ia.emplace(x, 0);
    for (int x : b) ib.emplace(x, 0);
    std::size_t n = 0;
    for (auto& [k, v] : ia) v = n++;
    n = 0;
    for (auto& [k, v] : ib) v = n++;
    std::vector<std::vector<double>> t(ia.size(), std::vector<double>(ib.size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) t[ia[a[i]]][ib[b[i]]] += 1.0;
    return t;
}

}  // namespace

std::vector<double> covariance_spectrum(const RowMatrixD& X) {
    if (X.rows() < 2) fail("invalid_input", "covariance needs at least 2 rows");
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd C = X.rowwise() - mean;
    const Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    std::vector<double> ev(static_cast<std::size_t>(es.eigenvalues().size()));
    for (std::size_t i = 0; i < ev.size(); ++i) ev[i] = std::max(0.0, es.eigenvalues()[static_cast<Idx>(i)]);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

double participation_ratio(const RowMatrixD& X) {
    const auto ev = covariance_spectrum(X);
    double s = 0.0, s2 = 0.0;
    for (double l : ev) {
        s += l;
        s2 += l * l;
    }
    if (s2 <= 0.0) fail("invalid_input", "participation ratio undefined: zero covariance");
    return s * s / s2;
}

double pca_variance_share(const std::vector<double>& spectrum, std::size_t k) {
    const double total = std::accumulate(spectrum.begin(), spectrum.end(), 0.0);
    if (total <= 0.0) return 0.0;
    k = std::min(k, spectrum.size());
    const double top = std::accumulate(spectrum.begin(), spectrum.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
    return std::min(1.0, top / total);
}

double avg_pairwise_cosine(const RowMatrixD& X, std::uint64_t seed, std::size_t exact_limit, std::size_t n_pairs) {
    std::vector<Idx> keep;
    for (Idx r = 0; r < X.rows(); ++r)
        if (X.row(r).norm() > 0) keep.push_back(r);
    if (keep.size() != static_cast<std::size_t>(X.rows()))
        log_warn("avg_pairwise_cosine: excluded " + std::to_string(X.rows() - static_cast<Idx>(keep.size())) +
                 " zero-norm rows");
    const std::size_t n = keep.size();
    if (n < 2) fail("invalid_input", "avg_pairwise_cosine needs at least 2 nonzero rows");
    RowMatrixD U(static_cast<Idx>(n), X.cols());
    for (std::size_t i = 0; i < n; ++i) U.row(static_cast<Idx>(i)) = X.row(keep[i]) / X.row(keep[i]).norm();

    if (n <= exact_limit) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto ui = U.row(static_cast<Idx>(i));
            double row = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) row += ui.dot(U.row(static_cast<Idx>(j)));
            total += row;
        }
        return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
    }
    Rng rng(derive_seed(seed, 0xA7C05ULL));
    double total = 0.0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const auto i = uniform_index(rng, n);
        auto j = uniform_index(rng, n - 1);
        if (j >= i) ++j;
        total += U.row(static_cast<Idx>(i)).dot(U.row(static_cast<Idx>(j)));
    }
    return total / static_cast<double>(n_pairs);
}

KMeansResult kmeans(const RowMatrixD& X, std::size_t k, std::size_t restarts, std::uint64_t seed,
                    std::size_t max_iter) {
    const std::size_t n = static_cast<std::size_t>(X.rows());
    if (k == 0 || n < k) fail("invalid_input", "kmeans needs 1 <= k <= rows");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t rs = 0; rs < std::max<std::size_t>(1, restarts); ++rs) {
        Rng rng(derive_seed(seed, 0x4b4dULL, rs));
        RowMatrixD C(static_cast<Idx>(k), X.cols());
        std::vector<double> d2(n, std::numeric_limits<double>::infinity());
        std::size_t first = uniform_index(rng, n);
        C.row(0) = X.row(static_cast<Idx>(first));
        for (std::size_t c = 1; c < k; ++c) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                d2[i] = std::min(d2[i], (X.row(static_cast<Idx>(i)) - C.row(static_cast<Idx>(c - 1))).squaredNorm());
                sum += d2[i];
            }
            std::size_t pick = n - 1;
            if (sum > 0) {
                double u = uniform01(rng) * sum;
                for (std::size_t i = 0; i < n; ++i) {
                    u -= d2[i];
                    if (u < 0) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = uniform_index(rng, n);
            }
            C.row(static_cast<Idx>(c)) = X.row(static_cast<Idx>(pick));
        }

        std::vector<int> labels(n, -1);
        std::vector<double> dist(n, 0.0);
        for (std::size_t it = 0; it < max_iter; ++it) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int bl = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < k; ++c) {
                    const double d = (X.row(static_cast<Idx>(i)) - C.row(static_cast<Idx>(c))).squaredNorm();
                    if (d < bd) {
                        bd = d;
                        bl = static_cast<int>(c);
                    }
                }
                dist[i] = bd;
                if (labels[i] != bl) {
                    labels[i] = bl;
                    changed = true;
                }
            }
            if (!changed) break;
            RowMatrixD S = RowMatrixD::Zero(static_cast<Idx>(k), X.cols());
            std::vector<std::size_t> cnt(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                S.row(labels[i]) += X.row(static_cast<Idx>(i));
                ++cnt[static_cast<std::size_t>(labels[i])];
            }
            for (std::size_t c = 0; c < k; ++c) {
                if (cnt[c] > 0) {
                    C.row(static_cast<Idx>(c)) = S.row(static_cast<Idx>(c)) / static_cast<double>(cnt[c]);
                } else {
                    // Empty cluster: move it to the point farthest from its center.
                    const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
                    C.row(static_cast<Idx>(c)) = X.row(static_cast<Idx>(far));
                    dist[far] = 0.0;
                }
            }
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += (X.row(static_cast<Idx>(i)) - C.row(labels[i])).squaredNorm();
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.labels = labels;
            best.centers = C;
        }
    }
    return best;
}

double nmi_from_contingency(const std::vector<std::vector<double>>& table) {
    double total = 0.0;
    const std::size_t ra = table.size();
    const std::size_t cb = ra ? table[0].size() : 0;
    std::vector<double> pa(ra, 0.0), pb(cb, 0.0);
    for (std::size_t i = 0; i < ra; ++i)
        for (std::size_t j = 0; j < cb; ++j) {
            pa[i] += table[i][j];
            pb[j] += table[i][j];
            total += table[i][j];
        }
    if (total <= 0) fail("invalid_input", "NMI of an empty table");
    for (auto& x : pa) x /= total;
    for (auto& x : pb) x /= total;
    double mi = 0.0;
    for (std::size_t i = 0; i < ra; ++i)
        for (std::size_t j = 0; j < cb; ++j) {
            const double p = table[i][j] / total;
            if (p > 0) mi += p * std::log(p / (pa[i] * pb[j]));
        }
    const double ha = entropy(pa), hb = entropy(pb);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    const double denom = 0.5 * (ha + hb);
    return std::clamp(mi / denom, 0.0, 1.0);
}

double nmi(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size() || a.empty()) fail("invalid_input", "NMI needs two equal-length nonempty labelings");
    return nmi_from_contingency(contingency(a, b));
}

double soft_nmi(const std::vector<std::vector<int>>& label_sets, std::span<const int> clusters) {
    if (label_sets.size() != clusters.size() || clusters.empty())
        fail("invalid_input", "soft NMI needs equal-length nonempty inputs");
    std::map<int, std::size_t> il, ic;
    for (const auto& s : label_sets)
        for (int l : s) il.emplace(l, 0);
    for (int c : clusters) ic.emplace(c, 0);
    std::size_t n = 0;
    for (auto& [k, v] : il) v = n++;
    n = 0;
    for (auto& [k, v] : ic) v = n++;
    std::vector<std::vector<double>> t(il.size(), std::vector<double>(ic.size(), 0.0));
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (label_sets[i].empty()) continue;
        const double w = 1.0 / static_cast<double>(label_sets[i].size());
        for (int l : label_sets[i]) t[il[l]][ic[clusters[i]]] += w;
    }
    return nmi_from_contingency(t);
}

double knn_purity(const RowMatrixD& unit_rows, std::span<const int> labels, std::size_t k) {
    const std::size_t n = static_cast<std::size_t>(unit_rows.rows());
    if (n < 2 || labels.size() != n) fail("invalid_input", "kNN purity needs >= 2 labeled rows");
    const Eigen::MatrixXd G = unit_rows * unit_rows.transpose();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto nb = top_k_excluding(G.col(static_cast<Idx>(i)), i, k);
        std::size_t same = 0;
        for (auto j : nb) same += labels[j] == labels[i];
        total += static_cast<double>(same) / static_cast<double>(nb.size());
    }
    return total / static_cast<double>(n);
}

double knn_jaccard_purity(const RowMatrixD& unit_rows, const std::vector<std::vector<int>>& label_sets, std::size_t k) {
    const std::size_t n = static_cast<std::size_t>(unit_rows.rows());
    if (n < 2 || label_sets.size() != n) fail("invalid_input", "kNN Jaccard purity needs >= 2 labeled rows");
    auto jaccard = [](const std::vector<int>& a, const std::vector<int>& b) {
        std::vector<int> sa = a, sb = b, inter, uni;
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
        std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(uni));
        return uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    };
    const Eigen::MatrixXd G = unit_rows * unit_rows.transpose();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto nb = top_k_excluding(G.col(static_cast<Idx>(i)), i, k);
        double s = 0.0;
        for (auto j : nb) s += jaccard(label_sets[i], label_sets[j]);
        total += s / static_cast<double>(nb.size());
    }
    return total / static_cast<double>(n);
}

double silhouette_cosine(const RowMatrixD& X, std::span<const int> labels) {
    const std::size_t n = static_cast<std::size_t>(X.rows());
    if (labels.size() != n) fail("invalid_input", "silhouette: label count mismatch");
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    std::vector<std::size_t> keep;
    std::size_t dropped_labels = 0;
    for (auto& [l, c] : counts) dropped_labels += c < 2;
    for (std::size_t i = 0; i < n; ++i)
        if (counts[labels[i]] >= 2) keep.push_back(i);
    if (dropped_labels)
        log_warn("silhouette: " + std::to_string(dropped_labels) + " label(s) with fewer than 2 members excluded");
    std::map<int, std::size_t> lid;
    for (auto& [l, c] : counts)
        if (c >= 2) lid.emplace(l, lid.size());
    if (lid.size() < 2) fail("invalid_input", "silhouette needs at least 2 labels with 2+ members");

    const RowMatrixD U = normalize_rows(select_rows(X, keep));
    const Eigen::MatrixXd G = U * U.transpose();
    const std::size_t m = keep.size();
    std::vector<std::size_t> li(m), size(lid.size(), 0);
    for (std::size_t a = 0; a < m; ++a) {
        li[a] = lid[labels[keep[a]]];
        ++size[li[a]];
    }
    double total = 0.0;
    std::vector<double> sum(lid.size());
    for (std::size_t a = 0; a < m; ++a) {
        std::fill(sum.begin(), sum.end(), 0.0);
        for (std::size_t b = 0; b < m; ++b)
            if (b != a) sum[li[b]] += 1.0 - G(static_cast<Idx>(a), static_cast<Idx>(b));
        const double ai = sum[li[a]] / static_cast<double>(size[li[a]] - 1);
        double bi = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < lid.size(); ++c)
            if (c != li[a]) bi = std::min(bi, sum[c] / static_cast<double>(size[c]));
        const double den = std::max(ai, bi);
        total += den > 0 ? (bi - ai) / den : 0.0;
    }
    return total / static_cast<double>(m);
}

Interval bootstrap_ci(const std::function<double(std::span<const std::size_t>)>& metric, std::size_t n,
                      std::size_t n_iter, double frac, std::uint64_t seed) {
    if (n == 0 || n_iter == 0) fail("invalid_input", "bootstrap needs n > 0 and n_iter > 0");
    const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
    std::vector<double> vals;
    vals.reserve(n_iter);
    std::vector<std::size_t> idx(n);
    for (std::size_t it = 0; it < n_iter; ++it) {
        Rng rng(derive_seed(seed, 0xB007ULL, it));
        std::iota(idx.begin(), idx.end(), 0);
        // Partial Fisher-Yates: first m entries become a uniform subset.
        for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
        std::vector<std::size_t> sub(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
        std::sort(sub.begin(), sub.end());
        vals.push_back(metric(sub));
    }
    return {percentile(vals, 2.5), percentile(vals, 97.5)};
}

Json GeometryReport::to_json() const {
    auto m = [](const MetricWithCi& x) { return Json{{"value", x.value}, {"ci95", {x.ci95.lo, x.ci95.hi}}}; };
    return Json{
        {"n_ingredients", n_ingredients},
        {"dim", dim},
        {"isotropy", {{"pr", pr}, {"avg_cos", avg_cos}, {"pca_top10", pca_top10}, {"pca_top50", pca_top50}}},
        {"food_group",
         {{"n", food_group_n},
          {"n_labels", food_group_labels},
          {"nmi", m(food_group_nmi)},
          {"knn5_purity", m(food_group_knn_purity)},
          {"silhouette", m(food_group_silhouette)}}},
        {"cuisine",
         {{"n", cuisine_n},
          {"soft_nmi", m(cuisine_soft_nmi)},
          {"knn5_jaccard", m(cuisine_knn_jaccard)},
          {"silhouette", m(cuisine_silhouette)}}},
    };
}

namespace {

MetricWithCi with_ci(const std::function<double(std::span<const std::size_t>)>& metric, std::size_t n,
                     const GeometryOptions& o, std::uint64_t key) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    MetricWithCi r;
    r.value = metric(all);
    r.ci95 = bootstrap_ci(metric, n, o.bootstrap_iters, o.bootstrap_frac, derive_seed(o.seed, key));
    return r;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, std::span<const std::size_t> idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

std::size_t distinct_count(const std::vector<int>& v) {
    std::vector<int> s = v;
    std::sort(s.begin(), s.end());
    return static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
}

}  // namespace

GeometryReport geometry_report(const IngredientView& view, const CanonicalVocabulary& vocab,
                               const GeometryOptions& opts) {
    GeometryReport rep;
    rep.n_ingredients = view.size();
    rep.dim = static_cast<std::size_t>(view.X.cols());
    const auto spectrum = covariance_spectrum(view.X);
    rep.pr = participation_ratio(view.X);
    rep.avg_cos = avg_pairwise_cosine(view.X, opts.seed);
    rep.pca_top10 = pca_variance_share(spectrum, 10);
    rep.pca_top50 = pca_variance_share(spectrum, 50);

    const RowMatrixD U = normalize_rows(view.X);

    // Food groups: single label, integer codes in sorted name order.
    {
        std::map<std::string, int> codes;
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < view.size(); ++i) {
            const auto& fg = vocab[view.ids[i]].food_group;
            if (!fg) continue;
            codes.emplace(*fg, 0);
            rows.push_back(i);
        }
        int c = 0;
        for (auto& [k, v] : codes) v = c++;
        std::vector<int> labels;
        for (auto i : rows) labels.push_back(codes[*vocab[view.ids[i]].food_group]);
        const RowMatrixD Uf = select_rows(U, rows);
        rep.food_group_n = rows.size();
        rep.food_group_labels = codes.size();
        if (rows.size() >= 2 && codes.size() >= 2) {
            auto nmi_metric = [&](std::span<const std::size_t> idx) {
                const auto lab = pick(labels, idx);
                const auto k = distinct_count(lab);
                const auto km = kmeans(select_rows(Uf, idx), k, opts.kmeans_restarts, opts.seed);
                return nmi(lab, km.labels);
            };
            auto knn_metric = [&](std::span<const std::size_t> idx) {
                return knn_purity(select_rows(Uf, idx), pick(labels, idx), opts.knn_k);
            };
            auto sil_metric = [&](std::span<const std::size_t> idx) {
                return silhouette_cosine(select_rows(Uf, idx), pick(labels, idx));
            };
            rep.food_group_nmi = with_ci(nmi_metric, rows.size(), opts, 1);
            rep.food_group_knn_purity = with_ci(knn_metric, rows.size(), opts, 2);
            rep.food_group_silhouette = with_ci(sil_metric, rows.size(), opts, 3);
        } else {
            log_warn("geometry: fewer than 2 food groups among model ingredients; food-group metrics skipped");
        }
    }

    // Cuisine: multi-label. Silhouette uses each item's first tag in canonical order.
    {
        std::vector<std::size_t> rows;
        std::vector<std::vector<int>> sets;
        std::vector<int> first;
        for (std::size_t i = 0; i < view.size(); ++i) {
            const auto& tags = vocab[view.ids[i]].cuisine_tags;
            if (tags.empty()) continue;
            rows.push_back(i);
            std::vector<int> s;
            for (auto t : tags) s.push_back(static_cast<int>(t));
            sets.push_back(s);
            first.push_back(s.front());
        }
        rep.cuisine_n = rows.size();
        const RowMatrixD Uc = select_rows(U, rows);
        std::set<int> regions;
        for (const auto& s : sets) regions.insert(s.begin(), s.end());
        if (rows.size() >= 2 && regions.size() >= 2) {
            auto snmi_metric = [&](std::span<const std::size_t> idx) {
                const auto ls = pick(sets, idx);
                std::set<int> present;
                for (const auto& s : ls) present.insert(s.begin(), s.end());
                const auto km = kmeans(select_rows(Uc, idx), std::min(present.size(), idx.size()),
                                       opts.kmeans_restarts, opts.seed);
                return soft_nmi(ls, km.labels);
            };
            auto jac_metric = [&](std::span<const std::size_t> idx) {
                return knn_jaccard_purity(select_rows(Uc, idx), pick(sets, idx), opts.knn_k);
            };
            auto sil_metric = [&](std::span<const std::size_t> idx) {
                return silhouette_cosine(select_rows(Uc, idx), pick(first, idx));
            };
            rep.cuisine_soft_nmi = with_ci(snmi_metric, rows.size(), opts, 4);
            rep.cuisine_knn_jaccard = with_ci(jac_metric, rows.size(), opts, 5);
            rep.cuisine_silhouette = with_ci(sil_metric, rows.size(), opts, 6);
        } else {
            log_warn("geometry: fewer than 2 cuisine regions among model ingredients; cuisine metrics skipped");
        }
    }
    return rep;
}

}  // namespace epicure
