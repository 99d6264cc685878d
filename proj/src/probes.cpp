#include "epicure/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "epicure/graph.hpp"

namespace epicure {

namespace {

using Idx = Eigen::Index;

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed);
    shuffle_in_place(p, rng);
    return p;
}

// fold[i] = position of i in a seeded permutation, modulo k.
std::vector<std::uint32_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    const auto p = permutation(n, seed);
    std::vector<std::uint32_t> fold(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold[p[pos]] = static_cast<std::uint32_t>(pos % k);
    return fold;
}

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Split {
    std::vector<std::size_t> train, test;
};

Split split_fold(const std::vector<std::uint32_t>& fold, std::uint32_t f) {
    Split s;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? s.test : s.train).push_back(i);
    return s;
}

std::vector<double> pick(std::span<const double> v, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

bool is_constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

Interval ci_of(const std::vector<double>& v) {
    if (v.empty()) return {};
    return {percentile(v, 2.5), percentile(v, 97.5)};
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
        i = j + 1;
    }
    return r;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) fail("invalid_input", "spearman needs two equal-length series");
    if (is_constant(a) || is_constant(b)) fail("invalid_input", "spearman undefined for a constant series");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double ma = mean_of(ra), mb = mean_of(rb);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Eigen::VectorXd ridge_fit(const RowMatrixD& X, std::span<const double> y, double lambda) {
    const Idx n = X.rows(), d = X.cols();
    if (static_cast<std::size_t>(n) != y.size() || n == 0) fail("invalid_input", "ridge: row/label mismatch");
    const Eigen::RowVectorXd mx = X.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - mx;
    Eigen::VectorXd yc(n);
    const double my = mean_of(y);
    for (Idx i = 0; i < n; ++i) yc[i] = y[static_cast<std::size_t>(i)] - my;
    if (n >= d) {
        Eigen::MatrixXd A = Xc.transpose() * Xc;
        A.diagonal().array() += lambda;
        return A.ldlt().solve(Xc.transpose() * yc);
    }
    Eigen::MatrixXd K = Xc * Xc.transpose();
    K.diagonal().array() += lambda;
    return Xc.transpose() * K.ldlt().solve(yc);
}

std::vector<double> ridge_lambda_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

double select_ridge_lambda(const RowMatrixD& X, std::span<const double> y, std::uint64_t seed) {
    const auto fold = assign_folds(y.size(), 3, derive_seed(seed, 0x1A3BDAULL));
    double best = 0.0, best_mse = std::numeric_limits<double>::infinity();
    for (double lam : ridge_lambda_grid()) {
        double sse = 0.0;
        for (std::uint32_t f = 0; f < 3; ++f) {
            const auto s = split_fold(fold, f);
            if (s.train.empty() || s.test.empty()) continue;
            const RowMatrixD Xt = select_rows(X, s.train);
            const auto yt = pick(y, s.train);
            const Eigen::VectorXd w = ridge_fit(Xt, yt, lam);
            const Eigen::RowVectorXd mx = Xt.colwise().mean();
            const double my = mean_of(yt);
            for (auto i : s.test) {
                const double pred = my + (X.row(static_cast<Idx>(i)) - mx).dot(w);
                sse += (pred - y[i]) * (pred - y[i]);
            }
        }
        if (sse < best_mse) {
            best_mse = sse;
            best = lam;
        }
    }
    return best;
}

std::string_view stratum_name(Stratum s) {
    switch (s) {
        case Stratum::BakedInCf: return "baked_in_cf";
        case Stratum::HeldOutCf: return "held_out_cf";
        case Stratum::Usda: return "usda";
        case Stratum::Cuisine: return "cuisine";
        case Stratum::Other: return "other";
    }
    return "other";
}

Stratum stratum_of_probe(std::string_view name) {
    if (name.starts_with("usda_")) return Stratum::Usda;
    if (name.starts_with("cf_")) {
        const auto rest = name.substr(3);
        const auto t = parse_compound_type(rest);
        if (t && compound_type_names()[*t] != "other" && normalize_name(rest) == compound_type_names()[*t])
            return Stratum::BakedInCf;
        return Stratum::HeldOutCf;
    }
    return Stratum::Other;
}

Json ProbeResult::to_json() const {
    Json j{{"name", name},
           {"stratum", stratum_name(stratum)},
           {"estimate", estimate},
           {"ci95", {ci95.lo, ci95.hi}},
           {"n", n},
           {"repeat_estimates", repeat_estimates}};
    if (stratum != Stratum::Cuisine) j["lambda"] = lambda;
    return j;
}

ProbeResult continuous_direction_cv(const RowMatrixD& X, std::span<const double> scores, const ProbeOptions& opts) {
    const std::size_t n = scores.size();
    if (static_cast<std::size_t>(X.rows()) != n) fail("invalid_input", "probe: row/score mismatch");
    if (n < opts.min_n) fail("insufficient_data", "probe needs at least " + std::to_string(opts.min_n) +
                                                      " scored ingredients, got " + std::to_string(n));
    if (is_constant(scores)) fail("invalid_input", "probe scores are constant; rank correlation undefined");
    ProbeResult r;
    r.n = n;
    r.lambda = select_ridge_lambda(X, scores, opts.seed);
    for (std::size_t rep = 0; rep < opts.repeats; ++rep) {
        const auto fold = assign_folds(n, opts.folds, derive_seed(opts.seed, 0xF01DULL, rep));
        std::vector<double> proj(n, 0.0);
        for (std::uint32_t f = 0; f < opts.folds; ++f) {
            const auto s = split_fold(fold, f);
            if (s.test.empty()) continue;
            const RowMatrixD Xt = select_rows(X, s.train);
            Eigen::VectorXd w = ridge_fit(Xt, pick(scores, s.train), r.lambda);
            const double wn = w.norm();
            if (wn > 0) w /= wn;
            std::vector<double> fp, fs;
            for (auto i : s.test) {
                proj[i] = X.row(static_cast<Idx>(i)).dot(w);
                fp.push_back(proj[i]);
                fs.push_back(scores[i]);
            }
            if (fp.size() >= 3 && !is_constant(fp) && !is_constant(fs)) r.fold_estimates.push_back(spearman(fp, fs));
        }
        r.repeat_estimates.push_back(is_constant(proj) ? 0.0 : spearman(proj, scores));
        r.fold_of.push_back(fold);
    }
    r.estimate = mean_of(r.repeat_estimates);
    r.ci95 = ci_of(r.fold_estimates.empty() ? r.repeat_estimates : r.fold_estimates);
    return r;
}

double cohens_d(std::span<const double> pos, std::span<const double> neg) {
    const std::size_t n1 = pos.size(), n0 = neg.size();
    if (n1 < 2 || n0 < 2) fail("invalid_input", "Cohen's d needs at least 2 members per class");
    const double m1 = mean_of(pos), m0 = mean_of(neg);
    double v1 = 0, v0 = 0;
    for (double x : pos) v1 += (x - m1) * (x - m1);
    for (double x : neg) v0 += (x - m0) * (x - m0);
    const double pooled = std::sqrt((v1 + v0) / static_cast<double>(n1 + n0 - 2));
    if (pooled == 0.0) return m1 == m0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m1 - m0);
    return (m1 - m0) / pooled;
}

ProbeResult cuisine_direction_cv(const RowMatrixD& X, std::span<const std::uint8_t> positive,
                                 const ProbeOptions& opts) {
    const std::size_t n = positive.size();
    if (static_cast<std::size_t>(X.rows()) != n) fail("invalid_input", "probe: row/label mismatch");
    std::vector<std::size_t> pos_rows, neg_rows;
    for (std::size_t i = 0; i < n; ++i) (positive[i] ? pos_rows : neg_rows).push_back(i);
    if (pos_rows.size() < opts.min_n)
        fail("insufficient_data", "region needs at least " + std::to_string(opts.min_n) +
                                      " tagged ingredients, got " + std::to_string(pos_rows.size()));
    if (neg_rows.size() < 2) fail("insufficient_data", "region needs at least 2 untagged ingredients");
    ProbeResult r;
    r.stratum = Stratum::Cuisine;
    r.n = n;
    for (std::size_t rep = 0; rep < opts.repeats; ++rep) {
        std::vector<std::uint32_t> fold(n);
        const auto fp = assign_folds(pos_rows.size(), opts.folds, derive_seed(opts.seed, 0xC0DEULL, rep, 1));
        const auto fn = assign_folds(neg_rows.size(), opts.folds, derive_seed(opts.seed, 0xC0DEULL, rep, 0));
        for (std::size_t i = 0; i < pos_rows.size(); ++i) fold[pos_rows[i]] = fp[i];
        for (std::size_t i = 0; i < neg_rows.size(); ++i) fold[neg_rows[i]] = fn[i];

        std::vector<double> all_pos, all_neg;
        for (std::uint32_t f = 0; f < opts.folds; ++f) {
            Eigen::RowVectorXd mp = Eigen::RowVectorXd::Zero(X.cols()), mn = mp;
            std::size_t np = 0, nn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (fold[i] == f) continue;
                if (positive[i]) {
                    mp += X.row(static_cast<Idx>(i));
                    ++np;
                } else {
                    mn += X.row(static_cast<Idx>(i));
                    ++nn;
                }
            }
            if (np < 2 || nn < 2) {
                log_warn("cuisine probe: fold skipped, fewer than 2 members in a training class");
                continue;
            }
            mp /= static_cast<double>(np);
            mn /= static_cast<double>(nn);
            Eigen::RowVectorXd dir = mp - mn;
            const double dn = dir.norm();
            if (dn > 0) dir /= dn;
            const Eigen::RowVectorXd mid = 0.5 * (mp + mn);
            std::vector<double> tp, tn;
            for (std::size_t i = 0; i < n; ++i) {
                if (fold[i] != f) continue;
                const double p = (X.row(static_cast<Idx>(i)) - mid).dot(dir);
                (positive[i] ? tp : tn).push_back(p);
            }
            all_pos.insert(all_pos.end(), tp.begin(), tp.end());
            all_neg.insert(all_neg.end(), tn.begin(), tn.end());
            if (tp.size() >= 2 && tn.size() >= 2) r.fold_estimates.push_back(std::abs(cohens_d(tp, tn)));
        }
        if (all_pos.size() >= 2 && all_neg.size() >= 2)
            r.repeat_estimates.push_back(std::abs(cohens_d(all_pos, all_neg)));
        r.fold_of.push_back(fold);
    }
    if (r.repeat_estimates.empty()) fail("insufficient_data", "cuisine probe: every fold was skipped");
    r.estimate = mean_of(r.repeat_estimates);
    r.ci95 = ci_of(r.fold_estimates.empty() ? r.repeat_estimates : r.fold_estimates);
    return r;
}

Json ProbeReport::to_json() const {
    Json res = Json::array();
    for (const auto& p : results) res.push_back(p.to_json());
    Json st = Json::array();
    for (const auto& s : strata) st.push_back({{"stratum", stratum_name(s.stratum)}, {"count", s.count}, {"mean", s.mean}});
    return Json{{"probes", res}, {"strata", st}};
}

ProbeReport stratified_report(const IngredientView& view, const CanonicalVocabulary& vocab, const ProbeOptions& opts) {
    ProbeReport rep;
    const auto& probes = vocab.probe_names();
    if (probes.empty()) log_warn("probes: vocabulary has no score columns");
    for (std::size_t p = 0; p < probes.size(); ++p) {
        std::vector<std::size_t> rows;
        std::vector<double> y;
        for (std::size_t i = 0; i < view.size(); ++i) {
            const auto& sc = vocab[view.ids[i]].continuous_scores;
            const auto it = sc.find(probes[p]);
            if (it == sc.end()) continue;
            rows.push_back(i);
            y.push_back(it->second);
        }
        if (rows.size() < opts.min_n) {
            log_warn("probes: " + probes[p] + " skipped, only " + std::to_string(rows.size()) + " scored ingredients");
            continue;
        }
        if (is_constant(y)) {
            log_warn("probes: " + probes[p] + " skipped, constant scores");
            continue;
        }
        ProbeOptions o = opts;
        o.seed = derive_seed(opts.seed, 0x9B0BEULL, p);
        auto r = continuous_direction_cv(select_rows(view.X, rows), y, o);
        r.name = probes[p];
        r.stratum = stratum_of_probe(probes[p]);
        rep.results.push_back(std::move(r));
    }

    std::vector<std::size_t> specific;
    for (std::size_t i = 0; i < view.size(); ++i)
        if (vocab[view.ids[i]].cuisine_specific()) specific.push_back(i);
    const RowMatrixD Xs = select_rows(view.X, specific);
    for (auto region : all_regions()) {
        std::vector<std::uint8_t> pos;
        std::size_t npos = 0;
        for (auto i : specific) {
            pos.push_back(vocab[view.ids[i]].has_tag(region) ? 1 : 0);
            npos += pos.back();
        }
        const std::string name(region_name(region));
        if (npos < opts.min_n || specific.size() - npos < 2) {
            log_warn("probes: region " + name + " skipped, " + std::to_string(npos) + " tagged ingredients");
            continue;
        }
        ProbeOptions o = opts;
        o.seed = derive_seed(opts.seed, 0xC1C1ULL, static_cast<std::uint64_t>(region));
        auto r = cuisine_direction_cv(Xs, pos, o);
        r.name = name;
        rep.results.push_back(std::move(r));
    }

    for (auto s : {Stratum::BakedInCf, Stratum::HeldOutCf, Stratum::Usda, Stratum::Cuisine, Stratum::Other}) {
        StratumSummary sum{s, 0, 0.0};
        for (const auto& r : rep.results)
            if (r.stratum == s) {
                ++sum.count;
                sum.mean += r.estimate;
            }
        if (sum.count == 0) continue;
        sum.mean /= static_cast<double>(sum.count);
        rep.strata.push_back(sum);
    }
    return rep;
}

}  // namespace epicure
