#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/QR>

#include "epicure/embedding_view.hpp"
#include "epicure/geometry.hpp"
#include "support.hpp"

using namespace epicure;

namespace {

RowMatrixD gaussian(Rng& rng, std::size_t n, std::size_t d) {
    RowMatrixD X(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) X(i, j) = standard_normal(rng);
    return X;
}

/// PR from traces: (tr C)^2 / tr(C^2), no eigendecomposition.
double pr_oracle(const RowMatrixD& X) {
    Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    Eigen::MatrixXd C = Xc.transpose() * Xc / static_cast<double>(X.rows() - 1);
    const double t = C.trace();
    return t * t / (C.array() * C.array()).sum();
}

double cosine_oracle(const RowMatrixD& X) {
    double s = 0.0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
            s += X.row(i).dot(X.row(j)) / (X.row(i).norm() * X.row(j).norm());
            ++n;
        }
    return s / static_cast<double>(n);
}

/// NMI from a direct contingency count, arithmetic-mean normalization.
double nmi_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> pa, pb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1;
        pa[a[i]] += 1;
        pb[b[i]] += 1;
    }
    double mi = 0, ha = 0, hb = 0;
    for (auto& [k, c] : joint) mi += c / n * std::log(c * n / (pa[k.first] * pb[k.second]));
    for (auto& [k, c] : pa) ha -= c / n * std::log(c / n);
    for (auto& [k, c] : pb) hb -= c / n * std::log(c / n);
    return mi / (0.5 * (ha + hb));
}

double silhouette_oracle(const RowMatrixD& X, const std::vector<int>& labels) {
    const RowMatrixD U = normalize_rows(X);
    std::map<int, std::size_t> size;
    for (int l : labels) size[l]++;
    double total = 0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        if (size[labels[i]] < 2) continue;
        std::map<int, double> sum;
        for (Eigen::Index j = 0; j < U.rows(); ++j)
            if (i != j && size[labels[j]] >= 2) sum[labels[j]] += 1.0 - U.row(i).dot(U.row(j));
        const double a = sum[labels[i]] / static_cast<double>(size[labels[i]] - 1);
        double b = 1e300;
        for (auto& [l, s] : sum)
            if (l != labels[i]) b = std::min(b, s / static_cast<double>(size[l]));
        total += (b - a) / std::max(a, b);
        ++n;
    }
    return total / static_cast<double>(n);
}

double knn_purity_oracle(const RowMatrixD& U, const std::vector<int>& labels, std::size_t k) {
    double total = 0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        std::vector<std::pair<double, Eigen::Index>> d;
        for (Eigen::Index j = 0; j < U.rows(); ++j)
            if (j != i) d.push_back({-U.row(i).dot(U.row(j)), j});
        std::sort(d.begin(), d.end());
        std::size_t same = 0;
        for (std::size_t t = 0; t < k; ++t) same += labels[d[t].second] == labels[i];
        total += static_cast<double>(same) / static_cast<double>(k);
    }
    return total / static_cast<double>(U.rows());
}

/// Gaussian blobs around `k` well-separated centers.
RowMatrixD blobs(Rng& rng, std::size_t k, std::size_t per, std::size_t d, double spread, std::vector<int>& labels) {
    RowMatrixD X(k * per, d);
    labels.clear();
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t p = 0; p < per; ++p) {
            const std::size_t r = c * per + p;
            for (std::size_t j = 0; j < d; ++j) X(r, j) = spread * standard_normal(rng) + (j == c ? 1.0 : 0.0);
            labels.push_back(static_cast<int>(c));
        }
    return X;
}

}  // namespace

TEST_CASE("participation ratio of rank-1 data is 1") {
    Rng rng(1);
    RowMatrixD X(200, 10);
    Eigen::RowVectorXd dir = Eigen::RowVectorXd::Random(10);
    for (int i = 0; i < 200; ++i) X.row(i) = standard_normal(rng) * dir;
    CHECK(participation_ratio(X) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("participation ratio of isotropic Gaussian sample is near dim") {
    Rng rng(2);
    const RowMatrixD X = gaussian(rng, 5000, 50);
    const double pr = participation_ratio(X);
    CHECK(pr >= 45.0);
    CHECK(pr <= 50.0);
    CHECK(pr == doctest::Approx(pr_oracle(X)).epsilon(1e-9));
}

TEST_CASE("participation ratio matches trace oracle and is rotation invariant") {
    Rng rng(3);
    for (int t = 0; t < 5; ++t) {
        RowMatrixD X = gaussian(rng, 300, 20);
        for (int j = 0; j < 20; ++j) X.col(j) *= 1.0 + j * 0.3 * (t + 1);
        const double pr = participation_ratio(X);
        CHECK(std::abs(pr - pr_oracle(X)) < 1e-9 * pr);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(gaussian(rng, 20, 20)));
        const Eigen::MatrixXd Q = qr.householderQ();
        const RowMatrixD XQ = X * Q;
        CHECK(std::abs(participation_ratio(XQ) - pr) < 1e-9);
        CHECK(pr >= 1.0);
        CHECK(pr <= 20.0);
    }
}

TEST_CASE("participation ratio rejects zero covariance and single rows") {
    RowMatrixD same = RowMatrixD::Ones(5, 3);
    CHECK_THROWS(participation_ratio(same));
    RowMatrixD one = RowMatrixD::Ones(1, 3);
    CHECK_THROWS(participation_ratio(one));
}

TEST_CASE("pca variance shares are ordered fractions") {
    Rng rng(4);
    RowMatrixD X = gaussian(rng, 400, 60);
    for (int j = 0; j < 60; ++j) X.col(j) *= 1.0 / (1.0 + j);
    const auto spec = covariance_spectrum(X);
    for (std::size_t i = 1; i < spec.size(); ++i) CHECK(spec[i] <= spec[i - 1] + 1e-12);
    const double t10 = pca_variance_share(spec, 10), t50 = pca_variance_share(spec, 50);
    CHECK(t10 >= 0.0);
    CHECK(t10 <= t50);
    CHECK(t50 <= 1.0);
    CHECK(pca_variance_share(spec, 1000) == doctest::Approx(1.0));
    const double sum = std::accumulate(spec.begin(), spec.end(), 0.0);
    CHECK(pca_variance_share(spec, 1) == doctest::Approx(spec[0] / sum));
}

TEST_CASE("average pairwise cosine trivial cases") {
    const RowMatrixD I = RowMatrixD::Identity(8, 8);
    CHECK(std::abs(avg_pairwise_cosine(I)) < 1e-12);
    RowMatrixD same(6, 4);
    for (int i = 0; i < 6; ++i) same.row(i) << 1, 2, 3, 4;
    CHECK(avg_pairwise_cosine(same) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("average pairwise cosine exact mode matches double loop") {
    Rng rng(5);
    RowMatrixD X = gaussian(rng, 1000, 16);
    X.rowwise() += Eigen::RowVectorXd::Constant(16, 0.3);
    CHECK(std::abs(avg_pairwise_cosine(X) - cosine_oracle(X)) < 1e-12);
}

TEST_CASE("average pairwise cosine excludes zero rows") {
    Rng rng(6);
    RowMatrixD X = gaussian(rng, 50, 8);
    RowMatrixD Y(52, 8);
    Y << X, RowMatrixD::Zero(2, 8);
    CHECK(avg_pairwise_cosine(Y) == doctest::Approx(avg_pairwise_cosine(X)).epsilon(1e-12));
}

TEST_CASE("subsampled average cosine agrees with exact mode within 3 standard errors") {
    Rng rng(7);
    RowMatrixD X = gaussian(rng, 600, 8);
    X.rowwise() += Eigen::RowVectorXd::Constant(8, 0.5);
    const double exact = avg_pairwise_cosine(X);
    const std::size_t pairs = 20000;
    const double sub = avg_pairwise_cosine(X, 11, 100, pairs);
    // Standard error from the spread of the exact pairwise cosines.
    double s2 = 0;
    std::size_t n = 0;
    for (int i = 0; i < 600; ++i)
        for (int j = i + 1; j < 600; ++j) {
            const double c = X.row(i).dot(X.row(j)) / (X.row(i).norm() * X.row(j).norm());
            s2 += (c - exact) * (c - exact);
            ++n;
        }
    const double se = std::sqrt(s2 / static_cast<double>(n) / static_cast<double>(pairs));
    CHECK(std::abs(sub - exact) < 3.0 * se);
    CHECK(sub == avg_pairwise_cosine(X, 11, 100, pairs));
}

TEST_CASE("nmi identical labelings and relabeling give 1") {
    std::vector<int> a = {0, 0, 1, 1, 2, 2, 2};
    CHECK(nmi(a, a) == doctest::Approx(1.0));
    std::vector<int> b = {5, 5, 3, 3, 9, 9, 9};
    CHECK(nmi(a, b) == doctest::Approx(1.0));
    std::vector<int> one(7, 0);
    CHECK(nmi(one, one) == doctest::Approx(1.0));
}

TEST_CASE("nmi matches contingency oracle, is symmetric and bounded") {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        std::vector<int> a(300), b(300);
        for (auto& x : a) x = static_cast<int>(uniform_index(rng, 2 + t % 5));
        for (std::size_t i = 0; i < b.size(); ++i)
            b[i] = uniform01(rng) < 0.5 ? a[i] : static_cast<int>(uniform_index(rng, 4));
        const double v = nmi(a, b);
        CHECK(v == doctest::Approx(nmi_oracle(a, b)).epsilon(1e-12));
        CHECK(v == doctest::Approx(nmi(b, a)).epsilon(1e-12));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
    }
}

TEST_CASE("nmi of permuted labels is near zero") {
    Rng rng(9);
    std::vector<int> a(1000);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<int>(i % 8);
    std::vector<int> b = a;
    shuffle_in_place(b, rng);
    CHECK(nmi(a, b) < 0.05);
}

TEST_CASE("soft nmi reduces to nmi on single labels") {
    Rng rng(10);
    std::vector<int> a(200), c(200);
    std::vector<std::vector<int>> sets;
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<int>(uniform_index(rng, 4));
        c[i] = uniform01(rng) < 0.7 ? a[i] : static_cast<int>(uniform_index(rng, 4));
        sets.push_back({a[i]});
    }
    CHECK(soft_nmi(sets, c) == doctest::Approx(nmi(a, c)).epsilon(1e-12));
}

TEST_CASE("soft nmi on planted multi-label regions beats shuffled baseline") {
    Rng rng(11);
    const std::size_t per = 60, regions = 8;
    std::vector<std::vector<int>> sets;
    std::vector<int> hard;
    RowMatrixD X(per * regions, 16);
    for (std::size_t r = 0; r < regions; ++r)
        for (std::size_t p = 0; p < per; ++p) {
            const std::size_t i = r * per + p;
            std::vector<int> s = {static_cast<int>(r)};
            if (uniform01(rng) < 0.15) s.push_back(static_cast<int>((r + 1 + uniform_index(rng, regions - 1)) % regions));
            std::sort(s.begin(), s.end());
            for (int j = 0; j < 16; ++j) X(i, j) = 0.3 * standard_normal(rng);
            for (int l : s) X(i, l) += 1.0 / static_cast<double>(s.size());
            sets.push_back(s);
        }
    const auto km = kmeans(normalize_rows(X), regions, 10, 3);
    const double planted = soft_nmi(sets, km.labels);
    auto shuffled = sets;
    shuffle_in_place(shuffled, rng);
    const double baseline = soft_nmi(shuffled, km.labels);
    CHECK(planted > baseline);
    CHECK(planted > 0.5);
}

TEST_CASE("kmeans recovers separated blobs and is deterministic") {
    Rng rng(12);
    std::vector<int> labels;
    const RowMatrixD X = blobs(rng, 5, 40, 8, 0.05, labels);
    const auto km = kmeans(X, 5, 10, 7);
    CHECK(nmi(km.labels, labels) == doctest::Approx(1.0));
    const auto again = kmeans(X, 5, 10, 7);
    CHECK(again.labels == km.labels);
    CHECK(again.inertia == km.inertia);
}

TEST_CASE("knn purity matches exhaustive neighbor oracle") {
    Rng rng(13);
    std::vector<int> labels;
    const RowMatrixD X = blobs(rng, 4, 30, 6, 0.6, labels);
    const RowMatrixD U = normalize_rows(X);
    const double p = knn_purity(U, labels, 5);
    CHECK(p == doctest::Approx(knn_purity_oracle(U, labels, 5)).epsilon(1e-12));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
}

TEST_CASE("knn jaccard purity equals knn purity on single labels and is bounded") {
    Rng rng(14);
    std::vector<int> labels;
    const RowMatrixD U = normalize_rows(blobs(rng, 3, 30, 5, 0.5, labels));
    std::vector<std::vector<int>> sets;
    for (int l : labels) sets.push_back({l});
    CHECK(knn_jaccard_purity(U, sets, 5) == doctest::Approx(knn_purity(U, labels, 5)).epsilon(1e-12));
    for (std::size_t i = 0; i < sets.size(); i += 4) sets[i].push_back(7);
    const double j = knn_jaccard_purity(U, sets, 5);
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);
}

TEST_CASE("silhouette matches pairwise oracle and excludes singleton labels") {
    Rng rng(15);
    std::vector<int> labels;
    const RowMatrixD X = blobs(rng, 3, 25, 5, 0.4, labels);
    labels[0] = 99;
    const double s = silhouette_cosine(X, labels);
    CHECK(s == doctest::Approx(silhouette_oracle(X, labels)).epsilon(1e-12));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    std::vector<int> tight;
    const RowMatrixD Y = blobs(rng, 3, 20, 5, 0.01, tight);
    CHECK(silhouette_cosine(Y, tight) > 0.9);
}

TEST_CASE("bootstrap of constant metric has zero width") {
    const auto ci = bootstrap_ci([](std::span<const std::size_t>) { return 0.75; }, 100);
    CHECK(ci.lo == 0.75);
    CHECK(ci.hi == 0.75);
}

TEST_CASE("bootstrap mean CI width tracks the analytic width") {
    Rng rng(16);
    std::vector<double> x(1000);
    for (auto& v : x) v = standard_normal(rng);
    auto mean = [&](std::span<const std::size_t> idx) {
        double s = 0;
        for (auto i : idx) s += x[i];
        return s / static_cast<double>(idx.size());
    };
    const auto ci = bootstrap_ci(mean, x.size(), 200, 0.8, 21);
    // Subsampling without replacement from the sample: sd of the subsample mean
    // carries the finite-population factor sqrt(1 - frac) on top of sigma/sqrt(m).
    const double m = 0.8 * 1000;
    const double analytic = 2 * 1.96 * std::sqrt(1.0 / m) * std::sqrt(1.0 - 0.8);
    CHECK(ci.hi - ci.lo == doctest::Approx(analytic).epsilon(0.2));
    const auto again = bootstrap_ci(mean, x.size(), 200, 0.8, 21);
    CHECK(again.lo == ci.lo);
    CHECK(again.hi == ci.hi);
}

TEST_CASE("geometry report invariants on labeled embedding") {
    Rng rng(17);
    std::vector<int> groups;
    const RowMatrixD X = blobs(rng, 4, 30, 12, 0.1, groups);
    std::vector<IngredientEntry> entries(X.rows());
    const char* fg[] = {"vegetable", "spice", "grain", "dairy"};
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        entries[i].name = "g" + std::to_string(i);
        entries[i].food_group = fg[groups[i]];
        if (groups[i] < 2) entries[i].cuisine_tags = {static_cast<CuisineRegion>(groups[i])};
        if (i % 10 == 0 && groups[i] == 0) entries[i].cuisine_tags.push_back(static_cast<CuisineRegion>(1));
    }
    const CanonicalVocabulary vocab(std::move(entries));
    const auto emb = testsupport::embedding_from_rows(X, vocab, "cooc");
    GeometryOptions opts;
    opts.bootstrap_iters = 20;
    const auto rep = geometry_report(make_ingredient_view(emb, vocab), vocab, opts);
    CHECK(rep.n_ingredients == 120);
    CHECK(rep.pr >= 1.0);
    CHECK(rep.pr <= 12.0);
    CHECK(rep.avg_cos >= -1.0);
    CHECK(rep.avg_cos <= 1.0);
    CHECK(rep.pca_top10 <= rep.pca_top50);
    CHECK(rep.pca_top50 <= 1.0 + 1e-12);
    CHECK(rep.food_group_n == 120);
    CHECK(rep.food_group_labels == 4);
    CHECK(rep.food_group_nmi.value > 0.9);
    CHECK(rep.food_group_knn_purity.value > 0.9);
    CHECK(rep.food_group_nmi.ci95.lo <= rep.food_group_nmi.ci95.hi);
    CHECK(rep.cuisine_n == 60);
    CHECK(rep.cuisine_knn_jaccard.value >= 0.0);
    CHECK(rep.cuisine_knn_jaccard.value <= 1.0);
    const Json j = rep.to_json();
    CHECK(j["isotropy"].contains("pr"));
    CHECK(j["food_group"].contains("nmi"));
}
