#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "epicure/operators.hpp"
#include "support.hpp"

using namespace epicure;

namespace {

RowMatrixD gaussian(Rng& rng, std::size_t n, std::size_t d) {
    RowMatrixD X(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) X(i, j) = standard_normal(rng);
    return X;
}

Eigen::VectorXd unit_gaussian(Rng& rng, std::size_t d) {
    Eigen::VectorXd v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = standard_normal(rng);
    return v.normalized();
}

Model model_of(const RowMatrixD& X, CanonicalVocabulary vocab, ModeAtlas atlas = {}) {
    auto v = std::make_shared<const CanonicalVocabulary>(std::move(vocab));
    const auto emb = testsupport::embedding_from_rows(X, *v, "cooc");
    return Model::make("cooc", emb, v, std::move(atlas));
}

/// Scan every row, keep the k highest cosines, seed excluded.
std::vector<std::pair<double, std::size_t>> scan_oracle(const RowMatrixD& X, const Eigen::VectorXd& q, std::size_t k,
                                                        std::size_t exclude) {
    std::vector<std::pair<double, std::size_t>> all;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        if (static_cast<std::size_t>(r) == exclude) continue;
        all.push_back({X.row(r).dot(q.transpose()) / (X.row(r).norm() * q.norm()), static_cast<std::size_t>(r)});
    }
    std::sort(all.begin(), all.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    all.resize(std::min(k, all.size()));
    return all;
}

/// Vocabulary with tags: rows [0, pos) tagged South_Asian, [pos, pos + neg) East_Asian.
CanonicalVocabulary tagged_vocab(std::size_t n, std::size_t pos, std::size_t neg) {
    std::vector<IngredientEntry> e(n);
    for (std::size_t i = 0; i < n; ++i) {
        e[i].name = "t" + std::to_string(i);
        if (i < pos) e[i].cuisine_tags = {*parse_region("South_Asian")};
        else if (i < pos + neg) e[i].cuisine_tags = {*parse_region("East_Asian")};
        e[i].nova_class = static_cast<int>(1 + i % 4);
    }
    return CanonicalVocabulary(std::move(e));
}

}  // namespace

TEST_CASE("nearest neighbors: duplicate first, orthogonal second, seed excluded") {
    RowMatrixD X(4, 3);
    X << 1, 0, 0,  //
        2, 0, 0,   //
        0, 1, 0,   //
        -1, 0, 0;
    const auto m = model_of(X, testsupport::numbered_vocab(4));
    const auto nn = nearest_neighbors(m, 0, 3);
    REQUIRE(nn.size() == 3);
    CHECK(nn[0].row == 1);
    CHECK(nn[0].cos == doctest::Approx(1.0));
    CHECK(nn[1].row == 2);
    CHECK(nn[1].cos == doctest::Approx(0.0));
    CHECK(nn[2].row == 3);
    for (const auto& n : nn) CHECK(n.row != 0);
}

TEST_CASE("top_k equals exhaustive sort and a scan oracle") {
    Rng rng(1);
    const RowMatrixD X = gaussian(rng, 300, 12);
    const auto m = model_of(X, testsupport::numbered_vocab(300));
    for (std::size_t seed = 0; seed < 300; seed += 7) {
        const auto sims = similarities(m.unit, m.unit_row(seed));
        for (std::size_t k : {1u, 5u, 17u, 299u, 500u}) {
            const auto a = top_k(sims, k, seed), b = top_k_exhaustive(sims, k, seed);
            REQUIRE(a.size() == b.size());
            const auto o = scan_oracle(m.view.X, m.view.X.row(static_cast<Eigen::Index>(seed)).transpose(), k, seed);
            REQUIRE(a.size() == o.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i].row == b[i].row);
                CHECK(a[i].row == o[i].second);
                CHECK(a[i].cos == doctest::Approx(o[i].first).epsilon(1e-12));
                if (i) CHECK(a[i].cos <= a[i - 1].cos);
            }
        }
    }
}

TEST_CASE("top_k breaks ties by row") {
    Eigen::VectorXd s(5);
    s << 0.5, 0.9, 0.5, 0.9, 0.1;
    const auto a = top_k(s, 4, std::nullopt);
    CHECK(a[0].row == 1);
    CHECK(a[1].row == 3);
    CHECK(a[2].row == 0);
    CHECK(a[3].row == 2);
}

TEST_CASE("unknown seed is not_found with suggestions") {
    const auto m = model_of(RowMatrixD::Identity(3, 3), testsupport::numbered_vocab(3));
    try {
        (void)m.resolve("i7");
        FAIL("expected not_found");
    } catch (const Error& e) {
        CHECK(e.code() == "not_found");
        CHECK(std::string(e.what()).find("i") != std::string::npos);
    }
    CHECK(m.resolve(" I1 ") == 1);
}

TEST_CASE("closest mode equals an exhaustive pole scan on a 50-mode atlas") {
    Rng rng(2);
    const std::size_t n = 300;
    const RowMatrixD X = gaussian(rng, n, 10);
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t g = 0; g < 50; ++g) {
        std::vector<std::size_t> idx(6);
        for (std::size_t j = 0; j < 6; ++j) idx[j] = g * 6 + j;
        groups.push_back(idx);
    }
    const auto vocab = testsupport::numbered_vocab(n);
    const auto atlas = testsupport::atlas_from_groups(X, vocab, groups, "cooc");
    for (int t = 0; t < 100; ++t) {
        const Eigen::VectorXd q = unit_gaussian(rng, 10);
        const auto hit = closest_mode(atlas, q);
        double best = -2;
        const Mode* arg = nullptr;
        for (const auto& m : atlas.modes) {
            const double c = q.dot(m.pole);
            if (c > best) {
                best = c;
                arg = &m;
            }
        }
        CHECK(hit.mode == arg);
        CHECK(hit.cos == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("closest mode: pole equal to seed wins with cosine 1; supervised modes filtered") {
    ModeAtlas atlas;
    Mode a;
    a.source = "F_0";
    a.kind = "factor";
    a.pole = Eigen::Vector3d(0, 1, 0);
    Mode b = a;
    b.source = "cuisine:South_Asian";
    b.kind = "property";
    b.pole = Eigen::Vector3d(1, 0, 0);
    Mode c = a;
    c.mode_id = 1;
    c.pole = Eigen::Vector3d(1, 0, 0);
    atlas.modes = {a, c, b};
    const Eigen::Vector3d seed(1, 0, 0);
    const auto hit = closest_mode(atlas, seed);
    REQUIRE(hit.mode != nullptr);
    CHECK(hit.mode->key() == "F_0/M1");
    CHECK(hit.cos == doctest::Approx(1.0));
    const auto wide = closest_mode(atlas, seed, true);
    CHECK(wide.cos == doctest::Approx(1.0));
    CHECK(wide.mode->key() == "F_0/M1");
    ModeAtlas empty;
    CHECK_THROWS(closest_mode(empty, seed));
}

TEST_CASE("closest mode ties go to the earliest source and mode id") {
    ModeAtlas atlas;
    for (int id : {2, 0, 1}) {
        Mode m;
        m.source = "F_3";
        m.kind = "factor";
        m.mode_id = id;
        m.pole = Eigen::Vector2d(1, 0);
        atlas.modes.push_back(m);
    }
    Mode first = atlas.modes[0];
    first.source = "F_1";
    first.mode_id = 4;
    atlas.modes.push_back(first);
    const auto hit = closest_mode(atlas, Eigen::Vector2d(1, 0));
    CHECK(hit.mode->key() == "F_1/M4");
}

TEST_CASE("supervised pole: equal positives and zero complement mean give v hat") {
    const std::size_t n = 20;
    RowMatrixD X(n, 4);
    const Eigen::RowVector4d v(3, 0, 4, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (i < 6) X.row(r) = v;
        else X.row(r) << (i % 2 ? 1.0 : -1.0), 0, 0, (i % 4 < 2 ? 1.0 : -1.0);
    }
    // Rows [6, 18) form the East_Asian complement; their mean is zero.
    const auto m = model_of(X, tagged_vocab(n, 6, 12));
    const auto pole = supervised_pole(m, "cuisine:South_Asian");
    CHECK((pole - v.transpose().normalized()).norm() < 1e-12);
}

TEST_CASE("supervised pole is antisymmetric and needs enough positives") {
    Rng rng(3);
    const std::size_t n = 40;
    const RowMatrixD X = gaussian(rng, n, 6);
    const auto m = model_of(X, tagged_vocab(n, 15, 15));
    const auto sa = supervised_pole(m, "cuisine:South_Asian");
    const auto ea = supervised_pole(m, "cuisine:East_Asian");
    CHECK(sa.norm() == doctest::Approx(1.0));
    CHECK((sa + ea).norm() < 1e-12);
    const auto few = model_of(X, tagged_vocab(n, 4, 20));
    try {
        (void)supervised_pole(few, "cuisine:South_Asian");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("4") != std::string::npos);
    }
    CHECK_THROWS(supervised_pole(m, "cuisine:Atlantis"));
    CHECK_THROWS(supervised_pole(m, "flavor:sweet"));
}

TEST_CASE("supervised pole for processed uses NOVA 4 against classes 1 and 2") {
    Rng rng(4);
    const std::size_t n = 40;
    const RowMatrixD X = gaussian(rng, n, 5);
    const auto m = model_of(X, tagged_vocab(n, 0, 0));
    Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(5), c = p;
    std::size_t np = 0, nc = 0;
    const RowMatrixD& U = m.unit;
    for (std::size_t i = 0; i < n; ++i) {
        const int nova = static_cast<int>(1 + i % 4);
        if (nova == 4) {
            p += U.row(static_cast<Eigen::Index>(i));
            ++np;
        } else if (nova <= 2) {
            c += U.row(static_cast<Eigen::Index>(i));
            ++nc;
        }
    }
    const Eigen::VectorXd expect = (p / np - c / nc).transpose().normalized();
    CHECK((supervised_pole(m, "nova:processed") - expect).norm() < 1e-12);
    const Eigen::VectorXd mean_style = supervised_pole(m, "nova:processed", PoleStyle::Mean);
    CHECK((mean_style - (p / np).transpose().normalized()).norm() < 1e-12);
}

TEST_CASE("blend directions") {
    const Eigen::Vector3d e1(1, 0, 0), e2(0, 1, 0), v(3, 4, 0);
    CHECK((blend_directions({v.normalized(), v.normalized()}) - v.normalized()).norm() < 1e-12);
    CHECK((blend_directions({e1, e2}) - Eigen::Vector3d(1, 1, 0) / std::sqrt(2.0)).norm() < 1e-12);
    CHECK_THROWS(blend_directions({e1, Eigen::Vector3d(-e1)}));
    CHECK_THROWS(blend_directions({e1}));
}

TEST_CASE("slerp rotation invariants over random draws") {
    Rng rng(5);
    for (int t = 0; t < 10000; ++t) {
        const std::size_t d = 2 + t % 30;
        const Eigen::VectorXd s = unit_gaussian(rng, d) * (0.5 + uniform01(rng));
        const Eigen::VectorXd target = unit_gaussian(rng, d);
        const double theta = 90.0 * uniform01(rng);
        const Eigen::VectorXd q = slerp_rotate(s, target, theta);
        const Eigen::VectorXd sh = s.normalized();
        const Eigen::VectorXd dp = (target - target.dot(sh) * sh).normalized();
        const double rad = theta * std::numbers::pi / 180.0;
        CHECK(std::abs(q.norm() - 1.0) < 1e-9);
        CHECK(std::abs(q.dot(sh) - std::cos(rad)) < 1e-9);
        CHECK(std::abs(q.dot(dp) - std::sin(rad)) < 1e-9);
    }
}

TEST_CASE("slerp at 60 degrees halves the seed cosine") {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        const Eigen::VectorXd s = unit_gaussian(rng, 16), d = unit_gaussian(rng, 16);
        CHECK(std::abs(slerp_rotate(s, d, 60.0).dot(s) - 0.5) < 1e-9);
    }
}

TEST_CASE("slerp handoff rises toward the pole until the seed-pole angle") {
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        const Eigen::VectorXd s = unit_gaussian(rng, 8);
        Eigen::VectorXd d = unit_gaussian(rng, 8);
        if (d.dot(s) < 0) d = -d;
        const double peak = std::acos(std::clamp(d.dot(s), -1.0, 1.0)) * 180.0 / std::numbers::pi;
        double prev = -2;
        for (int step = 0; step <= 20; ++step) {
            const double a = peak * step / 20.0;
            const double c = slerp_rotate(s, d, a).dot(d);
            CHECK(c >= prev - 1e-12);
            prev = c;
        }
        CHECK(prev == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("slerp endpoints and errors") {
    Rng rng(8);
    const Eigen::VectorXd s = unit_gaussian(rng, 6) * 2.0;
    const Eigen::VectorXd d = unit_gaussian(rng, 6);
    const Eigen::VectorXd q0 = slerp_rotate(s, d, 0.0);
    const Eigen::VectorXd sh = s / s.norm();
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(q0[i] == sh[i]);
    Eigen::VectorXd ortho = d - d.dot(sh) * sh;
    ortho.normalize();
    const Eigen::VectorXd q90 = slerp_rotate(s, ortho, 90.0);
    CHECK((q90 - ortho).norm() < 1e-12);
    CHECK_THROWS(slerp_rotate(s, s, 30.0));
    CHECK_THROWS(slerp_rotate(s, -s, 30.0));
    CHECK_THROWS(slerp_rotate(s, d, 91.0));
    CHECK_THROWS(slerp_rotate(s, d, -1.0));
}

TEST_CASE("rotation at 0 degrees reproduces nearest neighbors") {
    Rng rng(9);
    const RowMatrixD X = gaussian(rng, 120, 8);
    const auto m = model_of(X, tagged_vocab(120, 30, 30));
    const auto pole = supervised_pole(m, "cuisine:South_Asian");
    for (std::size_t seed : {0u, 45u, 100u}) {
        const auto q = slerp_rotate(m.unit_row(seed), pole, 0.0);
        const auto a = neighbors_of_vector(m, q, 5, seed);
        const auto b = nearest_neighbors(m, seed, 5);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].row == b[i].row);
            CHECK(a[i].cos == b[i].cos);
        }
    }
}
