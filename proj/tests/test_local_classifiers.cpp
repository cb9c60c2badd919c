#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hml/error.hpp"
#include "hml/local_classifiers.hpp"
#include "hml/rng.hpp"
#include "hml/simd/kernels.hpp"

using namespace hml;

namespace {

std::vector<FeatureVector> random_gallery(Rng& rng, int n, int dim) {
    std::vector<FeatureVector> g(n, FeatureVector(dim));
    for (auto& v : g)
        for (auto& x : v) x = rng.uniform(0.05, 1.0);
    return g;
}

FeatureVector normalized(FeatureVector v) {
    const double n = std::sqrt(simd::dot(v.data(), v.data(), v.size()));
    if (n > 0)
        for (auto& x : v) x /= n;
    return v;
}

} // namespace

TEST_CASE("nn on a single sample always returns that label") {
    const auto c = train_local(LocalKind::nn, {{0.2, 0.4, 0.6}}, {3});
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        FeatureVector probe{rng.uniform(), rng.uniform(), rng.uniform()};
        CHECK(c.predict(probe).label == 3);
    }
}

TEST_CASE("nn self-match has distance zero") {
    Rng rng(2);
    const auto gallery = random_gallery(rng, 8, 16);
    const std::vector<int> labels{1, 2, 3, 4, 5, 6, 7, 8};
    const auto c = train_local(LocalKind::nn, gallery, labels);
    for (int j = 0; j < 8; ++j) {
        const auto rec = c.predict(gallery[j]);
        CHECK(rec.label == labels[j]);
        CHECK(rec.score == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("nn equals a brute-force scan on normalized exemplars") {
    Rng rng(3);
    const auto gallery = random_gallery(rng, 20, 12);
    std::vector<int> labels;
    for (int j = 0; j < 20; ++j) labels.push_back(j % 5 + 1);
    const auto c = train_local(LocalKind::nn, gallery, labels);

    for (int t = 0; t < 50; ++t) {
        FeatureVector probe(12);
        for (auto& x : probe) x = rng.uniform(0.05, 1.0);
        const auto rec = c.predict(probe);

        // oracle: linear scan over l2-normalized vectors
        const auto qn = normalized(probe);
        double best = std::numeric_limits<double>::infinity();
        int best_label = 0;
        for (int j = 0; j < 20; ++j) {
            const auto gn = normalized(gallery[j]);
            const double d2 = simd::l2_sqr(qn.data(), gn.data(), qn.size());
            if (d2 < best || (d2 == best && labels[j] < best_label)) {
                best = d2;
                best_label = labels[j];
            }
        }
        CHECK(rec.label == best_label);
        CHECK(rec.score == doctest::Approx(-std::sqrt(best)).epsilon(1e-12));
    }
}

TEST_CASE("cosine of a vector with itself is 1") {
    Rng rng(4);
    const auto gallery = random_gallery(rng, 5, 10);
    const auto c = train_local(LocalKind::cosine, gallery, {1, 2, 3, 4, 5});
    const auto rec = c.predict(gallery[2]);
    CHECK(rec.label == 3);
    CHECK(rec.score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cosine label is scale-invariant in the probe") {
    Rng rng(5);
    const auto gallery = random_gallery(rng, 12, 9);
    std::vector<int> labels;
    for (int j = 0; j < 12; ++j) labels.push_back(j % 4 + 1);
    const auto c = train_local(LocalKind::cosine, gallery, labels);
    for (int t = 0; t < 30; ++t) {
        FeatureVector probe(9);
        for (auto& x : probe) x = rng.uniform(0.05, 1.0);
        const int base = c.predict(probe).label;
        for (const double scale : {0.01, 0.5, 3.0, 1000.0}) {
            FeatureVector scaled(probe);
            for (auto& x : scaled) x *= scale;
            CHECK(c.predict(scaled).label == base);
        }
    }
}

TEST_CASE("crc on an orthonormal one-sample-per-class gallery: P = (1+lambda)^-1 A^T") {
    // A = I_4 (orthonormal columns, one per class), so
    // (A^T A + lambda I)^-1 A^T = (1 + lambda)^-1 A^T.
    const double lambda = 0.001;
    std::vector<FeatureVector> gallery = {
        {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    const auto c = train_local(LocalKind::crc, gallery, {1, 2, 3, 4}, {lambda});

    // the precomputed projector itself matches the closed form
    const auto state = c.state();
    for (int row = 0; row < 4; ++row)
        for (int col = 0; col < 4; ++col)
            CHECK(state.projector[row * 4 + col] ==
                  doctest::Approx((row == col ? 1.0 : 0.0) / (1.0 + lambda)).epsilon(1e-12));

    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        FeatureVector y(4);
        for (auto& x : y) x = rng.uniform(-1.0, 1.0);
        // coding should be alpha = (1+lambda)^-1 A^T y = y / (1 + lambda);
        // verify through the residual identity r_c achieves its closed form
        const auto rec = c.predict(y);
        // compute the closed-form winner
        double best = std::numeric_limits<double>::infinity();
        int best_label = 0;
        for (int cls = 0; cls < 4; ++cls) {
            const double alpha = y[cls] / (1.0 + lambda);
            FeatureVector recon(4, 0.0);
            recon[cls] = alpha;
            const double resid = std::sqrt(simd::l2_sqr(y.data(), recon.data(), 4));
            const double r = resid / std::max(std::abs(alpha), 1e-12);
            if (r < best || (r == best && cls + 1 < best_label)) {
                best = r;
                best_label = cls + 1;
            }
        }
        CHECK(rec.label == best_label);
        CHECK(rec.score == doctest::Approx(-best).epsilon(1e-9));
    }
}

TEST_CASE("crc recovers gallery samples on random small galleries") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int classes = 5, per_class = 3, dim = 24;
        std::vector<FeatureVector> gallery;
        std::vector<int> labels;
        for (int cls = 1; cls <= classes; ++cls) {
            FeatureVector center(dim);
            for (auto& x : center) x = rng.uniform(0.1, 1.0);
            for (int s = 0; s < per_class; ++s) {
                FeatureVector v(center);
                for (auto& x : v) x = std::max(0.0, x + rng.uniform(-0.05, 0.05));
                gallery.push_back(std::move(v));
                labels.push_back(cls);
            }
        }
        const auto c = train_local(LocalKind::crc, gallery, labels, {0.001});
        for (std::size_t j = 0; j < gallery.size(); ++j) {
            const auto rec = c.predict(gallery[j]);
            CHECK(rec.label == labels[j]);
            CHECK(std::isfinite(rec.score));
            CHECK(rec.score <= 0.0); // residuals are nonnegative
        }
    }
}

TEST_CASE("crc residuals are finite and nonnegative for lambda > 0") {
    Rng rng(8);
    const auto gallery = random_gallery(rng, 10, 6);
    std::vector<int> labels{1, 1, 2, 2, 3, 3, 4, 4, 5, 5};
    const auto c = train_local(LocalKind::crc, gallery, labels, {0.5});
    for (int t = 0; t < 25; ++t) {
        FeatureVector probe(6);
        for (auto& x : probe) x = rng.uniform(-2.0, 2.0);
        const auto rec = c.predict(probe);
        CHECK(std::isfinite(rec.score));
        CHECK(rec.score <= 0.0);
        CHECK(rec.label >= 1);
        CHECK(rec.label <= 5);
    }
}

TEST_CASE("crc with lambda 0 on a rank-deficient gallery throws SingularSystem") {
    // duplicate columns make A^T A singular
    std::vector<FeatureVector> gallery = {{1, 0}, {1, 0}, {0, 1}};
    try {
        train_local(LocalKind::crc, gallery, {1, 2, 3}, {0.0});
        FAIL("expected SingularSystem");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularSystem);
    }
}

TEST_CASE("training errors") {
    CHECK_THROWS_AS(train_local(LocalKind::nn, {}, {}), Error);
    CHECK_THROWS_AS(train_local(LocalKind::nn, {{1.0, 2.0}, {1.0}}, {1, 2}), Error);
    const auto c = train_local(LocalKind::nn, {{1.0, 2.0}}, {1});
    CHECK_THROWS_AS(c.predict({1.0}), Error);
}

TEST_CASE("prediction is deterministic") {
    Rng rng(9);
    const auto gallery = random_gallery(rng, 15, 20);
    std::vector<int> labels;
    for (int j = 0; j < 15; ++j) labels.push_back(j % 3 + 1);
    for (const auto kind : {LocalKind::nn, LocalKind::crc, LocalKind::cosine}) {
        const auto c = train_local(kind, gallery, labels, {0.001});
        FeatureVector probe(20);
        for (auto& x : probe) x = rng.uniform();
        const auto a = c.predict(probe);
        const auto b = c.predict(probe);
        CHECK(a.label == b.label);
        CHECK(a.score == b.score);
    }
}

TEST_CASE("local_match_all shapes, sentinels and self-match accuracy") {
    const auto h = build_hierarchy(
        HierarchySpec::grid(HierarchySpec::parse_grid_levels("1x1,1x2,2x2,4x4,8x8")), 32, 32);

    // distinct random images, one per identity
    Rng rng(10);
    std::vector<SampleSignature> gallery_sigs;
    std::vector<std::vector<FeatureVector>> per_patch_feats(h.patches().size());
    for (int m = 0; m < 6; ++m) {
        ImageMatrix img(32, 32);
        for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.below(256));
        gallery_sigs.push_back(extract_gray_signature(img, h));
    }
    std::vector<LocalClassifier> classifiers;
    for (std::size_t p = 0; p < h.patches().size(); ++p) {
        std::vector<FeatureVector> feats;
        std::vector<int> labels;
        for (int m = 0; m < 6; ++m) {
            feats.push_back(gallery_sigs[m].get(h.patches()[p]).values);
            labels.push_back(m + 1);
        }
        classifiers.push_back(train_local(LocalKind::nn, feats, labels));
    }

    const auto table = local_match_all(classifiers, h, gallery_sigs);
    CHECK(table.samples() == 6);
    CHECK(table.patch_slots() == 87);
    // gallery matched against its own gallery: 100% per-patch accuracy
    for (std::size_t m = 0; m < 6; ++m)
        for (std::size_t p = 0; p < 87; ++p)
            CHECK(table.at(m, p).label == static_cast<int>(m) + 1);

    // fully occluded sample: all abstain records
    SampleSignature occluded;
    for (const auto& id : h.patches()) occluded.set(id, {}, true);
    const auto occ_table = local_match_all(classifiers, h, {occluded});
    for (std::size_t p = 0; p < 87; ++p) {
        CHECK(occ_table.at(0, p).abstain());
        CHECK(occ_table.at(0, p).label == 0);
    }

    // missing classifier
    classifiers.pop_back();
    CHECK_THROWS_AS(local_match_all(classifiers, h, gallery_sigs), Error);
}
