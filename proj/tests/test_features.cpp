#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "hml/error.hpp"
#include "hml/features.hpp"
#include "hml/rng.hpp"
#include "hml/simd/kernels.hpp"
#include "hml/util.hpp"

using namespace hml;

namespace {

PatchHierarchy five_level_32() {
    return build_hierarchy(
        HierarchySpec::grid(HierarchySpec::parse_grid_levels("1x1,1x2,2x2,4x4,8x8")), 32, 32);
}

} // namespace

TEST_CASE("gray signature: zero image gives all-zero vectors with the right dims") {
    const auto h = five_level_32();
    const ImageMatrix zero(32, 32, 0);
    const auto sig = extract_gray_signature(zero, h);
    CHECK(sig.patch_count() == 87);

    std::set<std::size_t> dims;
    for (const auto& [id, pf] : sig.patches()) {
        dims.insert(pf.values.size());
        CHECK_FALSE(pf.occluded);
        for (const double v : pf.values) CHECK(v == 0.0);
    }
    CHECK(dims == std::set<std::size_t>{1024, 512, 256, 64, 16});
}

TEST_CASE("gray signature: constant 255 maps to 1.0") {
    const auto h = build_hierarchy(HierarchySpec::grid({{1, 1}}), 4, 4);
    const ImageMatrix white(4, 4, 255);
    const auto sig = extract_gray_signature(white, h);
    for (const double v : sig.get({1, 1}).values) CHECK(v == 1.0);
}

TEST_CASE("gray signature is row-major") {
    const auto h = build_hierarchy(HierarchySpec::grid({{1, 1}}), 2, 2);
    ImageMatrix img(2, 2);
    img.at(0, 0) = 0;
    img.at(0, 1) = 255;
    img.at(1, 0) = 0;
    img.at(1, 1) = 255;
    const auto sig = extract_gray_signature(img, h);
    CHECK(sig.get({1, 1}).values == FeatureVector{0.0, 1.0, 0.0, 1.0});
}

TEST_CASE("gray signature rejects mismatched image dims") {
    const auto h = five_level_32();
    CHECK_THROWS_AS(extract_gray_signature(ImageMatrix(16, 32), h), Error);
}

TEST_CASE("gray signature extraction is pure") {
    const auto h = five_level_32();
    ImageMatrix img(32, 32);
    Rng rng(3);
    for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.below(256));
    CHECK(extract_gray_signature(img, h) == extract_gray_signature(img, h));
}

TEST_CASE("pca: input dim below target keeps original features") {
    std::vector<FeatureVector> vecs(5, FeatureVector(64, 0.0));
    Rng rng(5);
    for (auto& v : vecs)
        for (auto& x : v) x = rng.uniform();
    const auto model = fit_pca(vecs, 100);
    CHECK(model.is_identity());
    CHECK(model.output_dim() == 64);
    CHECK(model.apply(vecs[0]) == vecs[0]);
}

TEST_CASE("pca: points on a line project with pairwise distances preserved") {
    // x_i = a + t_i * d in R^3; one principal direction carries everything
    Rng rng(17);
    const FeatureVector a{0.5, -1.0, 2.0};
    const FeatureVector d{1.0, 2.0, -1.0};
    std::vector<FeatureVector> vecs;
    std::vector<double> ts;
    for (int i = 0; i < 20; ++i) {
        const double t = rng.uniform(-3.0, 3.0);
        ts.push_back(t);
        vecs.push_back({a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]});
    }
    const auto model = fit_pca(vecs, 1);
    CHECK(model.output_dim() == 1);

    const double dnorm = std::sqrt(simd::dot(d.data(), d.data(), d.size()));
    for (int i = 0; i < 20; ++i) {
        for (int j = i + 1; j < 20; ++j) {
            const double projected =
                std::abs(model.apply(vecs[i])[0] - model.apply(vecs[j])[0]);
            const double direct = std::abs(ts[i] - ts[j]) * dnorm;
            CHECK(projected == doctest::Approx(direct).epsilon(1e-6));
        }
    }
}

TEST_CASE("pca: basis columns are orthonormal on both fit routes") {
    Rng rng(29);
    const auto check_basis = [](const PcaModel& m) {
        const int d = m.input_dim();
        for (int i = 0; i < m.output_dim(); ++i) {
            for (int j = i; j < m.output_dim(); ++j) {
                const double p = simd::dot(m.basis().data() + static_cast<std::size_t>(i) * d,
                                           m.basis().data() + static_cast<std::size_t>(j) * d,
                                           static_cast<std::size_t>(d));
                CHECK(std::abs(p - (i == j ? 1.0 : 0.0)) < 1e-8);
            }
        }
    };
    std::vector<FeatureVector> tall(8, FeatureVector(20));  // m < d: gram route
    for (auto& v : tall)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    check_basis(fit_pca(tall, 5));

    std::vector<FeatureVector> wide(40, FeatureVector(6)); // m > d: covariance route
    for (auto& v : wide)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    check_basis(fit_pca(wide, 4));
}

TEST_CASE("pca: the mean projects to zero") {
    Rng rng(23);
    std::vector<FeatureVector> vecs(12, FeatureVector(8));
    for (auto& v : vecs)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    FeatureVector mean(8, 0.0);
    for (const auto& v : vecs)
        for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i] / vecs.size();
    const auto model = fit_pca(vecs, 3);
    for (const double x : model.apply(mean)) CHECK(std::abs(x) < 1e-8);
}

TEST_CASE("pca: reconstruction error is non-increasing in target dim") {
    Rng rng(31);
    const int d = 12, m = 40;
    std::vector<FeatureVector> vecs(m, FeatureVector(d));
    for (auto& v : vecs)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);

    // reconstruction via the stored basis: x_hat = mean + B z
    const auto recon_error = [&](int target) {
        const auto model = fit_pca(vecs, target);
        double err = 0.0;
        for (const auto& v : vecs) {
            const auto z = model.apply(v);
            FeatureVector rec(model.mean());
            for (int k = 0; k < model.output_dim(); ++k)
                simd::axpy(z[k], model.basis().data() + static_cast<std::size_t>(k) * d,
                           rec.data(), d);
            err += simd::l2_sqr(v.data(), rec.data(), d);
        }
        return err;
    };
    double prev = std::numeric_limits<double>::infinity();
    for (const int target : {1, 2, 4, 6, 8, 11}) {
        const double err = recon_error(target);
        CHECK(err <= prev + 1e-9);
        prev = err;
    }
}

TEST_CASE("pca: gram and covariance routes agree") {
    Rng rng(37);
    const int d = 10;
    std::vector<FeatureVector> vecs(6, FeatureVector(d)); // m < d: gram route
    for (auto& v : vecs)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    std::vector<FeatureVector> wide = vecs; // m > d after duplication noise
    for (int i = 0; i < 20; ++i) {
        FeatureVector v = vecs[i % vecs.size()];
        for (auto& x : v) x += rng.uniform(-1e-3, 1e-3);
        wide.push_back(std::move(v));
    }
    const auto m1 = fit_pca(vecs, 3);
    CHECK(m1.output_dim() == 3);
    // projections are deterministic and centered for both routes
    const auto m2 = fit_pca(wide, 3);
    CHECK(m2.output_dim() == 3);
    FeatureVector mean1(d, 0.0);
    for (const auto& v : vecs)
        for (int i = 0; i < d; ++i) mean1[i] += v[i] / vecs.size();
    for (const double x : m1.apply(mean1)) CHECK(std::abs(x) < 1e-8);
}

TEST_CASE("pca errors") {
    CHECK_THROWS_AS(fit_pca({}, 3), Error);
    std::vector<FeatureVector> bad = {{1.0, 2.0}, {1.0, 2.0, 3.0}};
    CHECK_THROWS_AS(fit_pca(bad, 1), Error);
}

TEST_CASE("synth_occlusion covers exactly a quarter of a 32x32 image") {
    ImageMatrix img(32, 32, 200);
    ImageMatrix occluder(8, 8, 7);
    const auto out = synth_occlusion(img, occluder, 0.25, 99);
    int changed = 0;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        changed += out.pixels[i] != img.pixels[i] ? 1 : 0;
    CHECK(changed == 256); // 16x16 block, all pixels differ (7 vs 200)

    // the changed region is one contiguous rectangle
    int top = 32, left = 32, bottom = -1, right = -1;
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c)
            if (out.at(r, c) != img.at(r, c)) {
                top = std::min(top, r);
                left = std::min(left, c);
                bottom = std::max(bottom, r);
                right = std::max(right, c);
            }
    CHECK(bottom - top + 1 == 16);
    CHECK(right - left + 1 == 16);
}

TEST_CASE("synth_occlusion is deterministic and stays in bounds") {
    ImageMatrix img(32, 32, 10);
    ImageMatrix occluder(15, 11);
    Rng fill(1);
    for (auto& px : occluder.pixels) px = static_cast<std::uint8_t>(fill.below(256));

    const auto a = synth_occlusion(img, occluder, 0.25, 1234);
    const auto b = synth_occlusion(img, occluder, 0.25, 1234);
    CHECK(a == b);

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto out = synth_occlusion(img, occluder, 0.25, seed);
        CHECK(out.height == 32);
        CHECK(out.width == 32);
        // nothing outside the block changed and the block never wraps: count rows
        // & cols with changes; both must be exactly 16 consecutive
        std::set<int> rows, cols;
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c)
                if (out.at(r, c) != img.at(r, c)) {
                    rows.insert(r);
                    cols.insert(c);
                }
        REQUIRE(!rows.empty());
        CHECK(*rows.rbegin() - *rows.begin() + 1 <= 16);
        CHECK(*cols.rbegin() - *cols.begin() + 1 <= 16);
    }
}

TEST_CASE("synth_occlusion rejects bad fractions") {
    ImageMatrix img(32, 32);
    ImageMatrix occ(4, 4);
    CHECK_THROWS_AS(synth_occlusion(img, occ, 0.0, 1), Error);
    CHECK_THROWS_AS(synth_occlusion(img, occ, 1.0, 1), Error);
    CHECK_THROWS_AS(synth_occlusion(ImageMatrix(2, 2), occ, 0.1, 1), Error);
}

TEST_CASE("signature file round-trip and validation") {
    const std::string path = (std::filesystem::temp_directory_path() / "hml_sig_test.csv").string();

    std::vector<SignatureRecord> records(2);
    Rng rng(41);
    for (int s = 0; s < 2; ++s) {
        records[s].sample_id = "sample" + std::to_string(s);
        records[s].label = s + 1;
        for (int p = 1; p <= 7; ++p) {
            FeatureVector v(512);
            for (auto& x : v) x = rng.uniform(-1.0, 1.0);
            records[s].signature.set({p <= 2 ? 1 : 2, p <= 2 ? p : p - 2}, std::move(v),
                                     p == 3 && s == 1);
        }
    }
    save_signatures(records, path);
    const auto loaded = load_signatures(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].signature.patch_count() == 7);
    CHECK(loaded[1].signature.get({2, 1}).occluded);
    for (const auto& [id, pf] : loaded[0].signature.patches())
        CHECK(pf.values.size() == 512);
    // exact value round-trip through the shortest decimal form
    CHECK(loaded[0].signature.get({1, 1}).values == records[0].signature.get({1, 1}).values);
    std::filesystem::remove(path);
}

TEST_CASE("signature file: missing patch row is InconsistentPatchSet") {
    const std::string text =
        "sample_id,label,level,index,occluded,values\n"
        "a,1,1,1,0,0.5,0.25\n"
        "a,1,1,2,0,0.5,0.25\n"
        "b,2,1,1,0,0.1,0.2\n";
    try {
        parse_signatures(text);
        FAIL("expected InconsistentPatchSet");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InconsistentPatchSet);
    }
}

TEST_CASE("signature file: empty input gives an empty list") {
    CHECK(parse_signatures("").empty());
    CHECK(parse_signatures("sample_id,label,level,index,occluded,values\n").empty());
}

TEST_CASE("signature file: malformed rows and non-finite values are rejected") {
    CHECK_THROWS_AS(parse_signatures("bogus\n"), Error);
    const std::string bad_val =
        "sample_id,label,level,index,occluded,values\n"
        "a,1,1,1,0,nan\n";
    CHECK_THROWS_AS(parse_signatures(bad_val), Error);
    const std::string short_row =
        "sample_id,label,level,index,occluded,values\n"
        "a,1,1\n";
    CHECK_THROWS_AS(parse_signatures(short_row), Error);
}

TEST_CASE("pgm round-trip") {
    const std::string path = (std::filesystem::temp_directory_path() / "hml_pgm_test.pgm").string();
    ImageMatrix img(5, 9);
    Rng rng(43);
    for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.below(256));
    save_pgm(img, path);
    CHECK(load_pgm(path) == img);
    std::filesystem::remove(path);
}
