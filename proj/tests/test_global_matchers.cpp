#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "hml/error.hpp"
#include "hml/global_matchers.hpp"
#include "hml/rng.hpp"

using namespace hml;

namespace {

// Eq.-style augmented objective used as the oracle: ||e' - Z'w||^2 + l*||w||_1.
double objective(const DecisionMatrix& Z, const WeightVector& w, double lambda) {
    double obj = 0.0;
    for (std::size_t m = 0; m < Z.rows; ++m) {
        double margin = 0.0;
        for (std::size_t s = 0; s < Z.cols; ++s) margin += w[s] * Z.at(m, s);
        obj += (1.0 - margin) * (1.0 - margin);
    }
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    obj += (1.0 - wsum) * (1.0 - wsum);
    for (const double v : w) obj += lambda * std::abs(v);
    return obj;
}

// Exhaustive 0.01-step search over the simplex, S <= 3.
double grid_search_optimum(const DecisionMatrix& Z, double lambda) {
    const std::size_t S = Z.cols;
    double best = std::numeric_limits<double>::infinity();
    const int steps = 100;
    if (S == 1) {
        return objective(Z, {1.0}, lambda);
    }
    if (S == 2) {
        for (int i = 0; i <= steps; ++i) {
            const double w1 = i / 100.0;
            best = std::min(best, objective(Z, {w1, 1.0 - w1}, lambda));
        }
        return best;
    }
    REQUIRE(S == 3);
    for (int i = 0; i <= steps; ++i) {
        for (int j = 0; j <= steps - i; ++j) {
            const double w1 = i / 100.0;
            const double w2 = j / 100.0;
            best = std::min(best, objective(Z, {w1, w2, 1.0 - w1 - w2}, lambda));
        }
    }
    return best;
}

DecisionMatrix random_decision_matrix(Rng& rng, std::size_t M, std::size_t S) {
    DecisionMatrix Z;
    Z.rows = M;
    Z.cols = S;
    Z.z.resize(M * S);
    for (auto& v : Z.z) v = rng.below(2) == 0 ? -1 : 1;
    return Z;
}

MatchMatrix tiny_match_matrix(const std::vector<std::vector<int>>& labels,
                              const std::vector<std::vector<double>>& scores) {
    MatchMatrix H;
    H.patch = {1, 1};
    H.columns.resize(labels.front().size());
    for (std::size_t s = 0; s < H.columns.size(); ++s)
        H.columns[s] = {1, static_cast<int>(s) + 1};
    H.labels = labels;
    H.scores = scores;
    return H;
}

} // namespace

// ---------------------------------------------------------------------------
// voting
// ---------------------------------------------------------------------------

TEST_CASE("vote_global: strict majority wins") {
    const std::vector<int> labels{3, 3, 5, 2};
    const std::vector<double> scores{0.1, 0.2, 0.9, 0.8};
    CHECK(vote_global(labels, scores).label == 3);
}

TEST_CASE("vote_global: count ties break on mean score") {
    const std::vector<int> labels{3, 3, 5, 5};
    const std::vector<double> scores{0.9, 0.7, 0.8, 0.4}; // mean 0.8 vs 0.6
    const auto rec = vote_global(labels, scores);
    CHECK(rec.label == 3);
    CHECK(rec.score == doctest::Approx(0.8));
}

TEST_CASE("vote_global: singleton and abstention") {
    CHECK(vote_global(std::vector<int>{7}, std::vector<double>{0.5}).label == 7);

    const std::vector<int> with_abstain{0, 0, 4};
    const std::vector<double> s3{-1e300, -1e300, 0.25};
    CHECK(vote_global(with_abstain, s3).label == 4);

    const std::vector<int> all_abstain{0, 0};
    const std::vector<double> s2{0.0, 0.0};
    CHECK_THROWS_AS(vote_global(all_abstain, s2), Error);
}

// ---------------------------------------------------------------------------
// decision matrix, margin, loss
// ---------------------------------------------------------------------------

TEST_CASE("decision matrix follows the correctness indicator") {
    const auto H = tiny_match_matrix({{2, 1, 2}, {3, 3, 3}, {0, 2, 1}},
                                     {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
    const auto Z = build_decision_matrix(H, {2, 3, 2});
    CHECK(Z.at(0, 0) == 1);
    CHECK(Z.at(0, 1) == -1);
    CHECK(Z.at(0, 2) == 1);
    for (std::size_t s = 0; s < 3; ++s) CHECK(Z.at(1, s) == 1); // all-correct row
    CHECK(Z.at(2, 0) == -1); // abstain counts as wrong
    CHECK(Z.at(2, 1) == 1);
    CHECK(Z.at(2, 2) == -1);
}

TEST_CASE("ensemble margin arithmetic") {
    const WeightVector w{0.5, 0.2, 0.3};
    const std::vector<std::int8_t> z{1, -1, 1};
    CHECK(ensemble_margin(w, z) == doctest::Approx(0.6).epsilon(1e-12));

    const std::vector<std::int8_t> all_pos{1, 1, 1};
    CHECK(ensemble_margin(w, all_pos) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<std::int8_t> all_neg{-1, -1, -1};
    CHECK(ensemble_margin(w, all_neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("ensemble loss: single sample and all-correct cases") {
    DecisionMatrix Z;
    Z.rows = 1;
    Z.cols = 3;
    Z.z = {1, -1, 1};
    const WeightVector w{0.5, 0.2, 0.3};
    CHECK(ensemble_loss(w, Z) == doctest::Approx(0.16).epsilon(1e-12)); // (1-0.6)^2

    DecisionMatrix all;
    all.rows = 4;
    all.cols = 3;
    all.z.assign(12, 1);
    CHECK(ensemble_loss(w, all) == doctest::Approx(0.0));
}

TEST_CASE("ensemble loss equals the margin summation on random cases") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto Z = random_decision_matrix(rng, 10, 3);
        WeightVector w(3);
        double sum = 0.0;
        for (auto& x : w) { x = rng.uniform(); sum += x; }
        for (auto& x : w) x /= sum;

        double oracle = 0.0;
        for (std::size_t m = 0; m < Z.rows; ++m)
            oracle += std::pow(1.0 - ensemble_margin(w, Z.row(m)), 2);
        CHECK(std::abs(ensemble_loss(w, Z) - oracle) < 1e-10);
    }
}

// ---------------------------------------------------------------------------
// weight solver
// ---------------------------------------------------------------------------

TEST_CASE("solve_weights: a perfect column takes all the mass") {
    DecisionMatrix Z;
    Z.rows = 30;
    Z.cols = 2;
    Z.z.resize(60);
    for (std::size_t m = 0; m < 30; ++m) {
        Z.z[m * 2] = 1;      // column 1 always correct
        Z.z[m * 2 + 1] = -1; // column 2 always wrong
    }
    const auto res = solve_weights(Z, 0.1);
    CHECK(res.weights[0] == doctest::Approx(1.0).epsilon(0.05));
    CHECK(res.weights[1] == doctest::Approx(0.0).epsilon(0.05));
    CHECK_FALSE(res.degenerate);
}

TEST_CASE("solve_weights: S = 1 forces w = [1]") {
    DecisionMatrix Z;
    Z.rows = 5;
    Z.cols = 1;
    Z.z = {1, -1, 1, 1, -1};
    const auto res = solve_weights(Z, 0.1);
    REQUIRE(res.weights.size() == 1);
    CHECK(res.weights[0] == 1.0);
}

TEST_CASE("solve_weights: simplex feasibility, descent, and grid optimality") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t S = 1 + rng.below(3);
        const std::size_t M = 1 + rng.below(40);
        const auto Z = random_decision_matrix(rng, M, S);
        const auto res = solve_weights(Z, 0.1);

        // w >= 0 and sums to exactly 1
        double sum = 0.0;
        for (const double w : res.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

        // objective trace never increases and ends at the reported objective
        for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
            CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-12);
        CHECK(res.objective == doctest::Approx(res.objective_trace.back()));

        // the programme solution is no worse than the 0.01-step simplex grid
        // search (every grid point is feasible for the relaxed programme)
        const double grid_obj = grid_search_optimum(Z, 0.1);
        CHECK(res.objective <= grid_obj + 1e-3);

        // no worse than uniform (the starting point) or any simplex vertex
        const WeightVector uniform(S, 1.0 / static_cast<double>(S));
        CHECK(res.objective <= objective(Z, uniform, 0.1) + 1e-9);
        for (std::size_t v = 0; v < S; ++v) {
            WeightVector vertex(S, 0.0);
            vertex[v] = 1.0;
            CHECK(res.objective <= objective(Z, vertex, 0.1) + 1e-9);
        }
    }
}

TEST_CASE("solve_weights rejects empty input") {
    DecisionMatrix Z;
    Z.rows = 0;
    Z.cols = 0;
    CHECK_THROWS_AS(solve_weights(Z, 0.1), Error);
}

// ---------------------------------------------------------------------------
// weighted matching
// ---------------------------------------------------------------------------

TEST_CASE("weighted match: weight mass beats count") {
    const WeightVector w{0.7, 0.2, 0.1};
    const std::vector<int> labels{4, 9, 9};
    const std::vector<double> scores{0.5, 0.5, 0.5};
    const auto rec = weighted_global_match(w, labels, scores);
    CHECK(rec.label == 4);
    CHECK(rec.score == doctest::Approx(0.7));
}

TEST_CASE("weighted match: w = [1,0,0] always yields column 1") {
    const WeightVector w{1.0, 0.0, 0.0};
    Rng rng(41);
    for (int t = 0; t < 20; ++t) {
        const std::vector<int> labels{static_cast<int>(1 + rng.below(9)),
                                      static_cast<int>(1 + rng.below(9)),
                                      static_cast<int>(1 + rng.below(9))};
        const std::vector<double> scores{0.3, 0.9, 0.9};
        // ties on zero mass can only lose to column 1's full mass
        CHECK(weighted_global_match(w, labels, scores).label == labels[0]);
    }
}

TEST_CASE("weighted match with uniform weights reduces to voting off ties") {
    Rng rng(43);
    for (int t = 0; t < 200; ++t) {
        const std::size_t S = 3 + rng.below(4);
        std::vector<int> labels(S);
        std::vector<double> scores(S);
        for (auto& l : labels) l = static_cast<int>(1 + rng.below(4));
        for (auto& s : scores) s = rng.uniform();
        const WeightVector uniform(S, 1.0 / static_cast<double>(S));

        // skip exact count ties; the tie-breaks agree anyway but the claim
        // under test is the no-tie case
        std::map<int, int> counts;
        for (const int l : labels) counts[l]++;
        int best = 0, second = 0;
        for (const auto& [l, n] : counts) {
            if (n >= best) { second = best; best = n; }
            else second = std::max(second, n);
        }
        if (best == second) continue;

        CHECK(weighted_global_match(uniform, labels, scores).label ==
              vote_global(labels, scores).label);
    }
}

TEST_CASE("weighted match is invariant to joint column permutation") {
    Rng rng(47);
    const WeightVector w{0.5, 0.3, 0.1, 0.1};
    for (int t = 0; t < 50; ++t) {
        std::vector<int> labels(4);
        std::vector<double> scores(4);
        for (auto& l : labels) l = static_cast<int>(1 + rng.below(5));
        for (auto& s : scores) s = rng.uniform();
        const int base = weighted_global_match(w, labels, scores).label;

        std::vector<std::size_t> perm{2, 0, 3, 1};
        WeightVector wp(4);
        std::vector<int> lp(4);
        std::vector<double> sp(4);
        for (std::size_t i = 0; i < 4; ++i) {
            wp[i] = w[perm[i]];
            lp[i] = labels[perm[i]];
            sp[i] = scores[perm[i]];
        }
        CHECK(weighted_global_match(wp, lp, sp).label == base);
    }
}

// ---------------------------------------------------------------------------
// decision forest
// ---------------------------------------------------------------------------

namespace {

MatchMatrix forest_training_matrix(Rng& rng, std::size_t M, std::size_t S, int classes,
                                   std::vector<int>& truth, bool perfect_col1) {
    std::vector<std::vector<int>> labels(M, std::vector<int>(S));
    std::vector<std::vector<double>> scores(M, std::vector<double>(S, 0.0));
    truth.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        truth[m] = static_cast<int>(1 + rng.below(classes));
        for (std::size_t s = 0; s < S; ++s)
            labels[m][s] = static_cast<int>(1 + rng.below(classes));
        if (perfect_col1) labels[m][0] = truth[m];
    }
    return tiny_match_matrix(labels, scores);
}

} // namespace

TEST_CASE("forest: perfectly predictive column gives 100% training accuracy") {
    Rng rng(51);
    std::vector<int> truth;
    const auto H = forest_training_matrix(rng, 40, 5, 5, truth, true);
    const auto forest = DecisionForest::train(H, truth, {150, 64, 7});
    for (std::size_t m = 0; m < H.samples(); ++m)
        CHECK(forest.predict(H.labels[m]).label == truth[m]);
}

TEST_CASE("forest: single-class truth always predicts that class") {
    Rng rng(53);
    std::vector<int> truth;
    auto H = forest_training_matrix(rng, 12, 4, 6, truth, false);
    std::fill(truth.begin(), truth.end(), 3);
    const auto forest = DecisionForest::train(H, truth, {25, 16, 1});
    for (int t = 0; t < 20; ++t) {
        std::vector<int> row(4);
        for (auto& l : row) l = static_cast<int>(1 + rng.below(6));
        const auto rec = forest.predict(row);
        CHECK(rec.label == 3);
        CHECK(rec.score == doctest::Approx(1.0));
    }
}

TEST_CASE("forest: seed determinism and prediction stability") {
    Rng rng(57);
    std::vector<int> truth;
    const auto H = forest_training_matrix(rng, 30, 6, 4, truth, false);
    const auto f1 = DecisionForest::train(H, truth, {40, 16, 99});
    const auto f2 = DecisionForest::train(H, truth, {40, 16, 99});
    for (int t = 0; t < 30; ++t) {
        std::vector<int> row(6);
        for (auto& l : row) l = static_cast<int>(rng.below(5)); // includes abstains
        const auto a = f1.predict(row);
        const auto b = f2.predict(row);
        CHECK(a.label == b.label);
        CHECK(a.score == b.score);
        const auto again = f1.predict(row);
        CHECK(again.label == a.label);
    }
}

TEST_CASE("forest: vote fraction is the score") {
    // two samples, pure classes; a 1-tree forest always votes 1.0
    MatchMatrix H = tiny_match_matrix({{1, 1}, {2, 2}}, {{0, 0}, {0, 0}});
    const auto forest = DecisionForest::train(H, {1, 2}, {1, 8, 3});
    const auto rec = forest.predict(std::vector<int>{1, 1});
    CHECK(rec.score == doctest::Approx(1.0));
}

TEST_CASE("forest errors") {
    MatchMatrix H = tiny_match_matrix({{1, 2}}, {{0, 0}});
    CHECK_THROWS_AS(DecisionForest::train(H, {1}, {10, 16, 0}), Error); // M < 2
    MatchMatrix H2 = tiny_match_matrix({{1, 2}, {2, 1}}, {{0, 0}, {0, 0}});
    CHECK_THROWS_AS(DecisionForest::train(H2, {1, 2}, {0, 16, 0}), Error); // no trees
    const auto forest = DecisionForest::train(H2, {1, 2}, {5, 16, 0});
    CHECK_THROWS_AS(forest.predict(std::vector<int>{1}), Error); // wrong row length
}

// ---------------------------------------------------------------------------
// match matrix construction
// ---------------------------------------------------------------------------

TEST_CASE("build_match_matrix uses related-patch columns in order") {
    const auto h = build_hierarchy(HierarchySpec::grid({{1, 1}, {2, 1}, {2, 2}}), 32, 32);

    MatchTable table;
    const std::size_t n = h.patches().size();
    table.rows.assign(3, std::vector<MatchingRecord>(n));
    Rng rng(61);
    for (auto& row : table.rows)
        for (auto& rec : row) rec = {static_cast<int>(1 + rng.below(5)), rng.uniform()};

    const auto H = build_match_matrix(table, h, {2, 2});
    const std::vector<PatchId> expected{{2, 2}, {1, 1}, {3, 3}, {3, 4}, {2, 1}};
    CHECK(H.columns == expected);
    CHECK(H.samples() == 3);
    CHECK(H.relations() == 5);
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t s = 0; s < 5; ++s) {
            const int ord = h.ordinal(expected[s]);
            CHECK(H.labels[m][s] == table.at(m, ord).label);
            CHECK(H.scores[m][s] == table.at(m, ord).score);
        }

    // isolated patch: M x 1, equal to its own local column
    const auto h1 = build_hierarchy(HierarchySpec::grid({{1, 1}}), 8, 8);
    MatchTable t1;
    t1.rows.assign(2, {MatchingRecord{4, 0.5}});
    const auto H1 = build_match_matrix(t1, h1, {1, 1});
    CHECK(H1.relations() == 1);
    CHECK(H1.labels[0][0] == 4);

    // abstain cells carried through
    table.rows[1][h.ordinal({2, 1})] = abstain_record();
    const auto H2 = build_match_matrix(table, h, {2, 2});
    CHECK(H2.labels[1][4] == 0);
}

TEST_CASE("global model routes by kind and handles all-abstain rows") {
    const PatchId p{1, 1};
    const auto vote_model = GlobalModel::make_vote(p, 3);
    const std::vector<int> labels{0, 0, 0};
    const std::vector<double> scores{0, 0, 0};
    CHECK(vote_model.predict(labels, scores).abstain());

    const auto weighted = GlobalModel::make_weighted(p, {0.5, 0.5}, false);
    const std::vector<int> l2{3, 0};
    const std::vector<double> s2{0.9, 0.0};
    CHECK(weighted.predict(l2, s2).label == 3);
}
