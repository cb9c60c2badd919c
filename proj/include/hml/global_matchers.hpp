#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/local_classifiers.hpp"

namespace hml {

// Per-patch matrix of hierarchically related local matchings: one row per
// sample, one column per related patch (self, parents, children, adjacent
// siblings — the related_patches order). Column 0 is the patch itself.
struct MatchMatrix {
    PatchId patch;
    std::vector<PatchId> columns;
    std::vector<std::vector<int>> labels;    // M x S
    std::vector<std::vector<double>> scores; // M x S

    std::size_t samples() const { return labels.size(); }
    std::size_t relations() const { return columns.size(); } // S
};

MatchMatrix build_match_matrix(const MatchTable& table, const PatchHierarchy& h, PatchId patch);

// Majority label among non-abstain entries; ties go to the label whose
// supporting entries have the higher mean score, then to the smaller label.
// Returned score is the winner's mean score.
MatchingRecord vote_global(std::span<const int> labels, std::span<const double> scores);

// +1 where the related matching equals the truth, -1 otherwise (abstain
// counts as -1: an abstaining patch cannot be correct).
struct DecisionMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int8_t> z; // row-major, +1/-1

    std::int8_t at(std::size_t m, std::size_t s) const { return z[m * cols + s]; }
    std::span<const std::int8_t> row(std::size_t m) const { return {z.data() + m * cols, cols}; }
};

DecisionMatrix build_decision_matrix(const MatchMatrix& H, const std::vector<int>& truth);

using WeightVector = std::vector<double>;

// epsilon_m = sum_s w_s z_{m,s}
double ensemble_margin(const WeightVector& w, std::span<const std::int8_t> z_row);
// sum_m (1 - epsilon_m)^2
double ensemble_loss(const WeightVector& w, const DecisionMatrix& Z);

struct WeightSolveOptions {
    int max_iterations = 10000;
    double min_decrease = 1e-9;
};

struct WeightSolveResult {
    WeightVector weights;       // >= 0, sums to 1 exactly (after renormalization)
    bool degenerate = false;    // solver collapsed to all-zero; uniform returned
    int iterations = 0;
    // Objective of the relaxed programme at its solution, before the simplex
    // renormalization; never above the value at the uniform vector, any
    // simplex vertex, or any other feasible point the solver could reach.
    double objective = 0.0;
    std::vector<double> objective_trace; // per-iteration, non-increasing
};

// Minimizes ||e' - Z' w||^2 + lambda ||w||_1 over w >= 0 with proximal
// gradient descent, where Z' stacks a row of ones under Z (soft sum-to-one
// constraint) and e' appends 1 to the all-ones target. The returned weights
// are renormalized onto the simplex.
WeightSolveResult solve_weights(const DecisionMatrix& Z, double lambda,
                                const WeightSolveOptions& options = {});

// Label with the largest summed weight over supporting entries; ties go to
// the higher mean score, then the smaller label. Score is the winning mass.
MatchingRecord weighted_global_match(const WeightVector& w, std::span<const int> labels,
                                     std::span<const double> scores);

// ---------------------------------------------------------------------------
// decision-rule forest
// ---------------------------------------------------------------------------

struct ForestParams {
    int n_trees = 150;
    int max_depth = 16;
    std::uint64_t seed = 0;
};

// Random forest over the categorical label columns of a MatchMatrix. Splits
// are equality predicates (column s == label c) chosen to maximize Gini
// impurity decrease among ceil(sqrt(S)) randomly drawn candidate columns;
// when none of those admits a useful split the draw extends to the remaining
// columns before giving up. Trees train on bootstrap resamples. Deterministic
// for a fixed seed.
class DecisionForest {
public:
    DecisionForest() = default; // empty forest; only valid as a placeholder

    static DecisionForest train(const MatchMatrix& H, const std::vector<int>& truth,
                                const ForestParams& params);

    // Majority vote over trees; ties toward the smaller label; score is the
    // winner's vote fraction.
    MatchingRecord predict(std::span<const int> labels) const;

    int tree_count() const { return static_cast<int>(roots_.size()); }
    std::size_t relations() const { return relations_; }

    struct Node {
        int column = -1;   // split column; -1 for leaves
        int value = 0;     // split label value
        int match = -1;    // child when labels[column] == value
        int rest = -1;     // child otherwise
        int leaf_label = 0;
    };

    struct State {
        std::size_t relations;
        int class_count;
        std::vector<std::vector<Node>> trees;
        std::vector<int> roots;
    };
    State state() const;
    static DecisionForest from_state(State s);

private:
    std::size_t relations_ = 0;
    int class_count_ = 0;
    std::vector<std::vector<Node>> trees_;
    std::vector<int> roots_;
};

inline DecisionForest train_forest(const MatchMatrix& H, const std::vector<int>& truth,
                                   int n_trees, int max_depth, std::uint64_t seed) {
    return DecisionForest::train(H, truth, ForestParams{n_trees, max_depth, seed});
}
inline MatchingRecord predict_forest(const DecisionForest& f, std::span<const int> labels) {
    return f.predict(labels);
}

// ---------------------------------------------------------------------------
// global model (per patch)
// ---------------------------------------------------------------------------

enum class GlobalKind { vote, weights, forest };

const char* global_kind_name(GlobalKind k);
GlobalKind parse_global_kind(const std::string& name);

// One trained global matcher for one patch; routes prediction by kind. A row
// whose entries all abstain yields the abstain sentinel.
class GlobalModel {
public:
    static GlobalModel make_vote(PatchId patch, std::size_t relations);
    static GlobalModel make_weighted(PatchId patch, WeightVector weights, bool degenerate);
    static GlobalModel make_forest(PatchId patch, DecisionForest forest);

    MatchingRecord predict(std::span<const int> labels, std::span<const double> scores) const;

    GlobalKind kind() const { return kind_; }
    PatchId patch() const { return patch_; }
    std::size_t relations() const { return relations_; }
    const WeightVector& weights() const { return weights_; }
    const DecisionForest& forest() const { return forest_; }
    bool degenerate_weights() const { return degenerate_weights_; }

private:
    GlobalModel() = default;

    GlobalKind kind_ = GlobalKind::vote;
    PatchId patch_;
    std::size_t relations_ = 0;
    WeightVector weights_;
    bool degenerate_weights_ = false;
    DecisionForest forest_;
};

} // namespace hml
