#include "hml/global_matchers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "hml/error.hpp"
#include "hml/rng.hpp"

namespace hml {

// ---------------------------------------------------------------------------
// match matrix
// ---------------------------------------------------------------------------

MatchMatrix build_match_matrix(const MatchTable& table, const PatchHierarchy& h, PatchId patch) {
    MatchMatrix H;
    H.patch = patch;
    H.columns = h.related_patches(patch);

    std::vector<int> ordinals;
    ordinals.reserve(H.columns.size());
    for (const auto& col : H.columns) ordinals.push_back(h.ordinal(col));

    const std::size_t M = table.samples();
    if (table.patch_slots() != h.patches().size())
        fail(ErrorCode::MissingRecord, "matching table does not cover this hierarchy");

    H.labels.assign(M, std::vector<int>(H.columns.size()));
    H.scores.assign(M, std::vector<double>(H.columns.size()));
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t s = 0; s < ordinals.size(); ++s) {
            const MatchingRecord& rec = table.at(m, static_cast<std::size_t>(ordinals[s]));
            H.labels[m][s] = rec.label;
            H.scores[m][s] = rec.score;
        }
    }
    return H;
}

// ---------------------------------------------------------------------------
// voting
// ---------------------------------------------------------------------------

MatchingRecord vote_global(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size())
        fail(ErrorCode::DimensionMismatch, "label and score rows differ in length");

    std::map<int, std::pair<int, double>> tally; // label -> (count, score sum)
    for (std::size_t s = 0; s < labels.size(); ++s) {
        if (labels[s] == 0) continue;
        auto& t = tally[labels[s]];
        t.first += 1;
        t.second += scores[s];
    }
    if (tally.empty()) fail(ErrorCode::AllAbstain, "every entry abstained");

    int best_label = 0;
    int best_count = -1;
    double best_mean = 0.0;
    for (const auto& [label, t] : tally) {
        const double mean = t.second / t.first;
        if (t.first > best_count || (t.first == best_count && mean > best_mean)) {
            best_label = label;
            best_count = t.first;
            best_mean = mean;
        }
        // equal count and equal mean: the map order already favors the
        // smaller label, so keep the incumbent
    }
    return {best_label, best_mean};
}

// ---------------------------------------------------------------------------
// decision matrix and the weighted matcher
// ---------------------------------------------------------------------------

DecisionMatrix build_decision_matrix(const MatchMatrix& H, const std::vector<int>& truth) {
    if (truth.size() != H.samples())
        fail(ErrorCode::DimensionMismatch, "truth length does not match sample count");
    DecisionMatrix Z;
    Z.rows = H.samples();
    Z.cols = H.relations();
    Z.z.resize(Z.rows * Z.cols);
    for (std::size_t m = 0; m < Z.rows; ++m)
        for (std::size_t s = 0; s < Z.cols; ++s)
            Z.z[m * Z.cols + s] = (H.labels[m][s] != 0 && H.labels[m][s] == truth[m]) ? 1 : -1;
    return Z;
}

double ensemble_margin(const WeightVector& w, std::span<const std::int8_t> z_row) {
    if (w.size() != z_row.size())
        fail(ErrorCode::DimensionMismatch, "weight and decision rows differ in length");
    double margin = 0.0;
    for (std::size_t s = 0; s < w.size(); ++s) margin += w[s] * z_row[s];
    return margin;
}

double ensemble_loss(const WeightVector& w, const DecisionMatrix& Z) {
    if (w.size() != Z.cols)
        fail(ErrorCode::DimensionMismatch, "weight length does not match decision matrix");
    double loss = 0.0;
    for (std::size_t m = 0; m < Z.rows; ++m) {
        const double e = 1.0 - ensemble_margin(w, Z.row(m));
        loss += e * e;
    }
    return loss;
}

namespace {

// Augmented objective of the weight programme: ||e' - Z' w||^2 + lambda ||w||_1
// with Z' = [Z; ones^T], e' = [ones; 1], evaluated for w >= 0.
double augmented_objective(const DecisionMatrix& Z, const WeightVector& w, double lambda) {
    double obj = 0.0;
    for (std::size_t m = 0; m < Z.rows; ++m) {
        const double e = 1.0 - ensemble_margin(w, Z.row(m));
        obj += e * e;
    }
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    const double e_last = 1.0 - wsum;
    obj += e_last * e_last;
    for (const double v : w) obj += lambda * std::abs(v);
    return obj;
}

// Largest eigenvalue of Z'^T Z' by power iteration on the S x S Gram matrix.
// The start vector is a fixed generic direction: an all-ones start can be
// exactly orthogonal to the top eigenspace of these integer-structured
// matrices (e.g. perfectly anti-correlated columns).
double top_eigenvalue(const std::vector<double>& gram, std::size_t S) {
    Rng rng(0x9e3779b9u);
    std::vector<double> v(S);
    for (auto& x : v) x = 0.5 + rng.uniform();
    std::vector<double> next(S);
    double lambda = 0.0;
    for (int iter = 0; iter < 2000; ++iter) {
        for (std::size_t i = 0; i < S; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < S; ++j) acc += gram[i * S + j] * v[j];
            next[i] = acc;
        }
        double norm = 0.0;
        for (const double x : next) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (std::size_t i = 0; i < S; ++i) next[i] /= norm;
        const double prev = lambda;
        lambda = norm;
        v.swap(next);
        if (iter > 4 && std::abs(lambda - prev) <= 1e-14 * std::max(1.0, lambda)) break;
    }
    return lambda;
}

} // namespace

WeightSolveResult solve_weights(const DecisionMatrix& Z, double lambda,
                                const WeightSolveOptions& options) {
    const std::size_t M = Z.rows;
    const std::size_t S = Z.cols;
    if (M < 1 || S < 1) fail(ErrorCode::EmptyInput, "decision matrix is empty");
    if (!(lambda > 0.0)) fail(ErrorCode::ConfigConflict, "weight lambda must be > 0");

    // Gram = Z'^T Z' where Z' has the ones row appended; likewise b = Z'^T e'.
    std::vector<double> gram(S * S, 0.0);
    std::vector<double> b(S, 0.0);
    for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t j = i; j < S; ++j) {
            double acc = 1.0; // ones-row contribution
            for (std::size_t m = 0; m < M; ++m)
                acc += static_cast<double>(Z.at(m, i)) * Z.at(m, j);
            gram[i * S + j] = acc;
            gram[j * S + i] = acc;
        }
        double acc = 1.0;
        for (std::size_t m = 0; m < M; ++m) acc += Z.at(m, i);
        b[i] = acc;
    }

    // The gradient of the smooth part is 2 (Gram w - b), so its Lipschitz
    // constant is 2 * lambda_max(Gram); the small factor on top keeps the
    // power-iteration estimate on the safe side.
    const double lip = 2.0 * top_eigenvalue(gram, S) * (1.0 + 1e-9);
    double step = lip > 0.0 ? 1.0 / lip : 1.0;

    WeightSolveResult result;
    WeightVector w(S, 1.0 / static_cast<double>(S));
    double obj = augmented_objective(Z, w, lambda);
    result.objective_trace.push_back(obj);

    std::vector<double> grad(S);
    WeightVector candidate(S);
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        for (std::size_t i = 0; i < S; ++i) {
            double acc = -b[i];
            for (std::size_t j = 0; j < S; ++j) acc += gram[i * S + j] * w[j];
            grad[i] = 2.0 * acc;
        }
        // proximal step: for w >= 0 the l1 prox is a shift by step*lambda
        // followed by clamping at zero
        for (std::size_t i = 0; i < S; ++i)
            candidate[i] = std::max(0.0, w[i] - step * grad[i] - step * lambda);

        const double next_obj = augmented_objective(Z, candidate, lambda);
        result.iterations = iter + 1;
        if (next_obj > obj) {
            // only possible when the eigenvalue estimate fell short; shrink
            // the step and retry from the current iterate
            step *= 0.5;
            continue;
        }
        w.swap(candidate);
        result.objective_trace.push_back(next_obj);
        if (obj - next_obj < options.min_decrease) {
            obj = next_obj;
            break;
        }
        obj = next_obj;
    }
    result.objective = obj;

    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    if (wsum <= 0.0) {
        result.degenerate = true;
        w.assign(S, 1.0 / static_cast<double>(S));
    } else {
        for (auto& v : w) v /= wsum;
    }
    // make the simplex sum exact
    const double renorm = std::accumulate(w.begin(), w.end(), 0.0);
    if (renorm != 1.0 && renorm > 0.0) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < S; ++i)
            if (w[i] > w[arg]) arg = i;
        double rest = 0.0;
        for (std::size_t i = 0; i < S; ++i)
            if (i != arg) rest += w[i];
        w[arg] = 1.0 - rest;
    }
    result.weights = std::move(w);
    return result;
}

MatchingRecord weighted_global_match(const WeightVector& w, std::span<const int> labels,
                                     std::span<const double> scores) {
    if (w.size() != labels.size() || labels.size() != scores.size())
        fail(ErrorCode::DimensionMismatch, "weights, labels and scores differ in length");

    std::map<int, std::pair<double, std::pair<int, double>>> tally;
    // label -> (weight mass, (count, score sum))
    for (std::size_t s = 0; s < labels.size(); ++s) {
        if (labels[s] == 0) continue;
        auto& t = tally[labels[s]];
        t.first += w[s];
        t.second.first += 1;
        t.second.second += scores[s];
    }
    if (tally.empty()) fail(ErrorCode::AllAbstain, "every entry abstained");

    int best_label = 0;
    double best_mass = -1.0;
    double best_mean = 0.0;
    for (const auto& [label, t] : tally) {
        const double mean = t.second.second / t.second.first;
        if (t.first > best_mass || (t.first == best_mass && mean > best_mean)) {
            best_label = label;
            best_mass = t.first;
            best_mean = mean;
        }
    }
    return {best_label, best_mass};
}

// ---------------------------------------------------------------------------
// decision-rule forest
// ---------------------------------------------------------------------------

namespace {

double gini_impurity(const std::map<int, int>& counts, int total) {
    if (total == 0) return 0.0;
    double sum_sq = 0.0;
    for (const auto& [label, n] : counts) {
        const double p = static_cast<double>(n) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

int majority_truth(const std::vector<int>& truth, const std::vector<int>& rows) {
    std::map<int, int> counts;
    for (const int m : rows) counts[truth[m]]++;
    int best = 0, best_n = -1;
    for (const auto& [label, n] : counts)
        if (n > best_n) { best = label; best_n = n; }
    return best;
}

struct TreeBuilder {
    const MatchMatrix& H;
    const std::vector<int>& truth;
    int max_depth;
    Rng rng;
    std::vector<DecisionForest::Node> nodes;

    int build(std::vector<int> rows, int depth) {
        const std::size_t S = H.relations();
        std::map<int, int> counts;
        for (const int m : rows) counts[truth[m]]++;

        const bool pure = counts.size() <= 1;
        if (pure || depth >= max_depth || rows.size() < 2) {
            return make_leaf(majority_truth(truth, rows));
        }

        const double parent_impurity = gini_impurity(counts, static_cast<int>(rows.size()));

        // Candidate columns: a random permutation, primarily the first
        // ceil(sqrt(S)); extend further only while no usable split was found.
        std::vector<int> order(S);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = S; i > 1; --i) {
            const std::size_t j = rng.below(i);
            std::swap(order[i - 1], order[j]);
        }
        const std::size_t mtry =
            static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(S))));

        double best_gain = 0.0;
        int best_col = -1, best_val = 0;
        for (std::size_t oi = 0; oi < S; ++oi) {
            if (oi >= mtry && best_col >= 0) break;
            const int col = order[oi];
            // labels present at this node in this column
            std::map<int, int> value_counts;
            for (const int m : rows) value_counts[H.labels[m][col]]++;
            if (value_counts.size() < 2) continue;
            for (const auto& [value, n_match] : value_counts) {
                std::map<int, int> match_counts;
                for (const int m : rows)
                    if (H.labels[m][col] == value) match_counts[truth[m]]++;
                std::map<int, int> rest_counts = counts;
                for (const auto& [label, n] : match_counts) {
                    rest_counts[label] -= n;
                    if (rest_counts[label] == 0) rest_counts.erase(label);
                }
                const int n_rest = static_cast<int>(rows.size()) - n_match;
                const double gain =
                    parent_impurity -
                    (n_match * gini_impurity(match_counts, n_match) +
                     n_rest * gini_impurity(rest_counts, n_rest)) /
                        static_cast<double>(rows.size());
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_col = col;
                    best_val = value;
                }
            }
        }

        if (best_col < 0) return make_leaf(majority_truth(truth, rows));

        std::vector<int> match_rows, rest_rows;
        for (const int m : rows)
            (H.labels[m][best_col] == best_val ? match_rows : rest_rows).push_back(m);
        rows.clear();
        rows.shrink_to_fit();

        const int self = static_cast<int>(nodes.size());
        nodes.push_back({best_col, best_val, -1, -1, 0});
        const int match_child = build(std::move(match_rows), depth + 1);
        const int rest_child = build(std::move(rest_rows), depth + 1);
        nodes[self].match = match_child;
        nodes[self].rest = rest_child;
        return self;
    }

    int make_leaf(int label) {
        nodes.push_back({-1, 0, -1, -1, label});
        return static_cast<int>(nodes.size() - 1);
    }
};

} // namespace

DecisionForest DecisionForest::train(const MatchMatrix& H, const std::vector<int>& truth,
                                     const ForestParams& params) {
    const std::size_t M = H.samples();
    if (M < 2) fail(ErrorCode::InsufficientSamples, "forest training needs at least 2 samples");
    if (params.n_trees < 1)
        fail(ErrorCode::InsufficientSamples, "forest needs at least one tree");
    if (truth.size() != M)
        fail(ErrorCode::DimensionMismatch, "truth length does not match sample count");
    for (const int y : truth)
        if (y < 1) fail(ErrorCode::MalformedRecord, "truth labels must be >= 1");

    DecisionForest f;
    f.relations_ = H.relations();
    f.class_count_ = *std::max_element(truth.begin(), truth.end());
    f.trees_.resize(static_cast<std::size_t>(params.n_trees));
    f.roots_.resize(static_cast<std::size_t>(params.n_trees));

    const int depth_limit = params.max_depth > 0 ? params.max_depth
                                                 : std::numeric_limits<int>::max();
    for (int t = 0; t < params.n_trees; ++t) {
        Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(t)));
        std::vector<int> bootstrap(M);
        for (std::size_t i = 0; i < M; ++i)
            bootstrap[i] = static_cast<int>(rng.below(M));
        std::sort(bootstrap.begin(), bootstrap.end());

        TreeBuilder builder{H, truth, depth_limit, std::move(rng), {}};
        const int root = builder.build(std::move(bootstrap), 0);
        f.trees_[t] = std::move(builder.nodes);
        f.roots_[t] = root;
    }
    return f;
}

MatchingRecord DecisionForest::predict(std::span<const int> labels) const {
    if (labels.size() != relations_)
        fail(ErrorCode::DimensionMismatch,
             "row has " + std::to_string(labels.size()) + " entries, forest was trained on " +
                 std::to_string(relations_));
    if (trees_.empty()) fail(ErrorCode::InsufficientSamples, "empty forest");

    std::map<int, int> votes;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
        const auto& nodes = trees_[t];
        int at = roots_[t];
        while (nodes[at].column >= 0)
            at = labels[nodes[at].column] == nodes[at].value ? nodes[at].match : nodes[at].rest;
        votes[nodes[at].leaf_label]++;
    }
    int best_label = 0, best_votes = -1;
    for (const auto& [label, n] : votes)
        if (n > best_votes) { best_label = label; best_votes = n; }
    return {best_label, static_cast<double>(best_votes) / static_cast<double>(trees_.size())};
}

DecisionForest::State DecisionForest::state() const {
    return State{relations_, class_count_, trees_, roots_};
}

DecisionForest DecisionForest::from_state(State s) {
    DecisionForest f;
    f.relations_ = s.relations;
    f.class_count_ = s.class_count;
    f.trees_ = std::move(s.trees);
    f.roots_ = std::move(s.roots);
    if (f.trees_.size() != f.roots_.size())
        fail(ErrorCode::CorruptBundle, "forest trees and roots disagree");
    for (std::size_t t = 0; t < f.trees_.size(); ++t) {
        const auto& nodes = f.trees_[t];
        const int n = static_cast<int>(nodes.size());
        if (f.roots_[t] < 0 || f.roots_[t] >= n)
            fail(ErrorCode::CorruptBundle, "forest root out of range");
        for (const auto& node : nodes) {
            if (node.column >= 0) {
                if (static_cast<std::size_t>(node.column) >= f.relations_ ||
                    node.match < 0 || node.match >= n || node.rest < 0 || node.rest >= n)
                    fail(ErrorCode::CorruptBundle, "forest node out of range");
            } else if (node.leaf_label < 1 || node.leaf_label > f.class_count_) {
                fail(ErrorCode::CorruptBundle, "forest leaf label out of range");
            }
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// global model
// ---------------------------------------------------------------------------

const char* global_kind_name(GlobalKind k) {
    switch (k) {
        case GlobalKind::vote: return "vote";
        case GlobalKind::weights: return "weights";
        case GlobalKind::forest: return "forest";
    }
    return "?";
}

GlobalKind parse_global_kind(const std::string& name) {
    if (name == "vote") return GlobalKind::vote;
    if (name == "weights") return GlobalKind::weights;
    if (name == "forest") return GlobalKind::forest;
    fail(ErrorCode::UnknownGlobalKind, "unknown global matcher kind '" + name + "'");
}

GlobalModel GlobalModel::make_vote(PatchId patch, std::size_t relations) {
    GlobalModel g;
    g.kind_ = GlobalKind::vote;
    g.patch_ = patch;
    g.relations_ = relations;
    return g;
}

GlobalModel GlobalModel::make_weighted(PatchId patch, WeightVector weights, bool degenerate) {
    GlobalModel g;
    g.kind_ = GlobalKind::weights;
    g.patch_ = patch;
    g.relations_ = weights.size();
    g.weights_ = std::move(weights);
    g.degenerate_weights_ = degenerate;
    return g;
}

GlobalModel GlobalModel::make_forest(PatchId patch, DecisionForest forest) {
    GlobalModel g;
    g.kind_ = GlobalKind::forest;
    g.patch_ = patch;
    g.relations_ = forest.relations();
    g.forest_ = std::move(forest);
    return g;
}

MatchingRecord GlobalModel::predict(std::span<const int> labels,
                                    std::span<const double> scores) const {
    if (labels.size() != relations_)
        fail(ErrorCode::DimensionMismatch, "row length does not match the trained model");
    const bool all_abstain =
        std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; });
    if (all_abstain) return abstain_record();
    switch (kind_) {
        case GlobalKind::vote: return vote_global(labels, scores);
        case GlobalKind::weights: return weighted_global_match(weights_, labels, scores);
        case GlobalKind::forest: return forest_.predict(labels);
    }
    fail(ErrorCode::UnknownGlobalKind, "unreachable global kind");
}

} // namespace hml
