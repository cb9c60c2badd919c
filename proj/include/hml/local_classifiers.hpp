#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hml/features.hpp"
#include "hml/hierarchy.hpp"

namespace hml {

// Label 0 is the abstain sentinel (occluded patch, no opinion); real labels
// live in 1..C. Downstream voters and matrix builders skip label 0.
struct MatchingRecord {
    int label = 0;
    double score = -std::numeric_limits<double>::infinity();

    bool abstain() const { return label == 0; }
    bool operator==(const MatchingRecord&) const = default;
};

inline MatchingRecord abstain_record() { return MatchingRecord{}; }

enum class LocalKind { nn, crc, cosine };

const char* local_kind_name(LocalKind k);
LocalKind parse_local_kind(const std::string& name);

struct LocalParams {
    double crc_lambda = 0.001;
};

// Per-patch classifier over gallery exemplars.
//
//   nn     - nearest neighbor on l2-normalized features, score = -distance
//   crc    - collaborative representation with ridge coding and the
//            regularized per-class residual rule, score = -residual
//   cosine - max cosine similarity over exemplars, score = similarity
//
// Ties break toward the smallest label. Instances are immutable after
// training and safe to share across threads.
class LocalClassifier {
public:
    LocalClassifier() = default; // empty; assign from train() before use

    static LocalClassifier train(LocalKind kind,
                                 const std::vector<FeatureVector>& gallery,
                                 const std::vector<int>& labels,
                                 const LocalParams& params = {});

    MatchingRecord predict(const FeatureVector& probe) const;

    LocalKind kind() const { return kind_; }
    int dim() const { return dim_; }
    int class_count() const { return class_count_; }
    double crc_lambda() const { return crc_lambda_; }

    // Serialization hooks for the bundle format.
    struct State {
        LocalKind kind;
        int dim;
        int class_count;
        double crc_lambda;
        std::vector<int> labels;
        std::vector<double> gallery;   // column-major dim x n
        std::vector<double> projector; // row-major n x dim (crc only)
    };
    State state() const;
    static LocalClassifier from_state(State s);

private:
    MatchingRecord predict_nn(const FeatureVector& probe) const;
    MatchingRecord predict_crc(const FeatureVector& probe) const;
    MatchingRecord predict_cosine(const FeatureVector& probe) const;

    LocalKind kind_ = LocalKind::nn;
    int dim_ = 0;
    int n_ = 0;
    int class_count_ = 0;
    double crc_lambda_ = 0.0;
    std::vector<int> labels_;            // per gallery column
    std::vector<double> gallery_;        // column-major dim x n, l2-normalized columns
    std::vector<double> projector_;      // row-major n x dim, (A^T A + lambda I)^-1 A^T
    std::vector<std::vector<int>> class_columns_; // gallery columns per label (1-based label - 1)
};

inline LocalClassifier train_local(LocalKind kind, const std::vector<FeatureVector>& gallery,
                                   const std::vector<int>& labels,
                                   const LocalParams& params = {}) {
    return LocalClassifier::train(kind, gallery, labels, params);
}
inline MatchingRecord predict_local(const LocalClassifier& c, const FeatureVector& probe) {
    return c.predict(probe);
}

// Local matchings for every (sample, patch) cell. Row m corresponds to
// signatures[m]; columns follow hierarchy patch ordinals.
struct MatchTable {
    std::vector<std::vector<MatchingRecord>> rows; // M x N

    std::size_t samples() const { return rows.size(); }
    std::size_t patch_slots() const { return rows.empty() ? 0 : rows.front().size(); }
    const MatchingRecord& at(std::size_t sample, std::size_t patch_ordinal) const {
        return rows[sample][patch_ordinal];
    }
};

// Classifiers are indexed by hierarchy patch ordinal. Occluded patches get
// the abstain sentinel. Cells are independent; computation may run in
// parallel across threads.
MatchTable local_match_all(const std::vector<LocalClassifier>& classifiers,
                           const PatchHierarchy& h,
                           const std::vector<SampleSignature>& signatures,
                           int threads = 1);

} // namespace hml
