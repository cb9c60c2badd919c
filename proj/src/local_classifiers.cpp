#include "hml/local_classifiers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "hml/error.hpp"
#include "hml/simd/kernels.hpp"
#include "hml/util.hpp"

namespace hml {

const char* local_kind_name(LocalKind k) {
    switch (k) {
        case LocalKind::nn: return "nn";
        case LocalKind::crc: return "crc";
        case LocalKind::cosine: return "cosine";
    }
    return "?";
}

LocalKind parse_local_kind(const std::string& name) {
    if (name == "nn") return LocalKind::nn;
    if (name == "crc") return LocalKind::crc;
    if (name == "cosine") return LocalKind::cosine;
    fail(ErrorCode::ConfigConflict, "unknown local classifier kind '" + name + "'");
}

namespace {

void normalize_l2(double* v, std::size_t n) {
    const double norm = std::sqrt(simd::dot(v, v, n));
    if (norm > 0.0) simd::scale(1.0 / norm, v, n);
}

} // namespace

LocalClassifier LocalClassifier::train(LocalKind kind,
                                       const std::vector<FeatureVector>& gallery,
                                       const std::vector<int>& labels,
                                       const LocalParams& params) {
    if (gallery.empty()) fail(ErrorCode::EmptyGallery, "gallery has no samples");
    if (gallery.size() != labels.size())
        fail(ErrorCode::DimensionMismatch, "gallery and label counts differ");

    LocalClassifier c;
    c.kind_ = kind;
    c.dim_ = static_cast<int>(gallery.front().size());
    c.n_ = static_cast<int>(gallery.size());
    c.crc_lambda_ = params.crc_lambda;
    c.labels_ = labels;

    int max_label = 0;
    for (const int l : labels) {
        if (l < 1) fail(ErrorCode::MalformedRecord, "gallery labels must be >= 1");
        max_label = std::max(max_label, l);
    }
    c.class_count_ = max_label;
    c.class_columns_.assign(max_label, {});
    for (int j = 0; j < c.n_; ++j) c.class_columns_[labels[j] - 1].push_back(j);

    c.gallery_.resize(static_cast<std::size_t>(c.dim_) * c.n_);
    for (int j = 0; j < c.n_; ++j) {
        if (static_cast<int>(gallery[j].size()) != c.dim_)
            fail(ErrorCode::DimensionMismatch, "gallery vectors differ in dimension");
        double* col = c.gallery_.data() + static_cast<std::size_t>(j) * c.dim_;
        std::copy(gallery[j].begin(), gallery[j].end(), col);
        normalize_l2(col, static_cast<std::size_t>(c.dim_));
    }

    if (kind == LocalKind::crc) {
        if (params.crc_lambda < 0.0)
            fail(ErrorCode::ConfigConflict, "crc lambda must be >= 0");
        const Eigen::Map<const Eigen::MatrixXd> A(c.gallery_.data(), c.dim_, c.n_);
        Eigen::MatrixXd gram = A.transpose() * A;
        gram.diagonal().array() += params.crc_lambda;
        if (params.crc_lambda == 0.0) {
            const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
            if (!lu.isInvertible())
                fail(ErrorCode::SingularSystem,
                     "crc with lambda = 0 requires a full-rank gallery");
            const Eigen::MatrixXd projector = lu.solve(A.transpose());
            c.projector_.resize(static_cast<std::size_t>(c.n_) * c.dim_);
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                c.projector_.data(), c.n_, c.dim_) = projector;
        } else {
            const Eigen::MatrixXd projector = gram.ldlt().solve(A.transpose());
            c.projector_.resize(static_cast<std::size_t>(c.n_) * c.dim_);
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                c.projector_.data(), c.n_, c.dim_) = projector;
        }
    }
    return c;
}

MatchingRecord LocalClassifier::predict(const FeatureVector& probe) const {
    if (static_cast<int>(probe.size()) != dim_)
        fail(ErrorCode::DimensionMismatch,
             "probe has dimension " + std::to_string(probe.size()) + ", classifier expects " +
                 std::to_string(dim_));
    switch (kind_) {
        case LocalKind::nn: return predict_nn(probe);
        case LocalKind::crc: return predict_crc(probe);
        case LocalKind::cosine: return predict_cosine(probe);
    }
    fail(ErrorCode::ConfigConflict, "unreachable classifier kind");
}

MatchingRecord LocalClassifier::predict_nn(const FeatureVector& probe) const {
    FeatureVector q(probe);
    normalize_l2(q.data(), q.size());
    double best = std::numeric_limits<double>::infinity();
    int best_label = 0;
    for (int j = 0; j < n_; ++j) {
        const double d2 =
            simd::l2_sqr(q.data(), gallery_.data() + static_cast<std::size_t>(j) * dim_,
                         static_cast<std::size_t>(dim_));
        const int label = labels_[j];
        if (d2 < best || (d2 == best && label < best_label)) {
            best = d2;
            best_label = label;
        }
    }
    return {best_label, -std::sqrt(best)};
}

MatchingRecord LocalClassifier::predict_crc(const FeatureVector& probe) const {
    // coding alpha = P y, then the regularized residual rule per class:
    // r_c = ||y - A_c alpha_c|| / ||alpha_c||
    std::vector<double> alpha(static_cast<std::size_t>(n_));
    for (int j = 0; j < n_; ++j)
        alpha[j] = simd::dot(projector_.data() + static_cast<std::size_t>(j) * dim_,
                             probe.data(), static_cast<std::size_t>(dim_));

    std::vector<double> recon(static_cast<std::size_t>(dim_));
    double best = std::numeric_limits<double>::infinity();
    int best_label = 0;
    for (std::size_t ci = 0; ci < class_columns_.size(); ++ci) {
        const auto& cols = class_columns_[ci];
        if (cols.empty()) continue;
        std::fill(recon.begin(), recon.end(), 0.0);
        double coef_sqr = 0.0;
        for (const int j : cols) {
            simd::axpy(alpha[j], gallery_.data() + static_cast<std::size_t>(j) * dim_,
                       recon.data(), static_cast<std::size_t>(dim_));
            coef_sqr += alpha[j] * alpha[j];
        }
        const double resid = std::sqrt(simd::l2_sqr(probe.data(), recon.data(),
                                                    static_cast<std::size_t>(dim_)));
        const double denom = std::max(std::sqrt(coef_sqr), 1e-12);
        const double r = resid / denom;
        const int label = static_cast<int>(ci) + 1;
        if (r < best || (r == best && label < best_label)) {
            best = r;
            best_label = label;
        }
    }
    if (best_label == 0) fail(ErrorCode::EmptyGallery, "crc gallery has no usable class");
    return {best_label, -best};
}

MatchingRecord LocalClassifier::predict_cosine(const FeatureVector& probe) const {
    FeatureVector q(probe);
    normalize_l2(q.data(), q.size());
    double best = -std::numeric_limits<double>::infinity();
    int best_label = 0;
    for (int j = 0; j < n_; ++j) {
        const double sim =
            simd::dot(q.data(), gallery_.data() + static_cast<std::size_t>(j) * dim_,
                      static_cast<std::size_t>(dim_));
        const int label = labels_[j];
        if (sim > best || (sim == best && (best_label == 0 || label < best_label))) {
            best = sim;
            best_label = label;
        }
    }
    return {best_label, best};
}

LocalClassifier::State LocalClassifier::state() const {
    return State{kind_, dim_, class_count_, crc_lambda_, labels_, gallery_, projector_};
}

LocalClassifier LocalClassifier::from_state(State s) {
    LocalClassifier c;
    c.kind_ = s.kind;
    c.dim_ = s.dim;
    c.n_ = static_cast<int>(s.labels.size());
    c.class_count_ = s.class_count;
    c.crc_lambda_ = s.crc_lambda;
    c.labels_ = std::move(s.labels);
    c.gallery_ = std::move(s.gallery);
    c.projector_ = std::move(s.projector);
    if (c.gallery_.size() != static_cast<std::size_t>(c.dim_) * c.n_)
        fail(ErrorCode::CorruptBundle, "local classifier gallery has the wrong shape");
    if (c.kind_ == LocalKind::crc &&
        c.projector_.size() != static_cast<std::size_t>(c.dim_) * c.n_)
        fail(ErrorCode::CorruptBundle, "crc projector has the wrong shape");
    c.class_columns_.assign(static_cast<std::size_t>(c.class_count_), {});
    for (int j = 0; j < c.n_; ++j) {
        const int l = c.labels_[j];
        if (l < 1 || l > c.class_count_)
            fail(ErrorCode::CorruptBundle, "local classifier label out of range");
        c.class_columns_[l - 1].push_back(j);
    }
    return c;
}

MatchTable local_match_all(const std::vector<LocalClassifier>& classifiers,
                           const PatchHierarchy& h,
                           const std::vector<SampleSignature>& signatures,
                           int threads) {
    const std::size_t n_patches = h.patches().size();
    if (classifiers.size() != n_patches)
        fail(ErrorCode::MissingClassifier,
             "have " + std::to_string(classifiers.size()) + " classifiers for " +
                 std::to_string(n_patches) + " patches");

    MatchTable table;
    table.rows.assign(signatures.size(), std::vector<MatchingRecord>(n_patches));
    parallel_for(signatures.size(), threads, [&](std::size_t m) {
        const SampleSignature& sig = signatures[m];
        for (std::size_t p = 0; p < n_patches; ++p) {
            const PatchFeature& pf = sig.get(h.patches()[p]);
            table.rows[m][p] = pf.occluded ? abstain_record() : classifiers[p].predict(pf.values);
        }
    });
    return table;
}

} // namespace hml
