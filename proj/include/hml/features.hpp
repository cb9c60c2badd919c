#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/image.hpp"

namespace hml {

using FeatureVector = std::vector<double>;

struct PatchFeature {
    FeatureVector values;
    bool occluded = false;
    bool operator==(const PatchFeature&) const = default;
};

// One sample's per-patch features; covers exactly the patches of one
// hierarchy. Iteration order is (level, index).
class SampleSignature {
public:
    void set(PatchId id, FeatureVector values, bool occluded = false) {
        patches_[id] = PatchFeature{std::move(values), occluded};
    }
    bool has(PatchId id) const { return patches_.count(id) != 0; }
    const PatchFeature& get(PatchId id) const;
    std::size_t patch_count() const { return patches_.size(); }
    const std::map<PatchId, PatchFeature>& patches() const { return patches_; }
    bool same_patch_set(const SampleSignature& other) const;
    bool operator==(const SampleSignature&) const = default;

private:
    std::map<PatchId, PatchFeature> patches_;
};

// Per-patch raw gray features, row-major pixels scaled to [0, 1]; occlusion
// flags all false.
SampleSignature extract_gray_signature(const ImageMatrix& image, const PatchHierarchy& h);

// PCA with mean centering. Effective output dimension is
// min(target_dim, input_dim, samples - 1); when input_dim <= target_dim the
// model is the identity (no projection). Basis columns carry a fixed sign
// convention: the entry of largest magnitude in each column is positive.
class PcaModel {
public:
    static PcaModel fit(const std::vector<FeatureVector>& vectors, int target_dim);
    static PcaModel identity(int dim);

    FeatureVector apply(const FeatureVector& v) const;

    bool is_identity() const { return identity_; }
    int input_dim() const { return input_dim_; }
    int output_dim() const { return output_dim_; }
    const std::vector<double>& mean() const { return mean_; }
    // column-major input_dim x output_dim
    const std::vector<double>& basis() const { return basis_; }

    static PcaModel from_parts(int input_dim, int output_dim, bool identity,
                               std::vector<double> mean, std::vector<double> basis);

private:
    bool identity_ = true;
    int input_dim_ = 0;
    int output_dim_ = 0;
    std::vector<double> mean_;
    std::vector<double> basis_;
};

inline PcaModel fit_pca(const std::vector<FeatureVector>& vectors, int target_dim) {
    return PcaModel::fit(vectors, target_dim);
}
inline FeatureVector apply_pca(const PcaModel& model, const FeatureVector& v) {
    return model.apply(v);
}

// Pastes a nearest-neighbor-resized square occluder covering ~fraction of the
// pixels at a seed-determined uniform position fully inside the image.
ImageMatrix synth_occlusion(const ImageMatrix& image, const ImageMatrix& occluder,
                            double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// signature files
// ---------------------------------------------------------------------------
// CSV, one record per (sample, patch):
//   sample_id,label,level,index,occluded,v1,...,vB
// Header row required. All samples must cover the same patch set.

struct SignatureRecord {
    std::string sample_id;
    int label = 0;
    SampleSignature signature;
};

std::vector<SignatureRecord> load_signatures(const std::string& path);
std::vector<SignatureRecord> parse_signatures(const std::string& text);
void save_signatures(const std::vector<SignatureRecord>& records, const std::string& path);

} // namespace hml
