#include "hml/features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "hml/error.hpp"
#include "hml/rng.hpp"
#include "hml/simd/kernels.hpp"
#include "hml/util.hpp"

namespace hml {

const PatchFeature& SampleSignature::get(PatchId id) const {
    const auto it = patches_.find(id);
    if (it == patches_.end())
        fail(ErrorCode::UnknownPatch, "signature has no patch " + id.str());
    return it->second;
}

bool SampleSignature::same_patch_set(const SampleSignature& other) const {
    if (patches_.size() != other.patches_.size()) return false;
    auto a = patches_.begin();
    auto b = other.patches_.begin();
    for (; a != patches_.end(); ++a, ++b)
        if (a->first != b->first) return false;
    return true;
}

SampleSignature extract_gray_signature(const ImageMatrix& image, const PatchHierarchy& h) {
    if (image.height != h.image_height() || image.width != h.image_width())
        fail(ErrorCode::DimensionMismatch,
             "image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                 " but hierarchy expects " + std::to_string(h.image_height()) + "x" +
                 std::to_string(h.image_width()));
    SampleSignature sig;
    for (const auto& id : h.patches()) {
        const PatchRect& r = h.rect(id);
        FeatureVector v;
        v.reserve(static_cast<std::size_t>(r.height) * r.width);
        for (int row = r.top; row < r.bottom(); ++row)
            for (int col = r.left; col < r.right(); ++col)
                v.push_back(image.at(row, col) / 255.0);
        sig.set(id, std::move(v));
    }
    return sig;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

PcaModel PcaModel::identity(int dim) {
    PcaModel m;
    m.identity_ = true;
    m.input_dim_ = dim;
    m.output_dim_ = dim;
    return m;
}

PcaModel PcaModel::from_parts(int input_dim, int output_dim, bool identity,
                              std::vector<double> mean, std::vector<double> basis) {
    PcaModel m;
    m.identity_ = identity;
    m.input_dim_ = input_dim;
    m.output_dim_ = output_dim;
    m.mean_ = std::move(mean);
    m.basis_ = std::move(basis);
    return m;
}

PcaModel PcaModel::fit(const std::vector<FeatureVector>& vectors, int target_dim) {
    if (vectors.empty()) fail(ErrorCode::EmptyInput, "PCA needs at least one vector");
    const int d = static_cast<int>(vectors.front().size());
    for (const auto& v : vectors)
        if (static_cast<int>(v.size()) != d)
            fail(ErrorCode::DimensionMismatch, "PCA input vectors differ in dimension");
    if (target_dim < 1) fail(ErrorCode::EmptyInput, "PCA target dimension must be >= 1");

    if (d <= target_dim) return identity(d);

    const int m = static_cast<int>(vectors.size());
    if (m < 2) fail(ErrorCode::EmptyInput, "PCA needs at least two vectors to project");
    const int out_dim = std::min({target_dim, d, m - 1});

    Eigen::MatrixXd X(d, m);
    for (int j = 0; j < m; ++j)
        X.col(j) = Eigen::Map<const Eigen::VectorXd>(vectors[j].data(), d);
    const Eigen::VectorXd mean = X.rowwise().mean();
    X.colwise() -= mean;

    Eigen::MatrixXd basis(d, out_dim);
    if (m < d) {
        // Gram trick: eigenvectors of (1/(m-1)) X^T X lift back through X.
        const Eigen::MatrixXd gram = X.transpose() * X / double(m - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        // eigenvalues ascending; take the top out_dim
        for (int k = 0; k < out_dim; ++k) {
            const int src = m - 1 - k;
            Eigen::VectorXd u = X * eig.eigenvectors().col(src);
            const double norm = u.norm();
            basis.col(k) = norm > 0 ? Eigen::VectorXd(u / norm) : u;
        }
    } else {
        const Eigen::MatrixXd cov = X * X.transpose() / double(m - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        for (int k = 0; k < out_dim; ++k) basis.col(k) = eig.eigenvectors().col(d - 1 - k);
    }

    // sign convention: largest-magnitude entry of each column positive
    for (int k = 0; k < out_dim; ++k) {
        int arg = 0;
        basis.col(k).cwiseAbs().maxCoeff(&arg);
        if (basis(arg, k) < 0) basis.col(k) = -basis.col(k);
    }

    PcaModel model;
    model.identity_ = false;
    model.input_dim_ = d;
    model.output_dim_ = out_dim;
    model.mean_.assign(mean.data(), mean.data() + d);
    model.basis_.assign(basis.data(), basis.data() + static_cast<std::size_t>(d) * out_dim);
    return model;
}

FeatureVector PcaModel::apply(const FeatureVector& v) const {
    if (static_cast<int>(v.size()) != input_dim_)
        fail(ErrorCode::DimensionMismatch, "PCA input has dimension " +
                                               std::to_string(v.size()) + ", model expects " +
                                               std::to_string(input_dim_));
    if (identity_) return v;
    FeatureVector centered(v);
    for (int i = 0; i < input_dim_; ++i) centered[i] -= mean_[i];
    FeatureVector out(static_cast<std::size_t>(output_dim_));
    for (int k = 0; k < output_dim_; ++k)
        out[k] = simd::dot(basis_.data() + static_cast<std::size_t>(k) * input_dim_,
                           centered.data(), static_cast<std::size_t>(input_dim_));
    return out;
}

// ---------------------------------------------------------------------------
// synthetic occlusion
// ---------------------------------------------------------------------------

ImageMatrix synth_occlusion(const ImageMatrix& image, const ImageMatrix& occluder,
                            double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        fail(ErrorCode::FractionOutOfRange, "occlusion fraction must lie in (0, 1)");
    const double target_area = fraction * image.height * image.width;
    const int side = static_cast<int>(std::floor(std::sqrt(target_area)));
    if (side < 1) fail(ErrorCode::FractionOutOfRange, "occlusion area is below one pixel");
    if (side > image.height || side > image.width)
        fail(ErrorCode::FractionOutOfRange, "occluder does not fit inside the image");

    const ImageMatrix block = resize_nn(occluder, side, side);
    Rng rng(seed);
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(image.height - side) + 1));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(image.width - side) + 1));

    ImageMatrix out = image;
    paste(out, block, top, left);
    return out;
}

// ---------------------------------------------------------------------------
// signature files
// ---------------------------------------------------------------------------

std::vector<SignatureRecord> parse_signatures(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) return {};
    if (!starts_with(trim(line), "sample_id"))
        fail(ErrorCode::MalformedRecord, "signature file must start with a header row");

    std::vector<SignatureRecord> records;
    std::map<std::string, std::size_t> by_id;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() < 6)
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": expected at least 6 fields");
        const std::string sample_id = trim(fields[0]);
        bool ok_label = false, ok_level = false, ok_index = false, ok_occ = false;
        const int label = static_cast<int>(parse_long(fields[1], &ok_label));
        PatchId id;
        id.level = static_cast<int>(parse_long(fields[2], &ok_level));
        id.index = static_cast<int>(parse_long(fields[3], &ok_index));
        const long occ = parse_long(fields[4], &ok_occ);
        if (!ok_label || !ok_level || !ok_index || !ok_occ || (occ != 0 && occ != 1) ||
            id.level < 1 || id.index < 1 || label < 1)
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": bad record fields");

        FeatureVector values;
        values.reserve(fields.size() - 5);
        for (std::size_t i = 5; i < fields.size(); ++i) {
            bool ok = false;
            const double v = parse_double(fields[i], &ok);
            if (!ok) fail(ErrorCode::MalformedRecord,
                          "line " + std::to_string(line_no) + ": bad value '" + fields[i] + "'");
            if (!std::isfinite(v))
                fail(ErrorCode::NonFiniteValue,
                     "line " + std::to_string(line_no) + ": non-finite feature value");
            values.push_back(v);
        }

        auto it = by_id.find(sample_id);
        if (it == by_id.end()) {
            by_id.emplace(sample_id, records.size());
            records.push_back(SignatureRecord{sample_id, label, {}});
            it = by_id.find(sample_id);
        }
        SignatureRecord& rec = records[it->second];
        if (rec.label != label)
            fail(ErrorCode::MalformedRecord,
                 "sample " + sample_id + " appears with conflicting labels");
        if (rec.signature.has(id))
            fail(ErrorCode::MalformedRecord,
                 "sample " + sample_id + " repeats patch " + id.str());
        rec.signature.set(id, std::move(values), occ == 1);
    }

    for (const auto& rec : records) {
        if (!rec.signature.same_patch_set(records.front().signature))
            fail(ErrorCode::InconsistentPatchSet,
                 "sample " + rec.sample_id + " does not cover the same patches as sample " +
                     records.front().sample_id);
        for (const auto& [id, pf] : rec.signature.patches()) {
            const auto& ref = records.front().signature.get(id);
            if (pf.values.size() != ref.values.size())
                fail(ErrorCode::DimensionMismatch,
                     "sample " + rec.sample_id + " patch " + id.str() +
                         " has inconsistent feature dimension");
        }
    }
    return records;
}

std::vector<SignatureRecord> load_signatures(const std::string& path) {
    return parse_signatures(read_file(path));
}

void save_signatures(const std::vector<SignatureRecord>& records, const std::string& path) {
    std::ostringstream out;
    out << "sample_id,label,level,index,occluded,values\n";
    for (const auto& rec : records) {
        for (const auto& [id, pf] : rec.signature.patches()) {
            out << rec.sample_id << "," << rec.label << "," << id.level << "," << id.index
                << "," << (pf.occluded ? 1 : 0);
            for (const double v : pf.values) out << "," << format_double(v);
            out << "\n";
        }
    }
    write_file_atomic(path, out.str());
}

} // namespace hml
