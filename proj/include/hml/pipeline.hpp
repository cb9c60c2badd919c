#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hml/features.hpp"
#include "hml/global_matchers.hpp"
#include "hml/hierarchy.hpp"
#include "hml/image.hpp"
#include "hml/local_classifiers.hpp"

namespace hml {

// ---------------------------------------------------------------------------
// dataset manifest
// ---------------------------------------------------------------------------
// CSV `id,path_or_sample,label,split[,group]`, header required. split is one
// of gallery/train/probe. Closed-set identification: every train/probe label
// must also appear in the gallery.

struct ManifestEntry {
    std::string id;
    std::string source; // image path or signature sample id
    int label = 0;
    std::string split;
    std::string group;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    // Directory of the manifest file; relative image paths resolve against it.
    std::string base_dir;

    static DatasetManifest parse_csv(const std::string& text);
    static DatasetManifest load_csv(const std::string& path);
    std::vector<const ManifestEntry*> split_entries(const std::string& split) const;
    // Image-mode source path resolution (signature-mode sources are sample ids).
    std::string resolve_path(const ManifestEntry& entry) const;
};

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------
// Structured text, `key = value` lines, '#' comments. Flags override file
// values (the CLI calls apply_override).

enum class FinalRule { all_patches, per_level };
enum class InputMode { images, signatures };

struct MatcherConfig {
    InputMode input = InputMode::images;
    std::string signatures_path; // signatures mode

    HierarchySpec::Mode hierarchy_mode = HierarchySpec::Mode::grid;
    std::string hierarchy_levels = "1x1,1x2,2x2,4x4,8x8";
    std::string hierarchy_spec_path; // explicit mode
    int image_height = 0; // 0: take from the first gallery image
    int image_width = 0;

    LocalKind local_kind = LocalKind::crc;
    double crc_lambda = 0.001;

    GlobalKind global_kind = GlobalKind::vote;
    double w_lambda = 0.1;
    int n_trees = 150;
    int max_depth = 16;

    int pca_dim = 100; // 0 disables projection
    std::uint64_t seed = 0;
    FinalRule final_rule = FinalRule::all_patches;
    int augment_per_image = 0; // >0: synthesize a train split from the gallery
    int threads = 1;

    static MatcherConfig parse(const std::string& text);
    static MatcherConfig load(const std::string& path);
    void apply_override(const std::string& key, const std::string& value);
};

// ---------------------------------------------------------------------------
// matcher bundle
// ---------------------------------------------------------------------------

// Everything identify needs: the hierarchy, per-patch PCA models, per-patch
// local classifiers, per-patch global models, the final rule, and the label
// space. Immutable after training; serialization round-trips bit-exactly.
struct MatcherBundle {
    PatchHierarchy hierarchy;
    std::vector<PcaModel> pca;                 // by patch ordinal
    std::vector<LocalClassifier> locals;       // by patch ordinal
    std::vector<GlobalModel> globals;          // by patch ordinal
    FinalRule final_rule = FinalRule::all_patches;
    InputMode input = InputMode::images;

    int class_count = 0;                       // C
    std::vector<int> original_labels;          // dense label -> manifest label
    std::uint64_t seed = 0;
    LocalKind local_kind = LocalKind::crc;
    GlobalKind global_kind = GlobalKind::vote;
    double crc_lambda = 0.001;
    double w_lambda = 0.1;
    int n_trees = 150;
    int max_depth = 16;
    int pca_dim = 100;

    int dense_label(int original) const;       // UnknownLabel when absent
    int original_label(int dense) const;       // 0 stays 0 (abstain)
};

void save_bundle(const MatcherBundle& bundle, const std::string& path);
MatcherBundle load_bundle(const std::string& path);

// ---------------------------------------------------------------------------
// training / deployment
// ---------------------------------------------------------------------------

struct TrainResult {
    MatcherBundle bundle;
    // Train-split matchings observed while fitting the global models; used by
    // symmetry checks and reported per-patch training accuracies.
    MatchTable train_locals;
    std::vector<std::vector<MatchingRecord>> train_globals; // M x patches
    std::vector<double> patch_local_train_accuracy;
    std::vector<double> patch_global_train_accuracy;
};

TrainResult train_matcher(const DatasetManifest& manifest, const MatcherConfig& config);

struct ProbeResult {
    MatchingRecord final;                 // dense label space
    std::vector<MatchingRecord> locals;   // by patch ordinal
    std::vector<MatchingRecord> globals;  // by patch ordinal
};

std::vector<ProbeResult> identify_detailed(const MatcherBundle& bundle,
                                           const std::vector<SampleSignature>& probes,
                                           int threads = 1);
std::vector<MatchingRecord> identify(const MatcherBundle& bundle,
                                     const std::vector<SampleSignature>& probes,
                                     int threads = 1);
std::vector<SampleSignature> signatures_from_images(const MatcherBundle& bundle,
                                                    const std::vector<ImageMatrix>& images);

// ---------------------------------------------------------------------------
// gallery augmentation
// ---------------------------------------------------------------------------

struct AugmentParams {
    double max_rotation_deg = 10.0;
    double min_mask_fraction = 0.10;
    double max_mask_fraction = 0.25;
    double max_crop_jitter = 0.10;
};

// per_image variants per input: random rotation, block mask, crop jitter and
// resize back, all seed-deterministic. Zeroed parameters give identity copies.
std::vector<ImageMatrix> augment_gallery(const std::vector<ImageMatrix>& images, int per_image,
                                         std::uint64_t seed, const AugmentParams& params = {});

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct EvaluationReport {
    int total = 0;
    int correct = 0;
    double overall_accuracy = 0.0;
    double rank1_accuracy = 0.0; // equals overall for the single-label rule
    std::vector<double> per_patch_local_accuracy;  // by patch ordinal
    std::vector<double> per_patch_global_accuracy; // by patch ordinal
    std::vector<std::vector<int>> confusion;       // C x C, truth x predicted (dense)
    std::map<std::string, std::pair<int, int>> groups; // group -> (correct, total)
};

EvaluationReport evaluate(const MatcherBundle& bundle,
                          const std::vector<SampleSignature>& probes,
                          const std::vector<int>& truth_labels, // original label space
                          const std::vector<std::string>& groups = {},
                          int threads = 1);

std::string render_report_text(const MatcherBundle& bundle, const EvaluationReport& report);
std::string render_report_csv(const MatcherBundle& bundle, const EvaluationReport& report);
std::string render_confusion_csv(const MatcherBundle& bundle, const EvaluationReport& report);
// Per-level accuracy grids (rows x cols per grid level), one CSV per matcher
// stage; explicit hierarchies fall back to a flat patch list.
std::string render_patch_accuracy_csv(const MatcherBundle& bundle,
                                      const std::vector<double>& per_patch_accuracy);

// ---------------------------------------------------------------------------
// synthetic occlusion benchmark
// ---------------------------------------------------------------------------

struct BenchMethodResult {
    std::string name;
    double final_accuracy = 0.0;
    double mean_patch_local_accuracy = 0.0;
    double mean_patch_global_accuracy = 0.0;
};

struct BenchResult {
    double flat_vote_accuracy = 0.0; // majority over per-patch local matchings
    std::vector<BenchMethodResult> methods; // V-HML, W-HML, R-HML
    std::vector<std::string> written_files;
};

// Seeded end-to-end benchmark: 10 identities, five structured 32x32 base
// textures each, Gaussian pixel noise (sigma 8), 25% block occlusion on the
// train and probe splits. Writes a plain-text report plus per-method CSVs
// into out_dir. Byte-identical output for a fixed seed.
BenchResult run_bench(const std::string& out_dir, std::uint64_t seed = 42, int threads = 1);

} // namespace hml
