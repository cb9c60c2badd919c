#include "hml/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "hml/error.hpp"
#include "hml/rng.hpp"
#include "hml/util.hpp"

namespace hml {

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

DatasetManifest DatasetManifest::parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || !starts_with(trim(line), "id"))
        fail(ErrorCode::MalformedRecord, "manifest must start with a header row");

    DatasetManifest m;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 4 && fields.size() != 5)
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": expected 4 or 5 fields");
        ManifestEntry e;
        e.id = trim(fields[0]);
        e.source = trim(fields[1]);
        bool ok = false;
        e.label = static_cast<int>(parse_long(fields[2], &ok));
        if (!ok || e.label < 1)
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": label must be a positive integer");
        e.split = trim(fields[3]);
        if (e.split != "gallery" && e.split != "train" && e.split != "probe")
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": split must be gallery, train or probe");
        if (fields.size() == 5) e.group = trim(fields[4]);
        m.entries.push_back(std::move(e));
    }
    return m;
}

DatasetManifest DatasetManifest::load_csv(const std::string& path) {
    DatasetManifest m = parse_csv(read_file(path));
    m.base_dir = std::filesystem::path(path).parent_path().string();
    return m;
}

std::vector<const ManifestEntry*> DatasetManifest::split_entries(const std::string& split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.split == split) out.push_back(&e);
    return out;
}

std::string DatasetManifest::resolve_path(const ManifestEntry& entry) const {
    const std::filesystem::path p(entry.source);
    if (base_dir.empty() || p.is_absolute()) return entry.source;
    return (std::filesystem::path(base_dir) / p).string();
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

namespace {

std::pair<int, int> parse_size(const std::string& value) {
    const auto parts = split(value, 'x');
    bool ok1 = false, ok2 = false;
    int h = 0, w = 0;
    if (parts.size() == 2) {
        h = static_cast<int>(parse_long(parts[0], &ok1));
        w = static_cast<int>(parse_long(parts[1], &ok2));
    }
    if (!ok1 || !ok2 || h < 1 || w < 1)
        fail(ErrorCode::ConfigConflict, "expected HxW, got '" + value + "'");
    return {h, w};
}

} // namespace

void MatcherConfig::apply_override(const std::string& key, const std::string& value) {
    bool ok = true;
    if (key == "input") {
        if (value == "images") input = InputMode::images;
        else if (value == "signatures") input = InputMode::signatures;
        else fail(ErrorCode::ConfigConflict, "input must be images or signatures");
    } else if (key == "signatures") {
        signatures_path = value;
    } else if (key == "hierarchy.mode") {
        if (value == "grid") hierarchy_mode = HierarchySpec::Mode::grid;
        else if (value == "explicit") hierarchy_mode = HierarchySpec::Mode::explicit_list;
        else fail(ErrorCode::ConfigConflict, "hierarchy.mode must be grid or explicit");
    } else if (key == "hierarchy.levels") {
        HierarchySpec::parse_grid_levels(value); // validate now
        hierarchy_levels = value;
    } else if (key == "hierarchy.spec") {
        hierarchy_spec_path = value;
    } else if (key == "image.size") {
        const auto [h, w] = parse_size(value);
        image_height = h;
        image_width = w;
    } else if (key == "local.kind") {
        local_kind = parse_local_kind(value);
    } else if (key == "local.crc_lambda") {
        crc_lambda = parse_double(value, &ok);
    } else if (key == "global.kind") {
        global_kind = parse_global_kind(value);
    } else if (key == "global.w_lambda") {
        w_lambda = parse_double(value, &ok);
    } else if (key == "global.n_trees") {
        n_trees = static_cast<int>(parse_long(value, &ok));
    } else if (key == "global.max_depth") {
        max_depth = static_cast<int>(parse_long(value, &ok));
    } else if (key == "pca.dim") {
        pca_dim = static_cast<int>(parse_long(value, &ok));
    } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(parse_long(value, &ok));
    } else if (key == "final_rule") {
        if (value == "all_patches") final_rule = FinalRule::all_patches;
        else if (value == "per_level") final_rule = FinalRule::per_level;
        else fail(ErrorCode::ConfigConflict, "final_rule must be all_patches or per_level");
    } else if (key == "augment.per_image") {
        augment_per_image = static_cast<int>(parse_long(value, &ok));
    } else if (key == "threads") {
        threads = static_cast<int>(parse_long(value, &ok));
    } else {
        fail(ErrorCode::ConfigConflict, "unknown config key '" + key + "'");
    }
    if (!ok) fail(ErrorCode::ConfigConflict, "bad value '" + value + "' for key " + key);
}

MatcherConfig MatcherConfig::parse(const std::string& text) {
    MatcherConfig cfg;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::ConfigConflict,
                 "config line " + std::to_string(line_no) + ": expected key = value");
        cfg.apply_override(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

MatcherConfig MatcherConfig::load(const std::string& path) { return parse(read_file(path)); }

// ---------------------------------------------------------------------------
// label space
// ---------------------------------------------------------------------------

int MatcherBundle::dense_label(int original) const {
    const auto it = std::lower_bound(original_labels.begin(), original_labels.end(), original);
    if (it == original_labels.end() || *it != original)
        fail(ErrorCode::UnknownLabel,
             "label " + std::to_string(original) +
                 " is not in the trained gallery; re-train the matcher");
    return static_cast<int>(it - original_labels.begin()) + 1;
}

int MatcherBundle::original_label(int dense) const {
    if (dense == 0) return 0;
    if (dense < 1 || dense > class_count)
        fail(ErrorCode::UnknownLabel, "dense label out of range");
    return original_labels[dense - 1];
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

namespace {

struct LoadedSplit {
    std::vector<SampleSignature> signatures;
    std::vector<int> labels; // original label space
};

SampleSignature transformed(const std::vector<PcaModel>& pca, const PatchHierarchy& h,
                            const SampleSignature& sig) {
    SampleSignature out;
    for (std::size_t p = 0; p < h.patches().size(); ++p) {
        const PatchId id = h.patches()[p];
        const PatchFeature& pf = sig.get(id);
        if (pf.occluded) {
            out.set(id, {}, true);
        } else {
            out.set(id, pca[p].apply(pf.values), false);
        }
    }
    return out;
}

void check_patch_set(const PatchHierarchy& h, const SampleSignature& sig,
                     const std::string& what) {
    if (sig.patch_count() != h.patches().size())
        fail(ErrorCode::HierarchyMismatch,
             what + " covers " + std::to_string(sig.patch_count()) + " patches, hierarchy has " +
                 std::to_string(h.patches().size()));
    for (const auto& id : h.patches())
        if (!sig.has(id))
            fail(ErrorCode::HierarchyMismatch, what + " is missing patch " + id.str());
}

MatchingRecord final_vote(const MatcherBundle& bundle,
                          const std::vector<MatchingRecord>& globals) {
    const auto& h = bundle.hierarchy;
    if (bundle.final_rule == FinalRule::all_patches) {
        std::vector<int> labels;
        std::vector<double> scores;
        labels.reserve(globals.size());
        scores.reserve(globals.size());
        for (const auto& g : globals) {
            labels.push_back(g.label);
            scores.push_back(g.score);
        }
        return vote_global(labels, scores);
    }
    // per-level: vote within each level first, then across level winners
    std::vector<int> level_labels;
    std::vector<double> level_scores;
    for (int level = 1; level <= h.depth(); ++level) {
        std::vector<int> labels;
        std::vector<double> scores;
        for (std::size_t p = 0; p < h.patches().size(); ++p) {
            if (h.patches()[p].level != level) continue;
            labels.push_back(globals[p].label);
            scores.push_back(globals[p].score);
        }
        const bool all_abstain =
            std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; });
        if (labels.empty() || all_abstain) continue;
        const MatchingRecord rec = vote_global(labels, scores);
        level_labels.push_back(rec.label);
        level_scores.push_back(rec.score);
    }
    if (level_labels.empty()) fail(ErrorCode::AllAbstain, "every level abstained");
    return vote_global(level_labels, level_scores);
}

// Per-patch row of related local matchings for one sample, in the column
// order of the patch's match matrix.
void related_row(const std::vector<std::vector<int>>& related_ordinals,
                 const std::vector<MatchingRecord>& locals, std::size_t patch_ordinal,
                 std::vector<int>& labels, std::vector<double>& scores) {
    const auto& ordinals = related_ordinals[patch_ordinal];
    labels.resize(ordinals.size());
    scores.resize(ordinals.size());
    for (std::size_t s = 0; s < ordinals.size(); ++s) {
        labels[s] = locals[ordinals[s]].label;
        scores[s] = locals[ordinals[s]].score;
    }
}

std::vector<std::vector<int>> build_related_ordinals(const PatchHierarchy& h) {
    std::vector<std::vector<int>> out(h.patches().size());
    for (std::size_t p = 0; p < h.patches().size(); ++p) {
        for (const auto& id : h.related_patches(h.patches()[p]))
            out[p].push_back(h.ordinal(id));
    }
    return out;
}

TrainResult train_with_data(const PatchHierarchy& h, const MatcherConfig& config,
                            LoadedSplit gallery, LoadedSplit train) {
    if (gallery.signatures.empty()) fail(ErrorCode::EmptySplit, "gallery split is empty");
    if (train.signatures.empty()) fail(ErrorCode::EmptySplit, "train split is empty");

    // dense label space from the gallery (closed set)
    std::set<int> label_set(gallery.labels.begin(), gallery.labels.end());
    MatcherBundle bundle;
    bundle.hierarchy = h;
    bundle.original_labels.assign(label_set.begin(), label_set.end());
    bundle.class_count = static_cast<int>(bundle.original_labels.size());
    bundle.final_rule = config.final_rule;
    bundle.input = config.input;
    bundle.seed = config.seed;
    bundle.local_kind = config.local_kind;
    bundle.global_kind = config.global_kind;
    bundle.crc_lambda = config.crc_lambda;
    bundle.w_lambda = config.w_lambda;
    bundle.n_trees = config.n_trees;
    bundle.max_depth = config.max_depth;
    bundle.pca_dim = config.pca_dim;

    std::vector<int> gallery_dense(gallery.labels.size());
    for (std::size_t i = 0; i < gallery.labels.size(); ++i)
        gallery_dense[i] = bundle.dense_label(gallery.labels[i]);
    std::vector<int> train_dense(train.labels.size());
    for (std::size_t i = 0; i < train.labels.size(); ++i)
        train_dense[i] = bundle.dense_label(train.labels[i]);

    const std::size_t n_patches = h.patches().size();
    for (const auto& sig : gallery.signatures) check_patch_set(h, sig, "gallery sample");
    for (const auto& sig : train.signatures) check_patch_set(h, sig, "train sample");

    // --- per-patch PCA and local classifiers (Algorithm 1, local stage) -----
    bundle.pca.resize(n_patches);
    std::vector<LocalClassifier> locals(n_patches);
    parallel_for(n_patches, config.threads, [&](std::size_t p) {
        const PatchId id = h.patches()[p];
        std::vector<FeatureVector> feats;
        std::vector<int> labels;
        for (std::size_t m = 0; m < gallery.signatures.size(); ++m) {
            const PatchFeature& pf = gallery.signatures[m].get(id);
            if (pf.occluded) continue;
            feats.push_back(pf.values);
            labels.push_back(gallery_dense[m]);
        }
        if (feats.empty())
            fail(ErrorCode::EmptyGallery,
                 "patch " + id.str() + " has no unoccluded gallery samples");
        bundle.pca[p] = config.pca_dim > 0
                            ? fit_pca(feats, config.pca_dim)
                            : PcaModel::identity(static_cast<int>(feats.front().size()));
        for (auto& f : feats) f = bundle.pca[p].apply(f);
        locals[p] = LocalClassifier::train(config.local_kind, feats, labels,
                                           LocalParams{config.crc_lambda});
    });
    bundle.locals = std::move(locals);

    // --- local matchings of the train split ---------------------------------
    std::vector<SampleSignature> train_prepared(train.signatures.size());
    parallel_for(train.signatures.size(), config.threads, [&](std::size_t m) {
        train_prepared[m] = transformed(bundle.pca, h, train.signatures[m]);
    });
    const MatchTable p_table =
        local_match_all(bundle.locals, h, train_prepared, config.threads);

    // --- per-patch global models (Algorithm 1, global stage) ----------------
    std::vector<GlobalModel> globals;
    globals.reserve(n_patches);
    for (std::size_t p = 0; p < n_patches; ++p)
        globals.push_back(GlobalModel::make_vote(h.patches()[p], 0));
    parallel_for(n_patches, config.threads, [&](std::size_t p) {
        const PatchId id = h.patches()[p];
        const MatchMatrix H = build_match_matrix(p_table, h, id);
        switch (config.global_kind) {
            case GlobalKind::vote:
                globals[p] = GlobalModel::make_vote(id, H.relations());
                break;
            case GlobalKind::weights: {
                const DecisionMatrix Z = build_decision_matrix(H, train_dense);
                const WeightSolveResult res = solve_weights(Z, config.w_lambda);
                globals[p] = GlobalModel::make_weighted(id, res.weights, res.degenerate);
                break;
            }
            case GlobalKind::forest: {
                const ForestParams params{config.n_trees, config.max_depth,
                                          mix_seed(config.seed, 0xF0000 + p)};
                globals[p] = GlobalModel::make_forest(
                    id, DecisionForest::train(H, train_dense, params));
                break;
            }
        }
    });
    bundle.globals = std::move(globals);

    // --- train-split global matchings (trace + per-patch accuracies) --------
    TrainResult result;
    const auto related = build_related_ordinals(h);
    result.train_globals.assign(train_prepared.size(),
                                std::vector<MatchingRecord>(n_patches));
    parallel_for(train_prepared.size(), config.threads, [&](std::size_t m) {
        std::vector<int> labels;
        std::vector<double> scores;
        for (std::size_t p = 0; p < n_patches; ++p) {
            related_row(related, p_table.rows[m], p, labels, scores);
            result.train_globals[m][p] = bundle.globals[p].predict(labels, scores);
        }
    });

    result.patch_local_train_accuracy.assign(n_patches, 0.0);
    result.patch_global_train_accuracy.assign(n_patches, 0.0);
    for (std::size_t p = 0; p < n_patches; ++p) {
        int local_ok = 0, global_ok = 0;
        for (std::size_t m = 0; m < train_prepared.size(); ++m) {
            local_ok += p_table.rows[m][p].label == train_dense[m] ? 1 : 0;
            global_ok += result.train_globals[m][p].label == train_dense[m] ? 1 : 0;
        }
        const double M = static_cast<double>(train_prepared.size());
        result.patch_local_train_accuracy[p] = local_ok / M;
        result.patch_global_train_accuracy[p] = global_ok / M;
    }

    result.train_locals = p_table;
    result.bundle = std::move(bundle);
    return result;
}

} // namespace

// ---------------------------------------------------------------------------
// training entry point
// ---------------------------------------------------------------------------

TrainResult train_matcher(const DatasetManifest& manifest, const MatcherConfig& config) {
    const auto gallery_entries = manifest.split_entries("gallery");
    const auto train_entries = manifest.split_entries("train");
    if (gallery_entries.empty()) fail(ErrorCode::EmptySplit, "manifest has no gallery split");

    if (config.input == InputMode::signatures &&
        config.hierarchy_mode == HierarchySpec::Mode::grid)
        fail(ErrorCode::ConfigConflict,
             "signature input requires an explicit hierarchy (hierarchy.mode = explicit)");
    if (config.input == InputMode::signatures && config.signatures_path.empty())
        fail(ErrorCode::ConfigConflict, "signature input needs the signatures path");
    if (config.augment_per_image > 0 && config.input != InputMode::images)
        fail(ErrorCode::ConfigConflict, "gallery augmentation needs image input");

    LoadedSplit gallery, train;
    int image_h = config.image_height;
    int image_w = config.image_width;

    if (config.input == InputMode::images) {
        std::vector<ImageMatrix> gallery_images;
        gallery_images.reserve(gallery_entries.size());
        for (const auto* e : gallery_entries) {
            gallery_images.push_back(load_pgm(manifest.resolve_path(*e)));
            gallery.labels.push_back(e->label);
        }
        if (image_h == 0) {
            image_h = gallery_images.front().height;
            image_w = gallery_images.front().width;
        }

        std::vector<ImageMatrix> train_images;
        for (const auto* e : train_entries) {
            train_images.push_back(load_pgm(manifest.resolve_path(*e)));
            train.labels.push_back(e->label);
        }

        if (train_images.empty() && config.augment_per_image > 0) {
            // synthesize the split used for global-model fitting: alternate
            // variants extend the gallery / become train samples
            const auto variants = augment_gallery(gallery_images, config.augment_per_image,
                                                  mix_seed(config.seed, 0xA06));
            for (std::size_t i = 0; i < variants.size(); ++i) {
                const int label =
                    gallery.labels[i / static_cast<std::size_t>(config.augment_per_image)];
                if (i % 2 == 0) {
                    gallery_images.push_back(variants[i]);
                    gallery.labels.push_back(label);
                } else {
                    train_images.push_back(variants[i]);
                    train.labels.push_back(label);
                }
            }
        }
        if (train_images.empty())
            fail(ErrorCode::EmptySplit,
                 "manifest has no train split (and augment.per_image is 0); global models "
                 "need samples disjoint from the gallery");

        HierarchySpec spec = config.hierarchy_mode == HierarchySpec::Mode::grid
                                 ? HierarchySpec::grid(
                                       HierarchySpec::parse_grid_levels(config.hierarchy_levels))
                                 : load_hierarchy_spec(config.hierarchy_spec_path);
        const PatchHierarchy h = build_hierarchy(spec, image_h, image_w);

        for (const auto& img : gallery_images) {
            if (img.height != image_h || img.width != image_w)
                fail(ErrorCode::DimensionMismatch, "gallery images differ in size");
            gallery.signatures.push_back(extract_gray_signature(img, h));
        }
        for (const auto& img : train_images) {
            if (img.height != image_h || img.width != image_w)
                fail(ErrorCode::DimensionMismatch, "train images differ in size");
            train.signatures.push_back(extract_gray_signature(img, h));
        }
        return train_with_data(h, config, std::move(gallery), std::move(train));
    }

    // signatures mode
    if (train_entries.empty())
        fail(ErrorCode::EmptySplit, "manifest has no train split; global models need samples "
                                    "disjoint from the gallery");
    if (image_h == 0)
        fail(ErrorCode::ConfigConflict, "signature input needs image.size for the hierarchy");

    const auto records = load_signatures(config.signatures_path);
    std::map<std::string, const SignatureRecord*> by_id;
    for (const auto& r : records) by_id[r.sample_id] = &r;

    const HierarchySpec spec = load_hierarchy_spec(config.hierarchy_spec_path);
    const PatchHierarchy h = build_hierarchy(spec, image_h, image_w);

    const auto fetch = [&](const std::vector<const ManifestEntry*>& entries, LoadedSplit& out) {
        for (const auto* e : entries) {
            const auto it = by_id.find(e->source);
            if (it == by_id.end())
                fail(ErrorCode::MalformedRecord,
                     "manifest sample '" + e->source + "' is not in the signature file");
            if (it->second->label != e->label)
                fail(ErrorCode::MalformedRecord,
                     "manifest and signature file disagree on the label of '" + e->source + "'");
            check_patch_set(h, it->second->signature, "sample " + e->source);
            out.signatures.push_back(it->second->signature);
            out.labels.push_back(e->label);
        }
    };
    fetch(gallery_entries, gallery);
    fetch(train_entries, train);

    return train_with_data(h, config, std::move(gallery), std::move(train));
}

// ---------------------------------------------------------------------------
// deployment (Algorithm 2)
// ---------------------------------------------------------------------------

std::vector<ProbeResult> identify_detailed(const MatcherBundle& bundle,
                                           const std::vector<SampleSignature>& probes,
                                           int threads) {
    const auto& h = bundle.hierarchy;
    const std::size_t n_patches = h.patches().size();
    const auto related = build_related_ordinals(h);

    std::vector<ProbeResult> results(probes.size());
    parallel_for(probes.size(), threads, [&](std::size_t k) {
        check_patch_set(h, probes[k], "probe " + std::to_string(k));
        const SampleSignature prepared = transformed(bundle.pca, h, probes[k]);

        ProbeResult& res = results[k];
        res.locals.resize(n_patches);
        for (std::size_t p = 0; p < n_patches; ++p) {
            const PatchFeature& pf = prepared.get(h.patches()[p]);
            res.locals[p] = pf.occluded ? abstain_record() : bundle.locals[p].predict(pf.values);
        }

        res.globals.resize(n_patches);
        std::vector<int> labels;
        std::vector<double> scores;
        for (std::size_t p = 0; p < n_patches; ++p) {
            related_row(related, res.locals, p, labels, scores);
            res.globals[p] = bundle.globals[p].predict(labels, scores);
        }
        res.final = final_vote(bundle, res.globals);
    });
    return results;
}

std::vector<MatchingRecord> identify(const MatcherBundle& bundle,
                                     const std::vector<SampleSignature>& probes, int threads) {
    std::vector<MatchingRecord> out;
    out.reserve(probes.size());
    for (auto& r : identify_detailed(bundle, probes, threads)) out.push_back(r.final);
    return out;
}

std::vector<SampleSignature> signatures_from_images(const MatcherBundle& bundle,
                                                    const std::vector<ImageMatrix>& images) {
    std::vector<SampleSignature> out;
    out.reserve(images.size());
    for (const auto& img : images)
        out.push_back(extract_gray_signature(img, bundle.hierarchy));
    return out;
}

// ---------------------------------------------------------------------------
// gallery augmentation
// ---------------------------------------------------------------------------

std::vector<ImageMatrix> augment_gallery(const std::vector<ImageMatrix>& images, int per_image,
                                         std::uint64_t seed, const AugmentParams& params) {
    if (per_image < 1) fail(ErrorCode::ConfigConflict, "per_image must be >= 1");

    std::vector<ImageMatrix> out;
    out.reserve(images.size() * static_cast<std::size_t>(per_image));
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (int v = 0; v < per_image; ++v) {
            Rng rng(mix_seed(seed, (static_cast<std::uint64_t>(i) << 20) |
                                       static_cast<std::uint64_t>(v)));
            ImageMatrix img = images[i];

            if (params.max_rotation_deg > 0.0) {
                const double angle =
                    rng.uniform(-params.max_rotation_deg, params.max_rotation_deg);
                img = rotate_nn(img, angle);
            }

            if (params.max_mask_fraction > 0.0) {
                const double frac =
                    rng.uniform(params.min_mask_fraction, params.max_mask_fraction);
                const int side = static_cast<int>(
                    std::floor(std::sqrt(frac * img.height * img.width)));
                if (side >= 1 && side <= img.height && side <= img.width) {
                    const int top = static_cast<int>(
                        rng.below(static_cast<std::uint64_t>(img.height - side) + 1));
                    const int left = static_cast<int>(
                        rng.below(static_cast<std::uint64_t>(img.width - side) + 1));
                    paste(img, ImageMatrix(side, side, 0), top, left);
                }
            }

            if (params.max_crop_jitter > 0.0) {
                const int max_dy = static_cast<int>(params.max_crop_jitter * img.height);
                const int max_dx = static_cast<int>(params.max_crop_jitter * img.width);
                const int dy = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dy) + 1));
                const int dx = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dx) + 1));
                if (dy > 0 || dx > 0) {
                    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(dy) + 1));
                    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(dx) + 1));
                    const ImageMatrix window =
                        crop(img, PatchRect{top, left, img.height - dy, img.width - dx});
                    img = resize_nn(window, images[i].height, images[i].width);
                }
            }
            out.push_back(std::move(img));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

EvaluationReport evaluate(const MatcherBundle& bundle,
                          const std::vector<SampleSignature>& probes,
                          const std::vector<int>& truth_labels,
                          const std::vector<std::string>& groups, int threads) {
    if (probes.empty()) fail(ErrorCode::EmptyProbeSet, "no probes to evaluate");
    if (probes.size() != truth_labels.size())
        fail(ErrorCode::DimensionMismatch, "probe and truth counts differ");
    if (!groups.empty() && groups.size() != probes.size())
        fail(ErrorCode::DimensionMismatch, "probe and group counts differ");

    std::vector<int> truth_dense(truth_labels.size());
    for (std::size_t i = 0; i < truth_labels.size(); ++i)
        truth_dense[i] = bundle.dense_label(truth_labels[i]);

    const auto results = identify_detailed(bundle, probes, threads);
    const std::size_t n_patches = bundle.hierarchy.patches().size();

    EvaluationReport rep;
    rep.total = static_cast<int>(probes.size());
    rep.confusion.assign(static_cast<std::size_t>(bundle.class_count),
                         std::vector<int>(static_cast<std::size_t>(bundle.class_count), 0));
    rep.per_patch_local_accuracy.assign(n_patches, 0.0);
    rep.per_patch_global_accuracy.assign(n_patches, 0.0);

    for (std::size_t k = 0; k < results.size(); ++k) {
        const bool ok = results[k].final.label == truth_dense[k];
        rep.correct += ok ? 1 : 0;
        if (results[k].final.label >= 1)
            rep.confusion[truth_dense[k] - 1][results[k].final.label - 1]++;
        if (!groups.empty()) {
            auto& g = rep.groups[groups[k]];
            g.first += ok ? 1 : 0;
            g.second += 1;
        }
        for (std::size_t p = 0; p < n_patches; ++p) {
            rep.per_patch_local_accuracy[p] +=
                results[k].locals[p].label == truth_dense[k] ? 1.0 : 0.0;
            rep.per_patch_global_accuracy[p] +=
                results[k].globals[p].label == truth_dense[k] ? 1.0 : 0.0;
        }
    }
    for (std::size_t p = 0; p < n_patches; ++p) {
        rep.per_patch_local_accuracy[p] /= static_cast<double>(rep.total);
        rep.per_patch_global_accuracy[p] /= static_cast<double>(rep.total);
    }
    rep.overall_accuracy = static_cast<double>(rep.correct) / rep.total;
    rep.rank1_accuracy = rep.overall_accuracy;
    return rep;
}

std::string render_report_text(const MatcherBundle& bundle, const EvaluationReport& rep) {
    std::ostringstream out;
    out << "probes: " << rep.total << ", correct: " << rep.correct << "\n";
    out << "rank-1 accuracy: " << format_fixed(rep.rank1_accuracy, 6) << "\n";
    double local_mean = 0.0, global_mean = 0.0;
    for (const double a : rep.per_patch_local_accuracy) local_mean += a;
    for (const double a : rep.per_patch_global_accuracy) global_mean += a;
    const double n = static_cast<double>(rep.per_patch_local_accuracy.size());
    out << "mean per-patch local accuracy:  " << format_fixed(local_mean / n, 6) << "\n";
    out << "mean per-patch global accuracy: " << format_fixed(global_mean / n, 6) << "\n";
    if (!rep.groups.empty()) {
        out << "per-group accuracy:\n";
        for (const auto& [name, counts] : rep.groups)
            out << "  " << name << ": "
                << format_fixed(static_cast<double>(counts.first) / counts.second, 6) << " ("
                << counts.first << "/" << counts.second << ")\n";
    }
    (void)bundle;
    return out.str();
}

std::string render_report_csv(const MatcherBundle& bundle, const EvaluationReport& rep) {
    std::ostringstream out;
    out << "metric,value\n";
    out << "probes," << rep.total << "\n";
    out << "correct," << rep.correct << "\n";
    out << "rank1_accuracy," << format_fixed(rep.rank1_accuracy, 6) << "\n";
    double local_mean = 0.0, global_mean = 0.0;
    for (const double a : rep.per_patch_local_accuracy) local_mean += a;
    for (const double a : rep.per_patch_global_accuracy) global_mean += a;
    const double n = static_cast<double>(rep.per_patch_local_accuracy.size());
    out << "mean_patch_local_accuracy," << format_fixed(local_mean / n, 6) << "\n";
    out << "mean_patch_global_accuracy," << format_fixed(global_mean / n, 6) << "\n";
    for (const auto& [name, counts] : rep.groups)
        out << "group_" << name << ","
            << format_fixed(static_cast<double>(counts.first) / counts.second, 6) << "\n";
    (void)bundle;
    return out.str();
}

std::string render_confusion_csv(const MatcherBundle& bundle, const EvaluationReport& rep) {
    std::ostringstream out;
    out << "truth\\predicted";
    for (int c = 1; c <= bundle.class_count; ++c) out << "," << bundle.original_label(c);
    out << "\n";
    for (int r = 1; r <= bundle.class_count; ++r) {
        out << bundle.original_label(r);
        for (int c = 1; c <= bundle.class_count; ++c) out << "," << rep.confusion[r - 1][c - 1];
        out << "\n";
    }
    return out.str();
}

std::string render_patch_accuracy_csv(const MatcherBundle& bundle,
                                      const std::vector<double>& per_patch_accuracy) {
    const auto& h = bundle.hierarchy;
    std::ostringstream out;
    if (h.spec().mode == HierarchySpec::Mode::grid) {
        // one rows x cols block per level
        for (std::size_t li = 0; li < h.spec().levels.size(); ++li) {
            const auto& lv = h.spec().levels[li];
            out << "level " << li + 1 << " (" << lv.rows << "x" << lv.cols << ")\n";
            for (int r = 0; r < lv.rows; ++r) {
                for (int c = 0; c < lv.cols; ++c) {
                    const PatchId id{static_cast<int>(li) + 1, r * lv.cols + c + 1};
                    if (c) out << ",";
                    out << format_fixed(per_patch_accuracy[h.ordinal(id)], 6);
                }
                out << "\n";
            }
        }
    } else {
        out << "level,index,accuracy\n";
        for (std::size_t p = 0; p < h.patches().size(); ++p) {
            const PatchId id = h.patches()[p];
            out << id.level << "," << id.index << "," << format_fixed(per_patch_accuracy[p], 6)
                << "\n";
        }
    }
    return out.str();
}

} // namespace hml
