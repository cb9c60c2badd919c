// Seeded synthetic-occlusion benchmark: a desk-scale stand-in for the
// occluded-face protocol. Ten identities, five structured base textures per
// identity, Gaussian pixel noise, and a 25% noise-block occlusion pasted at a
// random position on every train and probe image (the gallery stays clean).

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "hml/error.hpp"
#include "hml/pipeline.hpp"
#include "hml/rng.hpp"
#include "hml/simd/kernels.hpp"
#include "hml/util.hpp"

namespace hml {

namespace {

constexpr int kIdentities = 10;
constexpr int kBaseTextures = 5;
constexpr int kSide = 32;
constexpr double kNoiseSigma = 8.0;
constexpr double kOcclusionFraction = 0.25;

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

// Blocky identity-specific field: an 8x8 random grid upsampled to 32x32.
ImageMatrix identity_field(std::uint64_t seed, int identity) {
    Rng rng(mix_seed(seed, 0x1D0000u + static_cast<std::uint64_t>(identity)));
    ImageMatrix coarse(8, 8);
    for (auto& px : coarse.pixels)
        px = static_cast<std::uint8_t>(30 + rng.below(191)); // [30, 220]
    return resize_nn(coarse, kSide, kSide);
}

// Per-texture perturbation on a finer grid.
ImageMatrix base_texture(const ImageMatrix& identity, std::uint64_t seed, int c, int t) {
    Rng rng(mix_seed(seed, 0x7E0000u + static_cast<std::uint64_t>(c) * 16 + t));
    ImageMatrix offsets(16, 16);
    for (auto& px : offsets.pixels) px = static_cast<std::uint8_t>(rng.below(51)); // [0, 50]
    const ImageMatrix fine = resize_nn(offsets, kSide, kSide);
    ImageMatrix out(kSide, kSide);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = clamp_u8(identity.pixels[i] + (static_cast<int>(fine.pixels[i]) - 25));
    return out;
}

ImageMatrix noisy_instance(const ImageMatrix& base, std::uint64_t seed, int c, int t, int k) {
    Rng rng(mix_seed(seed, 0x420000u +
                               ((static_cast<std::uint64_t>(c) * 8 + t) * 8 + k)));
    ImageMatrix out(kSide, kSide);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = clamp_u8(base.pixels[i] + rng.normal(0.0, kNoiseSigma));
    return out;
}

// High-frequency stand-in for the classic occluder image.
ImageMatrix occluder_texture(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xFACEu));
    ImageMatrix out(kSide, kSide);
    for (auto& px : out.pixels) px = static_cast<std::uint8_t>(rng.below(256));
    return out;
}

struct BenchData {
    std::vector<ImageMatrix> gallery_images;
    std::vector<int> gallery_labels;
    std::vector<ImageMatrix> train_images;
    std::vector<int> train_labels;
    std::vector<ImageMatrix> probe_images;
    std::vector<int> probe_labels;
};

BenchData generate_bench_data(std::uint64_t seed) {
    BenchData data;
    const ImageMatrix occluder = occluder_texture(seed);
    std::uint64_t occlusion_stream = 0;

    for (int c = 1; c <= kIdentities; ++c) {
        const ImageMatrix field = identity_field(seed, c);
        std::vector<ImageMatrix> bases;
        for (int t = 1; t <= kBaseTextures; ++t)
            bases.push_back(base_texture(field, seed, c, t));

        // gallery: one clean enrollment instance per base texture
        for (int t = 1; t <= kBaseTextures; ++t) {
            data.gallery_images.push_back(noisy_instance(bases[t - 1], seed, c, t, 0));
            data.gallery_labels.push_back(c);
        }
        // train: two occluded instances per texture
        for (int t = 1; t <= kBaseTextures; ++t) {
            for (int k = 1; k <= 2; ++k) {
                ImageMatrix img = noisy_instance(bases[t - 1], seed, c, t, k);
                img = synth_occlusion(img, occluder, kOcclusionFraction,
                                      mix_seed(seed, 0x0CC0000u + occlusion_stream++));
                data.train_images.push_back(std::move(img));
                data.train_labels.push_back(c);
            }
        }
        // probe: two fresh occluded instances per texture
        for (int t = 1; t <= kBaseTextures; ++t) {
            for (int k = 3; k <= 4; ++k) {
                ImageMatrix img = noisy_instance(bases[t - 1], seed, c, t, k);
                img = synth_occlusion(img, occluder, kOcclusionFraction,
                                      mix_seed(seed, 0x0CC0000u + occlusion_stream++));
                data.probe_images.push_back(std::move(img));
                data.probe_labels.push_back(c);
            }
        }
    }
    return data;
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : simd::sum(v.data(), v.size()) / static_cast<double>(v.size());
}

} // namespace

BenchResult run_bench(const std::string& out_dir, std::uint64_t seed, int threads) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir);

    const BenchData data = generate_bench_data(seed);

    // shared manifest-free training path: assemble the splits directly
    DatasetManifest manifest; // used only to carry labels through train_matcher
    MatcherConfig config;
    config.input = InputMode::images;
    config.hierarchy_levels = "1x1,1x2,2x2,4x4,8x8";
    config.local_kind = LocalKind::crc;
    config.crc_lambda = 0.001;
    config.pca_dim = 100;
    config.seed = seed;
    config.threads = threads;

    // train_matcher consumes manifests of file paths; the benchmark keeps
    // everything in memory instead, so write the images to the output
    // directory once and reference them. This doubles as an end-to-end test
    // of the PGM and manifest plumbing.
    const fs::path img_dir = fs::path(out_dir) / "images";
    fs::create_directories(img_dir, ec);
    std::ostringstream manifest_csv;
    manifest_csv << "id,path_or_sample,label,split\n";
    // relative paths keep the whole output directory byte-reproducible
    const auto dump_split = [&](const std::vector<ImageMatrix>& images,
                                const std::vector<int>& labels, const std::string& split) {
        for (std::size_t i = 0; i < images.size(); ++i) {
            const std::string name = split + "_" + std::to_string(i) + ".pgm";
            save_pgm(images[i], (img_dir / name).string());
            manifest_csv << split << i << ",images/" << name << "," << labels[i] << ","
                         << split << "\n";
        }
    };
    dump_split(data.gallery_images, data.gallery_labels, "gallery");
    dump_split(data.train_images, data.train_labels, "train");
    dump_split(data.probe_images, data.probe_labels, "probe");
    manifest = DatasetManifest::parse_csv(manifest_csv.str());
    manifest.base_dir = out_dir;
    const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
    write_file_atomic(manifest_path, manifest_csv.str());

    std::vector<SampleSignature> probe_signatures;

    BenchResult result;
    const std::vector<std::pair<std::string, GlobalKind>> methods = {
        {"V-HML", GlobalKind::vote},
        {"W-HML", GlobalKind::weights},
        {"R-HML", GlobalKind::forest},
    };

    std::ostringstream report;
    report << "hml synthetic occlusion benchmark (seed " << seed << ")\n";
    report << "dataset: " << kIdentities << " identities, " << data.gallery_images.size()
           << " gallery / " << data.train_images.size() << " train / "
           << data.probe_images.size() << " probe images, " << kSide << "x" << kSide << ", "
           << format_fixed(kOcclusionFraction * 100.0, 0)
           << "% block occlusion on train and probe\n";
    report << "local classifier: crc (lambda 0.001), pca 100, levels 1x1,1x2,2x2,4x4,8x8\n\n";
    report << "method,final_accuracy,mean_patch_local_accuracy,mean_patch_global_accuracy\n";

    for (const auto& [name, kind] : methods) {
        config.global_kind = kind;
        const TrainResult trained = train_matcher(manifest, config);
        if (probe_signatures.empty())
            probe_signatures = signatures_from_images(trained.bundle, data.probe_images);

        const EvaluationReport rep = evaluate(trained.bundle, probe_signatures,
                                              data.probe_labels, {}, threads);

        if (result.methods.empty()) {
            // flat baseline from the shared local stage: majority vote over
            // all patches' local matchings
            const auto detailed = identify_detailed(trained.bundle, probe_signatures, threads);
            int flat_ok = 0;
            for (std::size_t k = 0; k < detailed.size(); ++k) {
                std::vector<int> labels;
                std::vector<double> scores;
                for (const auto& rec : detailed[k].locals) {
                    labels.push_back(rec.label);
                    scores.push_back(rec.score);
                }
                const MatchingRecord flat = vote_global(labels, scores);
                flat_ok += trained.bundle.original_label(flat.label) == data.probe_labels[k];
            }
            result.flat_vote_accuracy =
                static_cast<double>(flat_ok) / static_cast<double>(detailed.size());
        }

        BenchMethodResult mr;
        mr.name = name;
        mr.final_accuracy = rep.overall_accuracy;
        mr.mean_patch_local_accuracy = mean(rep.per_patch_local_accuracy);
        mr.mean_patch_global_accuracy = mean(rep.per_patch_global_accuracy);
        result.methods.push_back(mr);

        report << name << "," << format_fixed(mr.final_accuracy, 6) << ","
               << format_fixed(mr.mean_patch_local_accuracy, 6) << ","
               << format_fixed(mr.mean_patch_global_accuracy, 6) << "\n";

        const std::string local_grid = (fs::path(out_dir) / (name + "_patch_local.csv")).string();
        const std::string global_grid =
            (fs::path(out_dir) / (name + "_patch_global.csv")).string();
        write_file_atomic(local_grid,
                          render_patch_accuracy_csv(trained.bundle, rep.per_patch_local_accuracy));
        write_file_atomic(global_grid, render_patch_accuracy_csv(
                                           trained.bundle, rep.per_patch_global_accuracy));
        result.written_files.push_back(local_grid);
        result.written_files.push_back(global_grid);
    }

    report << "flat-local-vote," << format_fixed(result.flat_vote_accuracy, 6) << ",,\n\n";
    report << "checks:\n";
    for (const auto& mr : result.methods) {
        report << "  " << mr.name << " final >= flat vote: "
               << (mr.final_accuracy >= result.flat_vote_accuracy ? "yes" : "NO") << "\n";
        report << "  " << mr.name << " mean patch global >= local: "
               << (mr.mean_patch_global_accuracy >= mr.mean_patch_local_accuracy ? "yes" : "NO")
               << "\n";
    }

    const std::string report_path = (fs::path(out_dir) / "bench_report.txt").string();
    write_file_atomic(report_path, report.str());
    result.written_files.push_back(report_path);
    result.written_files.push_back(manifest_path);
    std::sort(result.written_files.begin(), result.written_files.end());
    return result;
}

} // namespace hml
