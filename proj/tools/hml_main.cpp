// Command-line front end: partition, train, identify, evaluate, bench, stats.
// Exit codes: 0 on success, CLI11's own codes for usage errors, and
// 10 + ErrorCode for engine errors (the mapping is listed in the README).

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "hml/error.hpp"
#include "hml/pipeline.hpp"
#include "hml/simd/kernels.hpp"
#include "hml/stats.hpp"
#include "hml/util.hpp"

namespace {

using namespace hml;

MatcherConfig make_config(const std::string& config_path,
                          const std::vector<std::string>& overrides, int threads,
                          const std::string& seed_override) {
    MatcherConfig cfg;
    if (!config_path.empty()) cfg = MatcherConfig::load(config_path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::UsageError, "--set expects key=value, got '" + kv + "'");
        cfg.apply_override(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (!seed_override.empty()) cfg.apply_override("seed", seed_override);
    if (threads > 0) cfg.threads = threads;
    return cfg;
}

// Probe split of a manifest resolved into signatures + labels + groups.
struct ProbeSet {
    std::vector<SampleSignature> signatures;
    std::vector<int> labels;
    std::vector<std::string> ids;
    std::vector<std::string> groups;
    bool has_groups = false;
};

ProbeSet load_probes(const MatcherBundle& bundle, const std::string& manifest_path,
                     const std::string& signatures_path) {
    const DatasetManifest manifest = DatasetManifest::load_csv(manifest_path);
    auto entries = manifest.split_entries("probe");
    if (entries.empty())
        fail(ErrorCode::EmptyProbeSet, "manifest has no probe split");

    ProbeSet set;
    if (bundle.input == InputMode::images) {
        for (const auto* e : entries) {
            set.signatures.push_back(
                extract_gray_signature(load_pgm(manifest.resolve_path(*e)), bundle.hierarchy));
            set.labels.push_back(e->label);
            set.ids.push_back(e->id);
            set.groups.push_back(e->group);
            if (!e->group.empty()) set.has_groups = true;
        }
    } else {
        if (signatures_path.empty())
            fail(ErrorCode::UsageError,
                 "this bundle consumes signatures; pass --signatures <file>");
        const auto records = load_signatures(signatures_path);
        std::map<std::string, const SignatureRecord*> by_id;
        for (const auto& r : records) by_id[r.sample_id] = &r;
        for (const auto* e : entries) {
            const auto it = by_id.find(e->source);
            if (it == by_id.end())
                fail(ErrorCode::MalformedRecord,
                     "manifest sample '" + e->source + "' is not in the signature file");
            set.signatures.push_back(it->second->signature);
            set.labels.push_back(e->label);
            set.ids.push_back(e->id);
            set.groups.push_back(e->group);
            if (!e->group.empty()) set.has_groups = true;
        }
    }
    return set;
}

int cmd_partition(const std::string& levels, const std::string& spec_path,
                  const std::string& image_size, const std::string& out_path) {
    HierarchySpec spec;
    if (!spec_path.empty()) {
        spec = load_hierarchy_spec(spec_path);
    } else {
        spec = HierarchySpec::grid(HierarchySpec::parse_grid_levels(levels));
    }
    const auto parts = split(image_size, 'x');
    bool ok1 = false, ok2 = false;
    int h = 0, w = 0;
    if (parts.size() == 2) {
        h = static_cast<int>(parse_long(parts[0], &ok1));
        w = static_cast<int>(parse_long(parts[1], &ok2));
    }
    if (!ok1 || !ok2) fail(ErrorCode::UsageError, "--image-size expects HxW");

    const PatchHierarchy hier = build_hierarchy(spec, h, w);
    std::cout << "image: " << h << "x" << w << ", levels: " << hier.depth() << "\n";
    for (int level = 1; level <= hier.depth(); ++level)
        std::cout << "  level " << level << ": " << hier.level_count(level) << " patches\n";
    std::cout << "patches: N = " << hier.patch_count() << "\n";
    if (!out_path.empty()) {
        save_hierarchy_spec(spec, out_path);
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& config_path,
              const std::string& out_path, const std::vector<std::string>& overrides,
              int threads, const std::string& seed) {
    const MatcherConfig cfg = make_config(config_path, overrides, threads, seed);
    const DatasetManifest manifest = DatasetManifest::load_csv(manifest_path);
    const TrainResult result = train_matcher(manifest, cfg);
    save_bundle(result.bundle, out_path);

    double local_mean = 0.0, global_mean = 0.0;
    for (const double a : result.patch_local_train_accuracy) local_mean += a;
    for (const double a : result.patch_global_train_accuracy) global_mean += a;
    const double n = static_cast<double>(result.patch_local_train_accuracy.size());
    std::cout << "trained " << result.bundle.hierarchy.patch_count() << " patches, "
              << result.bundle.class_count << " identities\n";
    std::cout << "train split mean per-patch accuracy: local "
              << format_fixed(local_mean / n, 4) << ", global "
              << format_fixed(global_mean / n, 4) << "\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_identify(const std::string& bundle_path, const std::string& manifest_path,
                 const std::string& signatures_path, const std::string& out_path,
                 int threads) {
    const MatcherBundle bundle = load_bundle(bundle_path);
    const ProbeSet probes = load_probes(bundle, manifest_path, signatures_path);
    const auto results = identify_detailed(bundle, probes.signatures, threads);

    std::ostringstream csv;
    csv << "sample,predicted_label,score";
    for (const auto& id : bundle.hierarchy.patches())
        csv << ",g_" << id.level << "_" << id.index;
    csv << "\n";
    for (std::size_t k = 0; k < results.size(); ++k) {
        csv << probes.ids[k] << "," << bundle.original_label(results[k].final.label) << ","
            << format_double(results[k].final.score);
        for (const auto& g : results[k].globals)
            csv << "," << bundle.original_label(g.label);
        csv << "\n";
    }
    write_file_atomic(out_path, csv.str());
    std::cout << "identified " << results.size() << " probes, wrote " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& bundle_path, const std::string& manifest_path,
                 const std::string& signatures_path, const std::string& out_dir,
                 int threads) {
    namespace fs = std::filesystem;
    const MatcherBundle bundle = load_bundle(bundle_path);
    const ProbeSet probes = load_probes(bundle, manifest_path, signatures_path);
    const EvaluationReport rep =
        evaluate(bundle, probes.signatures, probes.labels,
                 probes.has_groups ? probes.groups : std::vector<std::string>{}, threads);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir);
    write_file_atomic((fs::path(out_dir) / "report.txt").string(),
                      render_report_text(bundle, rep));
    write_file_atomic((fs::path(out_dir) / "report.csv").string(),
                      render_report_csv(bundle, rep));
    write_file_atomic((fs::path(out_dir) / "confusion.csv").string(),
                      render_confusion_csv(bundle, rep));
    write_file_atomic((fs::path(out_dir) / "patch_local.csv").string(),
                      render_patch_accuracy_csv(bundle, rep.per_patch_local_accuracy));
    write_file_atomic((fs::path(out_dir) / "patch_global.csv").string(),
                      render_patch_accuracy_csv(bundle, rep.per_patch_global_accuracy));
    std::cout << render_report_text(bundle, rep);
    std::cout << "wrote reports to " << out_dir << "\n";
    return 0;
}

int cmd_bench(const std::string& out_dir, std::uint64_t seed, int threads) {
    const BenchResult result = run_bench(out_dir, seed, threads);
    std::cout << read_file((std::filesystem::path(out_dir) / "bench_report.txt").string());
    bool all_ok = true;
    for (const auto& m : result.methods) {
        all_ok = all_ok && m.final_accuracy >= result.flat_vote_accuracy;
        all_ok = all_ok && m.mean_patch_global_accuracy >= m.mean_patch_local_accuracy;
    }
    std::cout << (all_ok ? "benchmark checks passed\n" : "benchmark checks FAILED\n");
    return all_ok ? 0 : 1;
}

int cmd_stats(const std::string& scores_path, double alpha, const std::string& out_dir) {
    const stats::ScoreTable table = stats::ScoreTable::load_csv(scores_path);
    const stats::TestResult result = stats::compare_methods(table, alpha);
    std::cout << stats::render_report(table, result);
    if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir);
        write_file_atomic((fs::path(out_dir) / "ranks.csv").string(),
                          stats::render_ranks_csv(table, result));
        write_file_atomic((fs::path(out_dir) / "pairwise.csv").string(),
                          stats::render_pairwise_csv(table, result));
        std::cout << "wrote " << out_dir << "/ranks.csv and pairwise.csv\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hml - patch-based face identification with hierarchical multi-label matching"};
    app.require_subcommand(1);

    std::string levels = "1x1,1x2,2x2,4x4,8x8";
    std::string spec_path, image_size = "32x32", out_path;
    auto* partition = app.add_subcommand("partition", "build a patch hierarchy and report it");
    partition->add_option("--levels", levels, "grid levels, e.g. 1x1,1x2,2x2,4x4,8x8");
    partition->add_option("--spec", spec_path, "explicit hierarchy spec file");
    partition->add_option("--image-size", image_size, "image size HxW")->required();
    partition->add_option("--out", out_path, "write the spec file here");

    std::string manifest_path, config_path, bundle_out = "matcher.hml";
    std::vector<std::string> overrides;
    int threads = 0;
    std::string seed_override;
    auto* train = app.add_subcommand("train", "train a matcher bundle");
    train->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    train->add_option("--config", config_path, "config file (key = value lines)");
    train->add_option("--out", bundle_out, "output bundle path");
    train->add_option("--set", overrides, "config override key=value (repeatable)");
    train->add_option("--seed", seed_override, "seed override");
    train->add_option("--threads", threads, "worker thread cap");

    std::string bundle_path, id_manifest, id_signatures, id_out = "predictions.csv";
    int id_threads = 0;
    auto* identify = app.add_subcommand("identify", "match probes against a trained bundle");
    identify->add_option("--bundle", bundle_path, "bundle file")->required();
    identify->add_option("--manifest", id_manifest, "manifest with a probe split")->required();
    identify->add_option("--signatures", id_signatures, "signature file (signature bundles)");
    identify->add_option("--out", id_out, "output CSV");
    identify->add_option("--threads", id_threads, "worker thread cap");

    std::string ev_bundle, ev_manifest, ev_signatures, ev_out = "eval";
    int ev_threads = 0;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a bundle on labeled probes");
    evaluate_cmd->add_option("--bundle", ev_bundle, "bundle file")->required();
    evaluate_cmd->add_option("--manifest", ev_manifest, "manifest with a probe split")
        ->required();
    evaluate_cmd->add_option("--signatures", ev_signatures, "signature file");
    evaluate_cmd->add_option("--out-dir", ev_out, "report output directory");
    evaluate_cmd->add_option("--threads", ev_threads, "worker thread cap");

    std::string bench_dir = "bench_out";
    std::uint64_t bench_seed = 42;
    int bench_threads = 0;
    auto* bench = app.add_subcommand("bench", "run the seeded synthetic occlusion benchmark");
    bench->add_option("--out-dir", bench_dir, "output directory");
    bench->add_option("--seed", bench_seed, "benchmark seed");
    bench->add_option("--threads", bench_threads, "worker thread cap");

    std::string scores_path, stats_dir;
    double alpha = 0.10;
    auto* stats_cmd = app.add_subcommand("stats", "Friedman + Bonferroni-Dunn comparison");
    stats_cmd->add_option("--scores", scores_path, "score table CSV")->required();
    stats_cmd->add_option("--alpha", alpha, "significance level (0.05 or 0.10)");
    stats_cmd->add_option("--out-dir", stats_dir, "write ranks/pairwise CSVs here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (partition->parsed())
            return cmd_partition(levels, spec_path, image_size, out_path);
        if (train->parsed())
            return cmd_train(manifest_path, config_path, bundle_out, overrides, threads,
                             seed_override);
        if (identify->parsed())
            return cmd_identify(bundle_path, id_manifest, id_signatures, id_out, id_threads);
        if (evaluate_cmd->parsed())
            return cmd_evaluate(ev_bundle, ev_manifest, ev_signatures, ev_out, ev_threads);
        if (bench->parsed()) return cmd_bench(bench_dir, bench_seed, bench_threads);
        if (stats_cmd->parsed()) return cmd_stats(scores_path, alpha, stats_dir);
    } catch (const hml::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
