// MatcherBundle persistence. Single JSON document:
//   { "format": "hml-bundle", "version": 1, "crc32": <payload checksum>,
//     "payload": { ... } }
// The checksum covers the canonical dump of the payload object; doubles
// round-trip bit-exactly through the shortest-representation encoding.

#include <json.hpp>

#include "hml/error.hpp"
#include "hml/pipeline.hpp"
#include "hml/util.hpp"

namespace hml {

namespace {

using nlohmann::json;

constexpr int kBundleVersion = 1;

json spec_to_json(const HierarchySpec& spec) {
    json j;
    j["mode"] = spec.mode == HierarchySpec::Mode::grid ? "grid" : "explicit";
    j["rooted"] = spec.rooted;
    if (spec.mode == HierarchySpec::Mode::grid) {
        json levels = json::array();
        for (const auto& lv : spec.levels) levels.push_back({lv.rows, lv.cols});
        j["levels"] = std::move(levels);
    } else {
        json patches = json::array();
        for (const auto& p : spec.patches) {
            json e;
            e["level"] = p.id.level;
            e["index"] = p.id.index;
            e["rect"] = {p.rect.top, p.rect.left, p.rect.height, p.rect.width};
            if (p.parent) e["parent"] = {p.parent->level, p.parent->index};
            patches.push_back(std::move(e));
        }
        j["patches"] = std::move(patches);
    }
    return j;
}

HierarchySpec spec_from_json(const json& j) {
    HierarchySpec spec;
    spec.rooted = j.at("rooted").get<bool>();
    if (j.at("mode").get<std::string>() == "grid") {
        spec.mode = HierarchySpec::Mode::grid;
        for (const auto& lv : j.at("levels"))
            spec.levels.push_back({lv.at(0).get<int>(), lv.at(1).get<int>()});
    } else {
        spec.mode = HierarchySpec::Mode::explicit_list;
        for (const auto& e : j.at("patches")) {
            ExplicitPatch p;
            p.id = {e.at("level").get<int>(), e.at("index").get<int>()};
            const auto& r = e.at("rect");
            p.rect = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(),
                      r.at(3).get<int>()};
            if (e.contains("parent"))
                p.parent = PatchId{e["parent"].at(0).get<int>(), e["parent"].at(1).get<int>()};
            spec.patches.push_back(std::move(p));
        }
    }
    return spec;
}

json pca_to_json(const PcaModel& m) {
    json j;
    j["identity"] = m.is_identity();
    j["input_dim"] = m.input_dim();
    j["output_dim"] = m.output_dim();
    if (!m.is_identity()) {
        j["mean"] = m.mean();
        j["basis"] = m.basis();
    }
    return j;
}

PcaModel pca_from_json(const json& j) {
    const bool identity = j.at("identity").get<bool>();
    const int input_dim = j.at("input_dim").get<int>();
    const int output_dim = j.at("output_dim").get<int>();
    if (identity) return PcaModel::identity(input_dim);
    return PcaModel::from_parts(input_dim, output_dim, false,
                                j.at("mean").get<std::vector<double>>(),
                                j.at("basis").get<std::vector<double>>());
}

json local_to_json(const LocalClassifier& c) {
    const auto s = c.state();
    json j;
    j["kind"] = local_kind_name(s.kind);
    j["dim"] = s.dim;
    j["class_count"] = s.class_count;
    j["crc_lambda"] = s.crc_lambda;
    j["labels"] = s.labels;
    j["gallery"] = s.gallery;
    if (s.kind == LocalKind::crc) j["projector"] = s.projector;
    return j;
}

LocalClassifier local_from_json(const json& j) {
    LocalClassifier::State s;
    s.kind = parse_local_kind(j.at("kind").get<std::string>());
    s.dim = j.at("dim").get<int>();
    s.class_count = j.at("class_count").get<int>();
    s.crc_lambda = j.at("crc_lambda").get<double>();
    s.labels = j.at("labels").get<std::vector<int>>();
    s.gallery = j.at("gallery").get<std::vector<double>>();
    if (s.kind == LocalKind::crc) s.projector = j.at("projector").get<std::vector<double>>();
    return LocalClassifier::from_state(std::move(s));
}

json forest_to_json(const DecisionForest& f) {
    const auto s = f.state();
    json j;
    j["relations"] = s.relations;
    j["class_count"] = s.class_count;
    j["roots"] = s.roots;
    json trees = json::array();
    for (const auto& tree : s.trees) {
        json nodes = json::array();
        for (const auto& n : tree)
            nodes.push_back({n.column, n.value, n.match, n.rest, n.leaf_label});
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j;
}

DecisionForest forest_from_json(const json& j) {
    DecisionForest::State s;
    s.relations = j.at("relations").get<std::size_t>();
    s.class_count = j.at("class_count").get<int>();
    s.roots = j.at("roots").get<std::vector<int>>();
    for (const auto& tree : j.at("trees")) {
        std::vector<DecisionForest::Node> nodes;
        nodes.reserve(tree.size());
        for (const auto& n : tree)
            nodes.push_back({n.at(0).get<int>(), n.at(1).get<int>(), n.at(2).get<int>(),
                             n.at(3).get<int>(), n.at(4).get<int>()});
        s.trees.push_back(std::move(nodes));
    }
    return DecisionForest::from_state(std::move(s));
}

json global_to_json(const GlobalModel& g) {
    json j;
    j["kind"] = global_kind_name(g.kind());
    j["patch"] = {g.patch().level, g.patch().index};
    j["relations"] = g.relations();
    switch (g.kind()) {
        case GlobalKind::vote: break;
        case GlobalKind::weights:
            j["weights"] = g.weights();
            j["degenerate"] = g.degenerate_weights();
            break;
        case GlobalKind::forest:
            j["forest"] = forest_to_json(g.forest());
            break;
    }
    return j;
}

GlobalModel global_from_json(const json& j) {
    const GlobalKind kind = parse_global_kind(j.at("kind").get<std::string>());
    const PatchId patch{j.at("patch").at(0).get<int>(), j.at("patch").at(1).get<int>()};
    switch (kind) {
        case GlobalKind::vote:
            return GlobalModel::make_vote(patch, j.at("relations").get<std::size_t>());
        case GlobalKind::weights:
            return GlobalModel::make_weighted(patch, j.at("weights").get<std::vector<double>>(),
                                              j.at("degenerate").get<bool>());
        case GlobalKind::forest:
            return GlobalModel::make_forest(patch, forest_from_json(j.at("forest")));
    }
    fail(ErrorCode::UnknownGlobalKind, "unreachable");
}

const char* final_rule_name(FinalRule r) {
    return r == FinalRule::all_patches ? "all_patches" : "per_level";
}

FinalRule parse_final_rule(const std::string& s) {
    if (s == "all_patches") return FinalRule::all_patches;
    if (s == "per_level") return FinalRule::per_level;
    fail(ErrorCode::CorruptBundle, "unknown final rule '" + s + "'");
}

} // namespace

void save_bundle(const MatcherBundle& bundle, const std::string& path) {
    json payload;
    payload["hierarchy"] = spec_to_json(bundle.hierarchy.spec());
    payload["image_height"] = bundle.hierarchy.image_height();
    payload["image_width"] = bundle.hierarchy.image_width();
    payload["final_rule"] = final_rule_name(bundle.final_rule);
    payload["input"] = bundle.input == InputMode::images ? "images" : "signatures";
    payload["class_count"] = bundle.class_count;
    payload["original_labels"] = bundle.original_labels;
    payload["seed"] = bundle.seed;
    payload["local_kind"] = local_kind_name(bundle.local_kind);
    payload["global_kind"] = global_kind_name(bundle.global_kind);
    payload["crc_lambda"] = bundle.crc_lambda;
    payload["w_lambda"] = bundle.w_lambda;
    payload["n_trees"] = bundle.n_trees;
    payload["max_depth"] = bundle.max_depth;
    payload["pca_dim"] = bundle.pca_dim;

    json pca = json::array();
    for (const auto& m : bundle.pca) pca.push_back(pca_to_json(m));
    payload["pca"] = std::move(pca);
    json locals = json::array();
    for (const auto& c : bundle.locals) locals.push_back(local_to_json(c));
    payload["locals"] = std::move(locals);
    json globals = json::array();
    for (const auto& g : bundle.globals) globals.push_back(global_to_json(g));
    payload["globals"] = std::move(globals);

    const std::string payload_text = payload.dump();
    json doc;
    doc["format"] = "hml-bundle";
    doc["version"] = kBundleVersion;
    doc["crc32"] = crc32(payload_text.data(), payload_text.size());
    doc["payload"] = std::move(payload);
    write_file_atomic(path, doc.dump());
}

MatcherBundle load_bundle(const std::string& path) {
    const std::string text = read_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptBundle, path + ": " + e.what());
    }

    try {
        if (!doc.contains("format") || doc["format"] != "hml-bundle")
            fail(ErrorCode::CorruptBundle, path + ": not a matcher bundle");
        if (doc.at("version").get<int>() != kBundleVersion)
            fail(ErrorCode::VersionMismatch,
                 path + ": bundle version " + doc["version"].dump() + ", expected " +
                     std::to_string(kBundleVersion));
        const json& payload = doc.at("payload");
        const std::string payload_text = payload.dump();
        if (crc32(payload_text.data(), payload_text.size()) != doc.at("crc32").get<std::uint32_t>())
            fail(ErrorCode::CorruptBundle, path + ": checksum mismatch");

        MatcherBundle b;
        b.hierarchy = build_hierarchy(spec_from_json(payload.at("hierarchy")),
                                      payload.at("image_height").get<int>(),
                                      payload.at("image_width").get<int>());
        b.final_rule = parse_final_rule(payload.at("final_rule").get<std::string>());
        b.input = payload.at("input").get<std::string>() == "images" ? InputMode::images
                                                                     : InputMode::signatures;
        b.class_count = payload.at("class_count").get<int>();
        b.original_labels = payload.at("original_labels").get<std::vector<int>>();
        b.seed = payload.at("seed").get<std::uint64_t>();
        b.local_kind = parse_local_kind(payload.at("local_kind").get<std::string>());
        b.global_kind = parse_global_kind(payload.at("global_kind").get<std::string>());
        b.crc_lambda = payload.at("crc_lambda").get<double>();
        b.w_lambda = payload.at("w_lambda").get<double>();
        b.n_trees = payload.at("n_trees").get<int>();
        b.max_depth = payload.at("max_depth").get<int>();
        b.pca_dim = payload.at("pca_dim").get<int>();

        for (const auto& m : payload.at("pca")) b.pca.push_back(pca_from_json(m));
        for (const auto& c : payload.at("locals")) b.locals.push_back(local_from_json(c));
        for (const auto& g : payload.at("globals")) b.globals.push_back(global_from_json(g));

        const std::size_t n = b.hierarchy.patches().size();
        if (b.pca.size() != n || b.locals.size() != n || b.globals.size() != n)
            fail(ErrorCode::CorruptBundle, path + ": per-patch model counts disagree");
        return b;
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptBundle, path + ": " + e.what());
    }
}

} // namespace hml
