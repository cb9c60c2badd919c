#include "hml/hierarchy.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "hml/error.hpp"
#include "hml/util.hpp"

namespace hml {

bool rects_adjacent(const PatchRect& a, const PatchRect& b) {
    const int ox = std::min(a.right(), b.right()) - std::max(a.left, b.left);
    const int oy = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
    if (ox < 0 || oy < 0) return false;      // separated
    if (ox == 0 && oy == 0) return false;    // corner contact only
    return true;                             // shared edge segment or overlap
}

HierarchySpec HierarchySpec::grid(std::vector<GridLevel> levels) {
    HierarchySpec s;
    s.mode = Mode::grid;
    s.levels = std::move(levels);
    s.rooted = !s.levels.empty() && s.levels.front().rows == 1 && s.levels.front().cols == 1;
    return s;
}

HierarchySpec HierarchySpec::explicit_list(std::vector<ExplicitPatch> patches, bool rooted) {
    HierarchySpec s;
    s.mode = Mode::explicit_list;
    s.patches = std::move(patches);
    s.rooted = rooted;
    return s;
}

std::vector<GridLevel> HierarchySpec::parse_grid_levels(const std::string& text) {
    std::vector<GridLevel> levels;
    for (const auto& part : split(text, ',')) {
        const auto dims = split(trim(part), 'x');
        bool ok1 = false, ok2 = false;
        if (dims.size() == 2) {
            GridLevel lv;
            lv.rows = static_cast<int>(parse_long(dims[0], &ok1));
            lv.cols = static_cast<int>(parse_long(dims[1], &ok2));
            if (ok1 && ok2 && lv.rows >= 1 && lv.cols >= 1) {
                levels.push_back(lv);
                continue;
            }
        }
        fail(ErrorCode::MalformedRecord, "bad grid level '" + part + "' (expected RxC)");
    }
    return levels;
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

PatchHierarchy PatchHierarchy::build(const HierarchySpec& spec, int image_height,
                                     int image_width) {
    if (image_height < 1 || image_width < 1)
        fail(ErrorCode::OutOfBoundsRect, "image dimensions must be positive");

    PatchHierarchy h;
    h.spec_ = spec;
    h.image_height_ = image_height;
    h.image_width_ = image_width;

    if (spec.mode == HierarchySpec::Mode::grid) {
        if (spec.levels.empty()) fail(ErrorCode::EmptyInput, "grid spec has no levels");
        for (std::size_t i = 1; i < spec.levels.size(); ++i) {
            const auto& prev = spec.levels[i - 1];
            const auto& cur = spec.levels[i];
            if (cur.rows % prev.rows != 0 || cur.cols % prev.cols != 0)
                fail(ErrorCode::NonNestingGrid,
                     "level " + std::to_string(i + 1) + " grid " + std::to_string(cur.rows) +
                         "x" + std::to_string(cur.cols) + " is not a multiple of level " +
                         std::to_string(i) + " grid");
        }
        const auto& finest = spec.levels.back();
        if (image_height % finest.rows != 0 || image_width % finest.cols != 0)
            fail(ErrorCode::NonDivisibleImage,
                 "image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                     " is not divisible by the finest grid " + std::to_string(finest.rows) +
                     "x" + std::to_string(finest.cols) + "; resize the image first");

        h.depth_ = static_cast<int>(spec.levels.size());
        std::vector<int> level_start(spec.levels.size());
        for (std::size_t li = 0; li < spec.levels.size(); ++li) {
            const auto& lv = spec.levels[li];
            level_start[li] = static_cast<int>(h.ids_.size());
            h.level_counts_.push_back(lv.rows * lv.cols);
            const int ph = image_height / lv.rows;
            const int pw = image_width / lv.cols;
            for (int r = 0; r < lv.rows; ++r) {
                for (int c = 0; c < lv.cols; ++c) {
                    h.ids_.push_back({static_cast<int>(li) + 1, r * lv.cols + c + 1});
                    h.rects_.push_back({r * ph, c * pw, ph, pw});
                }
            }
        }

        h.parent_.assign(h.ids_.size(), -1);
        // containment is guaranteed by the multiple-of check, so the parent
        // cell is a pure index computation
        for (std::size_t li = 1; li < spec.levels.size(); ++li) {
            const auto& lv = spec.levels[li];
            const auto& up = spec.levels[li - 1];
            const int rf = lv.rows / up.rows;
            const int cf = lv.cols / up.cols;
            for (int r = 0; r < lv.rows; ++r) {
                for (int c = 0; c < lv.cols; ++c) {
                    const int self = level_start[li] + r * lv.cols + c;
                    const int pr = r / rf;
                    const int pc = c / cf;
                    h.parent_[self] = level_start[li - 1] + pr * up.cols + pc;
                }
            }
        }
    } else {
        if (spec.patches.empty()) fail(ErrorCode::EmptyInput, "explicit spec has no patches");

        std::map<PatchId, std::pair<PatchRect, std::optional<PatchId>>> entries;
        for (const auto& p : spec.patches) {
            if (p.id.level < 1 || p.id.index < 1)
                fail(ErrorCode::MalformedRecord, "patch ids are 1-based: " + p.id.str());
            if (p.rect.height < 1 || p.rect.width < 1 || p.rect.top < 0 || p.rect.left < 0 ||
                p.rect.bottom() > image_height || p.rect.right() > image_width)
                fail(ErrorCode::OutOfBoundsRect,
                     "patch " + p.id.str() + " rectangle leaves the image bounds");
            if (!entries.emplace(p.id, std::make_pair(p.rect, p.parent)).second)
                fail(ErrorCode::MalformedRecord, "duplicate patch " + p.id.str());
        }

        for (const auto& [id, entry] : entries) {
            h.ids_.push_back(id);
            h.rects_.push_back(entry.first);
            h.depth_ = std::max(h.depth_, id.level);
        }
        h.level_counts_.assign(h.depth_, 0);
        for (const auto& id : h.ids_) h.level_counts_[id.level - 1]++;

        h.parent_.assign(h.ids_.size(), -1);
        for (std::size_t i = 0; i < h.ids_.size(); ++i) {
            const auto& parent = entries.at(h.ids_[i]).second;
            if (!parent) continue;
            const auto it = entries.find(*parent);
            if (it == entries.end())
                fail(ErrorCode::UnknownPatch,
                     "patch " + h.ids_[i].str() + " names missing parent " + parent->str());
            h.parent_[i] = static_cast<int>(std::distance(entries.begin(), it));
        }

        // cycle check: walk the parent chain from every node
        for (std::size_t i = 0; i < h.ids_.size(); ++i) {
            int slow = static_cast<int>(i);
            std::size_t steps = 0;
            while (slow >= 0) {
                slow = h.parent_[slow];
                if (++steps > h.ids_.size())
                    fail(ErrorCode::CyclicSpec,
                         "parent relation contains a cycle through " + h.ids_[i].str());
            }
        }
    }

    h.children_.assign(h.ids_.size(), {});
    for (std::size_t i = 0; i < h.ids_.size(); ++i)
        if (h.parent_[i] >= 0) h.children_[h.parent_[i]].push_back(static_cast<int>(i));

    h.siblings_.assign(h.ids_.size(), {});
    for (std::size_t i = 0; i < h.ids_.size(); ++i) {
        for (std::size_t j = i + 1; j < h.ids_.size(); ++j) {
            if (h.parent_[i] < 0 || h.parent_[i] != h.parent_[j]) continue;
            if (!rects_adjacent(h.rects_[i], h.rects_[j])) continue;
            h.siblings_[i].push_back(static_cast<int>(j));
            h.siblings_[j].push_back(static_cast<int>(i));
        }
    }
    for (auto& s : h.siblings_) std::sort(s.begin(), s.end());

    return h;
}

// ---------------------------------------------------------------------------
// queries
// ---------------------------------------------------------------------------

int PatchHierarchy::level_count(int level) const {
    if (level < 1 || level > depth_) return 0;
    return level_counts_[level - 1];
}

bool PatchHierarchy::contains(PatchId p) const {
    return std::binary_search(ids_.begin(), ids_.end(), p);
}

int PatchHierarchy::ordinal(PatchId p) const {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), p);
    if (it == ids_.end() || *it != p) return -1;
    return static_cast<int>(it - ids_.begin());
}

int PatchHierarchy::checked_ordinal(PatchId p) const {
    const int o = ordinal(p);
    if (o < 0) fail(ErrorCode::UnknownPatch, "no patch " + p.str() + " in this hierarchy");
    return o;
}

const PatchRect& PatchHierarchy::rect(PatchId p) const { return rects_[checked_ordinal(p)]; }

std::vector<PatchId> PatchHierarchy::parents(PatchId p) const {
    const int o = checked_ordinal(p);
    if (parent_[o] < 0) return {};
    return {ids_[parent_[o]]};
}

std::vector<PatchId> PatchHierarchy::children(PatchId p) const {
    const int o = checked_ordinal(p);
    std::vector<PatchId> out;
    out.reserve(children_[o].size());
    for (const int c : children_[o]) out.push_back(ids_[c]);
    return out;
}

std::vector<PatchId> PatchHierarchy::ancestors(PatchId p) const {
    int o = checked_ordinal(p);
    std::vector<PatchId> out;
    while (parent_[o] >= 0) {
        o = parent_[o];
        out.push_back(ids_[o]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PatchId> PatchHierarchy::descendants(PatchId p) const {
    std::vector<PatchId> out;
    std::vector<int> stack{checked_ordinal(p)};
    while (!stack.empty()) {
        const int o = stack.back();
        stack.pop_back();
        for (const int c : children_[o]) {
            out.push_back(ids_[c]);
            stack.push_back(c);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PatchId> PatchHierarchy::adjacent_siblings(PatchId p) const {
    const int o = checked_ordinal(p);
    std::vector<PatchId> out;
    out.reserve(siblings_[o].size());
    for (const int s : siblings_[o]) out.push_back(ids_[s]);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PatchId> PatchHierarchy::related_patches(PatchId p) const {
    std::vector<PatchId> out{p};
    for (auto block : {parents(p), children(p), adjacent_siblings(p)}) {
        std::sort(block.begin(), block.end());
        out.insert(out.end(), block.begin(), block.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// spec file format
// ---------------------------------------------------------------------------
//
//   # comment
//   mode = explicit            (or: grid)
//   rooted = false
//   levels = 1x1,1x2,2x2       (grid mode only)
//   patch = { level = 1, index = 1, top = 0, left = 0, height = 8, width = 8 }
//   patch = { level = 2, index = 1, ..., parent = 1/1 }

namespace {

PatchId parse_patch_ref(const std::string& text) {
    const auto parts = split(trim(text), '/');
    bool ok1 = false, ok2 = false;
    PatchId id;
    if (parts.size() == 2) {
        id.level = static_cast<int>(parse_long(parts[0], &ok1));
        id.index = static_cast<int>(parse_long(parts[1], &ok2));
    }
    if (!ok1 || !ok2)
        fail(ErrorCode::MalformedRecord, "bad patch reference '" + text + "' (expected L/J)");
    return id;
}

ExplicitPatch parse_patch_entry(const std::string& body, int line_no) {
    ExplicitPatch p;
    bool seen_level = false, seen_index = false, seen_top = false, seen_left = false,
         seen_height = false, seen_width = false;
    for (const auto& field : split(body, ',')) {
        const auto kv = split(field, '=');
        if (kv.size() != 2)
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": bad field '" + field + "'");
        const std::string key = trim(kv[0]);
        const std::string value = trim(kv[1]);
        bool ok = false;
        const long num = parse_long(value, &ok);
        if (key == "parent") {
            p.parent = parse_patch_ref(value);
            continue;
        }
        if (!ok)
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": non-integer value for " + key);
        if (key == "level") { p.id.level = static_cast<int>(num); seen_level = true; }
        else if (key == "index") { p.id.index = static_cast<int>(num); seen_index = true; }
        else if (key == "top") { p.rect.top = static_cast<int>(num); seen_top = true; }
        else if (key == "left") { p.rect.left = static_cast<int>(num); seen_left = true; }
        else if (key == "height") { p.rect.height = static_cast<int>(num); seen_height = true; }
        else if (key == "width") { p.rect.width = static_cast<int>(num); seen_width = true; }
        else fail(ErrorCode::MalformedRecord,
                  "line " + std::to_string(line_no) + ": unknown field '" + key + "'");
    }
    if (!(seen_level && seen_index && seen_top && seen_left && seen_height && seen_width))
        fail(ErrorCode::MalformedRecord,
             "line " + std::to_string(line_no) + ": patch entry is missing required fields");
    return p;
}

} // namespace

HierarchySpec parse_hierarchy_spec(const std::string& text) {
    HierarchySpec spec;
    spec.mode = HierarchySpec::Mode::explicit_list;
    bool mode_set = false;
    bool rooted_set = false;

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
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "mode") {
            if (value == "grid") spec.mode = HierarchySpec::Mode::grid;
            else if (value == "explicit") spec.mode = HierarchySpec::Mode::explicit_list;
            else fail(ErrorCode::MalformedRecord, "unknown mode '" + value + "'");
            mode_set = true;
        } else if (key == "rooted") {
            if (value == "true") spec.rooted = true;
            else if (value == "false") spec.rooted = false;
            else fail(ErrorCode::MalformedRecord, "rooted must be true or false");
            rooted_set = true;
        } else if (key == "levels") {
            spec.levels = HierarchySpec::parse_grid_levels(value);
        } else if (key == "patch") {
            std::string body = value;
            if (body.size() < 2 || body.front() != '{' || body.back() != '}')
                fail(ErrorCode::MalformedRecord,
                     "line " + std::to_string(line_no) + ": patch entry must be braced");
            spec.patches.push_back(parse_patch_entry(body.substr(1, body.size() - 2), line_no));
        } else {
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }

    if (!mode_set) spec.mode = spec.patches.empty() && !spec.levels.empty()
                                   ? HierarchySpec::Mode::grid
                                   : HierarchySpec::Mode::explicit_list;
    if (spec.mode == HierarchySpec::Mode::grid && spec.levels.empty())
        fail(ErrorCode::MalformedRecord, "grid spec without levels");
    if (spec.mode == HierarchySpec::Mode::explicit_list && spec.patches.empty())
        fail(ErrorCode::MalformedRecord, "explicit spec without patches");
    if (!rooted_set) {
        if (spec.mode == HierarchySpec::Mode::grid) {
            spec.rooted = spec.levels.front().rows == 1 && spec.levels.front().cols == 1;
        } else {
            int roots = 0;
            for (const auto& p : spec.patches) roots += p.parent ? 0 : 1;
            spec.rooted = roots == 1;
        }
    }
    return spec;
}

std::string render_hierarchy_spec(const HierarchySpec& spec) {
    std::ostringstream out;
    out << "# hml hierarchy spec\n";
    out << "mode = " << (spec.mode == HierarchySpec::Mode::grid ? "grid" : "explicit") << "\n";
    out << "rooted = " << (spec.rooted ? "true" : "false") << "\n";
    if (spec.mode == HierarchySpec::Mode::grid) {
        out << "levels = ";
        for (std::size_t i = 0; i < spec.levels.size(); ++i) {
            if (i) out << ",";
            out << spec.levels[i].rows << "x" << spec.levels[i].cols;
        }
        out << "\n";
    } else {
        for (const auto& p : spec.patches) {
            out << "patch = { level = " << p.id.level << ", index = " << p.id.index
                << ", top = " << p.rect.top << ", left = " << p.rect.left
                << ", height = " << p.rect.height << ", width = " << p.rect.width;
            if (p.parent) out << ", parent = " << p.parent->str();
            out << " }\n";
        }
    }
    return out.str();
}

HierarchySpec load_hierarchy_spec(const std::string& path) {
    return parse_hierarchy_spec(read_file(path));
}

void save_hierarchy_spec(const HierarchySpec& spec, const std::string& path) {
    write_file_atomic(path, render_hierarchy_spec(spec));
}

} // namespace hml
