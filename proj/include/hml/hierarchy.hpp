#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace hml {

// Identifies the j-th patch on level i; both are 1-based.
struct PatchId {
    int level = 0;
    int index = 0;

    auto operator<=>(const PatchId&) const = default;
    std::string str() const { return std::to_string(level) + "/" + std::to_string(index); }
};

struct PatchRect {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;

    int bottom() const { return top + height; } // exclusive
    int right() const { return left + width; }  // exclusive
    bool operator==(const PatchRect&) const = default;
};

// Two rectangles are adjacent when their closures meet in more than a point:
// a shared (full or partial) edge, or overlapping interiors. Corner contact
// does not count. For a non-overlapping tiling this reduces to edge adjacency.
bool rects_adjacent(const PatchRect& a, const PatchRect& b);

struct GridLevel {
    int rows = 0;
    int cols = 0;
    bool operator==(const GridLevel&) const = default;
};

struct ExplicitPatch {
    PatchId id;
    PatchRect rect;
    std::optional<PatchId> parent;
    bool operator==(const ExplicitPatch&) const = default;
};

// Describes a patch division either as a per-level grid (each level's rows
// and cols must be integer multiples of the previous level's) or as an
// explicit list of patches with declared parent edges (which may partially
// overlap).
struct HierarchySpec {
    enum class Mode { grid, explicit_list };

    Mode mode = Mode::grid;
    std::vector<GridLevel> levels;        // grid mode
    std::vector<ExplicitPatch> patches;   // explicit mode
    bool rooted = true;                   // false: free forest without a single root

    static HierarchySpec grid(std::vector<GridLevel> levels);
    static HierarchySpec explicit_list(std::vector<ExplicitPatch> patches, bool rooted = true);

    // Parses "1x1,1x2,2x2,4x4,8x8" into grid levels.
    static std::vector<GridLevel> parse_grid_levels(const std::string& text);

    bool operator==(const HierarchySpec&) const = default;
};

// Structured-text spec file (entries `patch = { level = .., index = .., ... }`),
// round-trips losslessly through save/load.
HierarchySpec load_hierarchy_spec(const std::string& path);
void save_hierarchy_spec(const HierarchySpec& spec, const std::string& path);
HierarchySpec parse_hierarchy_spec(const std::string& text);
std::string render_hierarchy_spec(const HierarchySpec& spec);

// Immutable multi-level patch division. All queries are read-only and safe
// for concurrent use.
class PatchHierarchy {
public:
    PatchHierarchy() = default; // empty; assign from build() before use

    static PatchHierarchy build(const HierarchySpec& spec, int image_height, int image_width);

    int depth() const { return depth_; }                        // D
    int patch_count() const { return static_cast<int>(ids_.size()); } // N
    int level_count(int level) const;                           // N_i
    int image_height() const { return image_height_; }
    int image_width() const { return image_width_; }
    const HierarchySpec& spec() const { return spec_; }

    // Patches ordered by (level, index); index is row-major within a grid level.
    const std::vector<PatchId>& patches() const { return ids_; }
    const PatchRect& rect(PatchId p) const;
    bool contains(PatchId p) const;
    // Position of p in patches(); stable across queries.
    int ordinal(PatchId p) const;

    std::vector<PatchId> parents(PatchId p) const;
    std::vector<PatchId> children(PatchId p) const;
    std::vector<PatchId> ancestors(PatchId p) const;
    std::vector<PatchId> descendants(PatchId p) const;
    std::vector<PatchId> adjacent_siblings(PatchId p) const;

    // Column order of the per-patch matching matrix: self, then parents,
    // children, adjacent siblings, each block sorted by (level, index).
    std::vector<PatchId> related_patches(PatchId p) const;

private:
    int checked_ordinal(PatchId p) const;

    HierarchySpec spec_;
    int image_height_ = 0;
    int image_width_ = 0;
    int depth_ = 0;
    std::vector<PatchId> ids_;
    std::vector<PatchRect> rects_;
    std::vector<int> level_counts_;
    std::vector<int> parent_;                    // ordinal or -1
    std::vector<std::vector<int>> children_;     // sorted ordinals
    std::vector<std::vector<int>> siblings_;     // sorted ordinals
};

inline PatchHierarchy build_hierarchy(const HierarchySpec& spec, int image_height,
                                      int image_width) {
    return PatchHierarchy::build(spec, image_height, image_width);
}

} // namespace hml
