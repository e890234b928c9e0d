#pragma once

#include <vector>

#include "vr/rng.hpp"
#include "vr/tensor.hpp"

namespace vr {

// Per-patch attribute grid standing in for an image. Row-major: patch j is
// (j / grid_w, j % grid_w).
struct PatchImage {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<int> color;   // one id per patch
    std::vector<int> shape;   // one id per patch
    std::vector<int> marker;  // 0 = none, 1 / 2 = query markers

    int patches() const { return grid_h * grid_w; }
};

// Normalized [0,1] coordinates, x rightward, y downward, half-open on the
// high edges when mapped to patches.
struct BoundingBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// throws ValueError unless 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1
void validate_box(const BoundingBox& box);

struct FeatureMap {
    Tensor features;  // [L, D]
    int grid_h = 0;
    int grid_w = 0;
};

struct RegionFeatures {
    Tensor features;           // [N, D]
    std::vector<int> indices;  // strictly increasing global patch indices
};

// Frozen random embedding tables playing the role of a pretrained, frozen
// vision encoder. Deterministic given the seed.
struct VisionParams {
    Tensor color_table;   // [n_colors, D]
    Tensor shape_table;   // [n_shapes, D]
    Tensor marker_table;  // [n_markers, D]
    Tensor pos_table;     // [L, D]

    static VisionParams init(int n_colors, int n_shapes, int n_markers, int patches, int dim,
                             uint64_t seed);
};

// features[j] = color emb + shape emb + marker emb + positional emb
FeatureMap encode_image(const PatchImage& img, const VisionParams& params);

// Patches whose cell overlaps the box. A box aligned to grid lines captures
// exactly the cells it covers; the high edge is exclusive.
std::vector<int> box_to_patch_indices(const BoundingBox& box, int grid_h, int grid_w);

// rows of fmap at box_to_patch_indices, gradient flowing to those rows only
RegionFeatures roi_gather(const FeatureMap& fmap, const BoundingBox& box);

}  // namespace vr
