#include "vr/vision.hpp"

#include <cmath>

#include "vr/common.hpp"
#include "vr/ops.hpp"

namespace vr {

void validate_box(const BoundingBox& box) {
    const bool finite = std::isfinite(box.x0) && std::isfinite(box.y0) &&
                        std::isfinite(box.x1) && std::isfinite(box.y1);
    if (!finite || !(box.x0 >= 0.0 && box.x0 < box.x1 && box.x1 <= 1.0) ||
        !(box.y0 >= 0.0 && box.y0 < box.y1 && box.y1 <= 1.0)) {
        throw ValueError("invalid box (" + std::to_string(box.x0) + "," +
                         std::to_string(box.y0) + "," + std::to_string(box.x1) + "," +
                         std::to_string(box.y1) + ")");
    }
}

VisionParams VisionParams::init(int n_colors, int n_shapes, int n_markers, int patches, int dim,
                                uint64_t seed) {
    Rng rng(seed);
    VisionParams p;
    // frozen: requires_grad stays false, the optimizer never sees these
    p.color_table = Tensor::randn({n_colors, dim}, rng, 1.0);
    p.shape_table = Tensor::randn({n_shapes, dim}, rng, 1.0);
    p.marker_table = Tensor::randn({n_markers, dim}, rng, 1.0);
    p.pos_table = Tensor::randn({patches, dim}, rng, 1.0);
    return p;
}

FeatureMap encode_image(const PatchImage& img, const VisionParams& params) {
    const int L = img.patches();
    if (static_cast<int>(img.color.size()) != L || static_cast<int>(img.shape.size()) != L ||
        static_cast<int>(img.marker.size()) != L) {
        throw ValueError("image attribute arrays do not cover the " + std::to_string(L) +
                         "-patch grid");
    }
    for (int j = 0; j < L; ++j) {
        if (img.color[j] < 0 || img.color[j] >= params.color_table.rows() ||
            img.shape[j] < 0 || img.shape[j] >= params.shape_table.rows() ||
            img.marker[j] < 0 || img.marker[j] >= params.marker_table.rows()) {
            throw ValueError("attribute id out of range at patch " + std::to_string(j));
        }
    }
    if (params.pos_table.rows() != L) {
        throw ShapeError("positional table covers " + std::to_string(params.pos_table.rows()) +
                         " patches, image has " + std::to_string(L));
    }
    Tensor cs = ops::add(ops::gather_rows(params.color_table, img.color),
                         ops::gather_rows(params.shape_table, img.shape));
    Tensor cm = ops::add(cs, ops::gather_rows(params.marker_table, img.marker));
    FeatureMap fmap;
    fmap.features = ops::add(cm, params.pos_table);
    fmap.grid_h = img.grid_h;
    fmap.grid_w = img.grid_w;
    return fmap;
}

std::vector<int> box_to_patch_indices(const BoundingBox& box, int grid_h, int grid_w) {
    validate_box(box);
    if (grid_h < 1 || grid_w < 1) throw ValueError("grid must be at least 1x1");
    // cell ranges touched by the box; the nudge keeps grid-aligned edges exact
    const double nudge = 1e-9;
    const int c0 = std::max(0, static_cast<int>(std::floor(box.x0 * grid_w + nudge)));
    const int c1 = std::min(grid_w - 1, static_cast<int>(std::ceil(box.x1 * grid_w - nudge)) - 1);
    const int r0 = std::max(0, static_cast<int>(std::floor(box.y0 * grid_h + nudge)));
    const int r1 = std::min(grid_h - 1, static_cast<int>(std::ceil(box.y1 * grid_h - nudge)) - 1);
    std::vector<int> out;
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) out.push_back(r * grid_w + c);
    }
    if (out.empty()) {
        throw ValueError("box captures no patches on a " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w) + " grid");
    }
    return out;
}

RegionFeatures roi_gather(const FeatureMap& fmap, const BoundingBox& box) {
    RegionFeatures region;
    region.indices = box_to_patch_indices(box, fmap.grid_h, fmap.grid_w);
    region.features = ops::gather_rows(fmap.features, region.indices);
    return region;
}

}  // namespace vr
