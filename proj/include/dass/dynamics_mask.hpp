#pragma once

#include "dass/gaussian_model.hpp"
#include "dass/geometry.hpp"
#include "dass/image.hpp"

#include <set>
#include <span>
#include <vector>

namespace dass {

// Sum-of-absolute-differences block matching from `prev` to `cur`. Each block
// of `prev` takes the displacement within +-radius that best matches `cur`
// (ties go to the smallest displacement); pixels inherit their block's flow.
Image flow_blockmatch(const Image& prev, const Image& cur, int block, int radius);

// Pixels whose flow magnitude exceeds gamma.
BinaryMap dynamic_area(const Image& flow, double gamma);

struct DynamicsMask {
    std::vector<uint8_t> flags;  // one per gaussian, base then var
    std::set<int> labels;
    int created_at = 0;
    size_t count = 0;  // gaussian count the flags describe

    size_t dynamic_count() const;
};

inline constexpr int kMaskRefreshPeriod = 10;

struct MaskParams {
    double gamma_op = 1.0;
    double rho = 0.3;
};

// Identity labels whose rendered footprint lies at least `rho` inside the
// dynamic area of some view; label 0 (unlabeled) never counts.
std::set<int> dynamic_labels(const GaussianSet& set, const std::vector<Camera>& cams,
                             const std::vector<Image>& flows, const std::vector<std::vector<double>>& codebook,
                             const MaskParams& params);

// Flags every gaussian whose identity label is dynamic. `flows` align with
// `cams` (flow from the previous to the current frame of each view).
DynamicsMask build_mask(const GaussianSet& set, const std::vector<Camera>& cams, const std::vector<Image>& flows,
                        const std::vector<std::vector<double>>& codebook, const MaskParams& params, int timestep);

// Block-matching flows for each view, then build_mask.
DynamicsMask build_mask(const GaussianSet& set, const std::vector<Camera>& cams,
                        const std::vector<Image>& prev_frames, const std::vector<Image>& cur_frames,
                        const std::vector<std::vector<double>>& codebook, const MaskParams& params, int timestep);

bool needs_refresh(const DynamicsMask& mask, int timestep, size_t gaussian_count,
                   int period = kMaskRefreshPeriod);

// Copies the mask flags into the primitives' dynamic field.
void apply_flags(const DynamicsMask& mask, GaussianSet& set);
// Rebuilds the flag vector from the primitives after the set changed shape.
void sync_mask(DynamicsMask& mask, const GaussianSet& set);

std::vector<uint8_t> serialize_mask(const DynamicsMask& mask);
DynamicsMask deserialize_mask(std::span<const uint8_t> bytes);

}  // namespace dass
