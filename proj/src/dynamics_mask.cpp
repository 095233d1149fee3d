#include "dass/dynamics_mask.hpp"

#include "dass/binary_io.hpp"
#include "dass/error.hpp"
#include "dass/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dass {

Image flow_blockmatch(const Image& prev, const Image& cur, int block, int radius) {
    if (!prev.same_shape(cur)) throw Error("flow_blockmatch: frame shapes differ");
    if (block < 1 || radius < 0) throw Error("flow_blockmatch: invalid block/radius");
    const int H = prev.height, W = prev.width, C = prev.channels;
    Image flow(H, W, 2);
    const int by_count = (H + block - 1) / block, bx_count = (W + block - 1) / block;
#pragma omp parallel for schedule(dynamic)
    for (int by = 0; by < by_count; ++by) {
        for (int bx = 0; bx < bx_count; ++bx) {
            const int y0 = by * block, y1 = std::min(H, y0 + block);
            const int x0 = bx * block, x1 = std::min(W, x0 + block);
            double best = std::numeric_limits<double>::infinity();
            int best_r2 = std::numeric_limits<int>::max();
            int bdx = 0, bdy = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    double sad = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const int yy = std::clamp(y + dy, 0, H - 1);
                        for (int x = x0; x < x1; ++x) {
                            const int xx = std::clamp(x + dx, 0, W - 1);
                            for (int c = 0; c < C; ++c) sad += std::abs(prev.at(y, x, c) - cur.at(yy, xx, c));
                        }
                    }
                    const int r2 = dx * dx + dy * dy;
                    if (sad < best || (sad == best && r2 < best_r2)) {
                        best = sad;
                        best_r2 = r2;
                        bdx = dx;
                        bdy = dy;
                    }
                }
            }
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    flow.at(y, x, 0) = bdx;
                    flow.at(y, x, 1) = bdy;
                }
        }
    }
    return flow;
}

BinaryMap dynamic_area(const Image& flow, double gamma) {
    BinaryMap area(flow.height, flow.width);
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x)
            area.at(y, x) = std::hypot(flow.at(y, x, 0), flow.at(y, x, 1)) > gamma ? 1 : 0;
    return area;
}

size_t DynamicsMask::dynamic_count() const {
    return static_cast<size_t>(std::count(flags.begin(), flags.end(), uint8_t{1}));
}

std::set<int> dynamic_labels(const GaussianSet& set, const std::vector<Camera>& cams,
                             const std::vector<Image>& flows, const std::vector<std::vector<double>>& codebook,
                             const MaskParams& params) {
    if (flows.size() != cams.size()) throw Error("build_mask: one flow field per camera required");
    std::set<int> labels;
    for (size_t v = 0; v < cams.size(); ++v) {
        const Camera& cam = cams[v];
        if (flows[v].height != cam.height || flows[v].width != cam.width)
            throw Error("build_mask: flow dimensions do not match camera");
        const BinaryMap area = dynamic_area(flows[v], params.gamma_op);
        const RenderOutput out = render(cam, set);
        std::map<int, std::pair<size_t, size_t>> stats;  // label -> (inside, total)
        const int K = out.id_feature.channels;
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                if (out.alpha.at(y, x) <= 0.5) continue;
                const std::span<const double> f(out.id_feature.data.data() + (static_cast<size_t>(y) * cam.width + x) * K, static_cast<size_t>(K));
                const int l = id_to_label(f, codebook);
                if (l == 0) continue;
                auto& s = stats[l];
                s.second += 1;
                s.first += area.at(y, x);
            }
        for (const auto& [l, s] : stats)
            if (s.second > 0 && static_cast<double>(s.first) >= params.rho * static_cast<double>(s.second))
                labels.insert(l);
    }
    return labels;
}

DynamicsMask build_mask(const GaussianSet& set, const std::vector<Camera>& cams, const std::vector<Image>& flows,
                        const std::vector<std::vector<double>>& codebook, const MaskParams& params, int timestep) {
    DynamicsMask mask;
    mask.labels = dynamic_labels(set, cams, flows, codebook, params);
    mask.created_at = timestep;
    mask.count = set.size();
    mask.flags.assign(set.size(), 0);
    for (size_t i = 0; i < set.size(); ++i) {
        const auto& e = set[i].identity;
        const int l = id_to_label(e, codebook);
        mask.flags[i] = mask.labels.count(l) ? 1 : 0;
    }
    return mask;
}

DynamicsMask build_mask(const GaussianSet& set, const std::vector<Camera>& cams,
                        const std::vector<Image>& prev_frames, const std::vector<Image>& cur_frames,
                        const std::vector<std::vector<double>>& codebook, const MaskParams& params, int timestep) {
    if (prev_frames.size() != cams.size() || cur_frames.size() != cams.size())
        throw Error("build_mask: one frame pair per camera required");
    std::vector<Image> flows(cams.size());
    for (size_t v = 0; v < cams.size(); ++v) flows[v] = flow_blockmatch(prev_frames[v], cur_frames[v], 8, 4);
    return build_mask(set, cams, flows, codebook, params, timestep);
}

bool needs_refresh(const DynamicsMask& mask, int timestep, size_t gaussian_count, int period) {
    return timestep - mask.created_at >= period || gaussian_count != mask.count;
}

void apply_flags(const DynamicsMask& mask, GaussianSet& set) {
    if (mask.flags.size() != set.size()) throw Error("apply_flags: mask does not match the gaussian set");
    for (size_t i = 0; i < set.size(); ++i) set[i].dynamic = mask.flags[i] != 0;
}

void sync_mask(DynamicsMask& mask, const GaussianSet& set) {
    mask.flags.resize(set.size());
    for (size_t i = 0; i < set.size(); ++i) mask.flags[i] = set[i].dynamic ? 1 : 0;
    mask.count = set.size();
}

std::vector<uint8_t> serialize_mask(const DynamicsMask& mask) {
    io::Writer w;
    w.i64(mask.created_at);
    w.i64(static_cast<int64_t>(mask.count));
    w.u32(static_cast<uint32_t>(mask.labels.size()));
    for (int l : mask.labels) w.u32(static_cast<uint32_t>(l));
    return w.take();
}

DynamicsMask deserialize_mask(std::span<const uint8_t> bytes) {
    io::Reader r(bytes);
    DynamicsMask mask;
    mask.created_at = static_cast<int>(r.i64());
    mask.count = static_cast<size_t>(r.i64());
    const uint32_t n = r.u32();
    for (uint32_t k = 0; k < n; ++k) mask.labels.insert(static_cast<int>(r.u32()));
    return mask;
}

}  // namespace dass
