#include "dass/dynamics_mask.hpp"
#include "dass/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace dass;

namespace {

Image textured(int h, int w, int shift_x = 0) {
    Image img(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xs = ((x - shift_x) % w + w) % w;
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = 0.5 + 0.5 * std::sin(0.9 * xs + 1.7 * y * (c + 1) + 0.3 * xs * y);
        }
    return img;
}

}  // namespace

TEST(Flow, IdenticalFramesGiveZero) {
    const Image a = textured(24, 24);
    const Image f = flow_blockmatch(a, a, 8, 4);
    for (double v : f.data) EXPECT_EQ(v, 0.0);
}

TEST(Flow, RecoversTranslation) {
    const Image a = textured(32, 32), b = textured(32, 32, 3);
    const Image f = flow_blockmatch(a, b, 8, 4);
    for (int y = 8; y < 24; ++y)
        for (int x = 8; x < 24; ++x) {
            EXPECT_EQ(f.at(y, x, 0), 3.0);
            EXPECT_EQ(f.at(y, x, 1), 0.0);
        }
}

TEST(Flow, NoiseFlowIsBoundedByRadius) {
    std::mt19937_64 rng(50);
    const Image a = testutil::random_image(rng, 20, 20, 3, 0, 1), b = testutil::random_image(rng, 20, 20, 3, 0, 1);
    const Image f = flow_blockmatch(a, b, 4, 2);
    for (double v : f.data) EXPECT_LE(std::abs(v), 2.0);
}

TEST(DynamicArea, StrictThreshold) {
    Image flow(2, 2, 2);
    flow.at(0, 0, 0) = 2.0;
    flow.at(0, 1, 0) = 1.0;
    flow.at(1, 0, 0) = 0.6;
    flow.at(1, 0, 1) = 0.8;  // magnitude exactly 1
    const BinaryMap m = dynamic_area(flow, 1.0);
    EXPECT_EQ(m.at(0, 0), 1);
    EXPECT_EQ(m.at(0, 1), 0);
    EXPECT_EQ(m.at(1, 0), 0);
    EXPECT_EQ(m.at(1, 1), 0);
    Image uniform(3, 3, 2, 0.0);
    for (int p = 0; p < 9; ++p) uniform.data[p * 2] = 2.0;
    EXPECT_EQ(dynamic_area(uniform, 1.0).count(), 9u);
}

TEST(Refresh, AgeAndCountRules) {
    DynamicsMask m;
    m.created_at = 1;
    m.count = 10;
    EXPECT_FALSE(needs_refresh(m, 6, 10));
    EXPECT_TRUE(needs_refresh(m, 11, 10));
    EXPECT_TRUE(needs_refresh(m, 4, 12));
}

TEST(MaskState, SyncApplyAndSerialize) {
    std::mt19937_64 rng(51);
    GaussianSet set = testutil::random_set(rng, 4);
    DynamicsMask m;
    m.flags = {1, 0, 1, 0};
    m.labels = {2, 5};
    m.created_at = 3;
    m.count = 4;
    apply_flags(m, set);
    EXPECT_TRUE(set.base[0].dynamic);
    EXPECT_FALSE(set.base[1].dynamic);
    set.var.push_back(set.base[0]);
    sync_mask(m, set);
    EXPECT_EQ(m.count, 5u);
    EXPECT_EQ(m.flags.back(), 1);
    EXPECT_EQ(m.dynamic_count(), 3u);
    const DynamicsMask back = deserialize_mask(serialize_mask(m));
    EXPECT_EQ(back.labels, m.labels);
    EXPECT_EQ(back.created_at, 3);
    EXPECT_EQ(back.count, 5u);
    DynamicsMask bad;
    bad.flags = {1};
    EXPECT_THROW(apply_flags(bad, set), Error);
}

TEST(BuildMask, StaticSceneHasNoDynamicGaussians) {
    std::mt19937_64 rng(52);
    GaussianSet set = testutil::random_set(rng, 20, 4);
    for (auto& g : set.base) {
        std::fill(g.identity.begin(), g.identity.end(), 0.0);
        g.identity[1] = 1.0;
    }
    std::vector<Camera> cams = {testutil::random_camera(rng, 24, 24), testutil::random_camera(rng, 24, 24)};
    std::vector<Image> flows = {Image(24, 24, 2), Image(24, 24, 2)};
    const DynamicsMask m = build_mask(set, cams, flows, one_hot_codebook(4), MaskParams{}, 1);
    EXPECT_EQ(m.dynamic_count(), 0u);
    EXPECT_TRUE(m.labels.empty());
}

TEST(BuildMask, MovingLabelIsFlagged) {
    // Two clusters with distinct labels; the flow marks the left half moving.
    GaussianSet set;
    set.id_dim = 4;
    for (int k = 0; k < 10; ++k) {
        GaussianPrimitive g = set.make_primitive();
        const bool left = k < 5;
        g.position = Vec3(left ? -0.6 : 0.6, 0.0, 0.05 * (k % 5) - 0.1);
        g.log_scale = Vec3::Constant(std::log(0.15));
        g.logit_opacity = 3.0;
        g.identity[left ? 2 : 3] = 1.0;
        set.base.push_back(g);
    }
    const Camera cam = Camera::look_at(32, 32, 32, 32, Vec3(0, -4, 0), Vec3::Zero(), Vec3::UnitZ());
    Image flow(32, 32, 2);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 16; ++x) flow.at(y, x, 0) = 2.0;
    const DynamicsMask m = build_mask(set, {cam}, {flow}, one_hot_codebook(4), MaskParams{}, 4);
    EXPECT_EQ(m.labels, (std::set<int>{2}));
    for (int k = 0; k < 10; ++k) EXPECT_EQ(m.flags[k], k < 5 ? 1 : 0);
    EXPECT_EQ(m.created_at, 4);
    EXPECT_EQ(m.count, 10u);
}
