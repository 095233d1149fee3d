#include "dass/error.hpp"
#include "dass/renderer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace dass;

namespace {

Camera front_camera(int w, int h) {
    return Camera::look_at(w, h, w, w, Vec3(0, -4, 0), Vec3::Zero(), Vec3::UnitZ());
}

}  // namespace

TEST(Render, EmptySetIsBlack) {
    GaussianSet set;
    const RenderOutput out = render(front_camera(8, 8), set);
    for (double v : out.rgb.data) EXPECT_EQ(v, 0.0);
    for (double v : out.alpha.data) EXPECT_EQ(v, 0.0);
}

TEST(Render, SingleGaussianPeakMatchesOpacity) {
    GaussianSet set;
    set.id_dim = 2;
    GaussianPrimitive g = set.make_primitive();
    g.logit_opacity = logit(0.7);
    g.log_scale = Vec3::Constant(std::log(0.2));
    g.color = {rgb_to_sh(0.9), rgb_to_sh(0.5), rgb_to_sh(0.1)};
    set.base.push_back(g);
    // The world origin projects onto pixel (cx, cy) = (4, 4) for a 9x9 image.
    const RenderOutput out = render(front_camera(9, 9), set);
    EXPECT_NEAR(out.alpha.at(4, 4), 0.7, 1e-12);
    EXPECT_NEAR(out.rgb.at(4, 4, 0), 0.7 * 0.9, 1e-12);
    EXPECT_NEAR(out.rgb.at(4, 4, 2), 0.7 * 0.1, 1e-12);
}

TEST(Render, MatchesBruteForceCompositor) {
    std::mt19937_64 rng(10);
    for (int n = 0; n < 20; ++n) {
        const Camera cam = testutil::random_camera(rng, 24, 20);
        const GaussianSet set = testutil::random_set(rng, 1 + n % 16, 3, n % 2);
        const RenderOutput out = render(cam, set);
        const auto ref = testutil::brute_force_render(cam, set);
        EXPECT_LT(testutil::max_abs_diff(out.rgb, ref.rgb), 1e-9);
        EXPECT_LT(testutil::max_abs_diff(out.id_feature, ref.id), 1e-9);
        EXPECT_LT(testutil::max_abs_diff(out.alpha, ref.alpha), 1e-9);
    }
}

TEST(Render, DepthTiesBreakByIndex) {
    GaussianSet set;
    set.id_dim = 2;
    GaussianPrimitive a = set.make_primitive();
    a.logit_opacity = logit(0.9);
    a.log_scale = Vec3::Constant(std::log(0.3));
    a.color = {rgb_to_sh(1.0), rgb_to_sh(0.0), rgb_to_sh(0.0)};
    GaussianPrimitive b = a;
    b.color = {rgb_to_sh(0.0), rgb_to_sh(0.0), rgb_to_sh(1.0)};
    set.base = {a, b};
    const RenderOutput out = render(front_camera(9, 9), set);
    EXPECT_GT(out.rgb.at(4, 4, 0), out.rgb.at(4, 4, 2));
}

TEST(Render, BehindCameraAndTransparentAreSkipped) {
    GaussianSet set;
    set.id_dim = 2;
    GaussianPrimitive g = set.make_primitive();
    g.position = Vec3(0, -6, 0);  // behind the camera at y = -4
    g.logit_opacity = 3.0;
    set.base.push_back(g);
    GaussianPrimitive t = set.make_primitive();
    t.logit_opacity = logit(0.5 / 255.0);
    set.base.push_back(t);
    const RenderOutput out = render(front_camera(9, 9), set);
    EXPECT_TRUE(out.contribs.empty());
    EXPECT_FALSE(out.projected[0].visible);
    EXPECT_FALSE(out.projected[1].visible);
}

TEST(Render, IsDeterministic) {
    std::mt19937_64 rng(11);
    const Camera cam = testutil::random_camera(rng, 32, 32);
    const GaussianSet set = testutil::random_set(rng, 30);
    const RenderOutput a = render(cam, set), b = render(cam, set);
    EXPECT_EQ(a.rgb.data, b.rgb.data);
    const Image w = testutil::random_image(rng, 32, 32, 3);
    const GaussianGrads ga = backward(a, w), gb = backward(b, w);
    for (size_t i = 0; i < set.size(); ++i) EXPECT_EQ(ga.position[i], gb.position[i]);
}

TEST(Backward, MatchesFiniteDifferences) {
    std::mt19937_64 rng(12);
    for (int n = 0; n < 4; ++n) {
        const Camera cam = testutil::random_camera(rng, 16, 16);
        const GaussianSet set = testutil::random_set(rng, 6, 3, n % 2);
        const auto res = testutil::renderer_grad_check(cam, set, rng);
        EXPECT_EQ(res.failed, 0) << res.worst;
    }
}

TEST(Backward, RejectsMismatchedGradient) {
    std::mt19937_64 rng(13);
    const Camera cam = testutil::random_camera(rng, 8, 8);
    const RenderOutput out = render(cam, testutil::random_set(rng, 3));
    EXPECT_THROW(backward(out, Image(4, 4, 3)), Error);
    RenderOutput empty;
    empty.camera = cam;
    EXPECT_THROW(backward(empty, Image(8, 8, 3)), Error);
}

TEST(Backward, AccumulatorAveragesNdcGradient) {
    std::mt19937_64 rng(14);
    const Camera cam = testutil::random_camera(rng, 16, 16);
    const GaussianSet set = testutil::random_set(rng, 5);
    const RenderOutput out = render(cam, set);
    GradAccumulator acc;
    acc.reset(set.size());
    const Image w = testutil::random_image(rng, 16, 16, 3);
    const GaussianGrads g1 = backward(out, w, nullptr, &acc);
    const GaussianGrads g2 = backward(out, w, nullptr, &acc);
    for (size_t i = 0; i < set.size(); ++i) {
        if (!g1.contributed[i]) {
            EXPECT_EQ(acc.count[i], 0);
            continue;
        }
        EXPECT_EQ(acc.count[i], 2);
        EXPECT_NEAR(acc.average(i), g1.mean_ndc[i].norm(), 1e-12);
    }
}

TEST(Backward, NdcGradientIsPixelGradientTimesHalfSize) {
    std::mt19937_64 rng(15);
    const Camera cam = testutil::random_camera(rng, 20, 12);
    const GaussianSet set = testutil::random_set(rng, 1);
    const Image w = testutil::random_image(rng, 12, 20, 3);
    const GaussianGrads g = backward(render(cam, set), w);
    ASSERT_TRUE(g.contributed[0]);
    // Shifting the principal point moves the 2D mean and nothing else.
    const double h = 1e-6;
    const auto loss_at = [&](double dcx, double dcy) {
        Camera c = cam;
        c.cx += dcx;
        c.cy += dcy;
        c.update_projection();
        return testutil::dot(render(c, set).rgb, w);
    };
    const double du = (loss_at(h, 0) - loss_at(-h, 0)) / (2 * h);
    const double dv = (loss_at(0, h) - loss_at(0, -h)) / (2 * h);
    EXPECT_TRUE(testutil::grad_close(g.mean_ndc[0].x(), du * 10.0));
    EXPECT_TRUE(testutil::grad_close(g.mean_ndc[0].y(), dv * 6.0));
}

TEST(ErrorMap, ChannelMeanAbsoluteError) {
    Image a(1, 2, 3), b(1, 2, 3);
    a.at(0, 0, 0) = 0.3;
    b.at(0, 1, 2) = 0.6;
    const Image e = error_map(a, b);
    EXPECT_NEAR(e.at(0, 0), 0.1, 1e-15);
    EXPECT_NEAR(e.at(0, 1), 0.2, 1e-15);
}

TEST(Identity, LabelsFromCodebook) {
    const auto book = one_hot_codebook(4);
    const std::vector<double> f = {0.1, 0.2, 0.7, 0.0};
    EXPECT_EQ(id_to_label(f, book), 2);
    const std::vector<double> tie = {0.0, 0.5, 0.5, 0.0};
    EXPECT_EQ(id_to_label(tie, book), 1);
}
