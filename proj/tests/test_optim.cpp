#include "dass/error.hpp"
#include "dass/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace dass;

TEST(Adam, ZeroGradientLeavesParameters) {
    ParamGroup g("p", {1.0, -2.0}, 0.1);
    adam_step(g, std::vector<double>{0.0, 0.0});
    EXPECT_EQ(g.params[0], 1.0);
    EXPECT_EQ(g.params[1], -2.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParamGroup g("p", {0.5}, 0.1);
    adam_step(g, std::vector<double>{1.0});
    // m_hat = 1, v_hat = 1: step = lr / (1 + eps)
    EXPECT_NEAR(g.params[0], 0.5 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, MatchesHandComputedTrajectory) {
    ParamGroup g("p", {0.5}, 0.1);
    const double grads[] = {1.0, -0.5, 2.0};
    const double expect[] = {0.400000001, 0.37336629737090316, 0.3075551378428032};
    for (int k = 0; k < 3; ++k) {
        adam_step(g, std::vector<double>{grads[k]});
        EXPECT_NEAR(g.params[0], expect[k], 1e-12);
    }
}

TEST(Adam, ConvergesOnQuadratic) {
    ParamGroup g("x", {1.0}, 0.05);
    for (int k = 0; k < 1000; ++k) adam_step(g, std::vector<double>{2.0 * g.params[0]});
    EXPECT_LT(std::abs(g.params[0]), 0.05);
}

TEST(Adam, ErrorsNameTheGroup) {
    ParamGroup g("field.dyn.tables", {1.0}, 0.1);
    EXPECT_THROW(adam_step(g, std::vector<double>{1.0, 2.0}), Error);
    try {
        adam_step(g, std::vector<double>{std::numeric_limits<double>::quiet_NaN()});
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("field.dyn.tables"), std::string::npos);
    }
}

TEST(ParamGroup, KeepRowsAndAppend) {
    ParamGroup g("p", {1, 2, 3, 4, 5, 6}, 0.1);
    adam_step(g, std::vector<double>{1, 1, 1, 1, 1, 1});
    const double m_keep = g.m[2];
    g.keep_rows({false, true, false}, 2);
    ASSERT_EQ(g.params.size(), 2u);
    EXPECT_EQ(g.m[0], m_keep);
    g.append(std::vector<double>{7, 8});
    ASSERT_EQ(g.params.size(), 4u);
    EXPECT_EQ(g.m[3], 0.0);
    EXPECT_EQ(g.v[2], 0.0);
    EXPECT_THROW(g.keep_rows({true}, 2), Error);
}
