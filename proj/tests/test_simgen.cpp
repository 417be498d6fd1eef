#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "dmbn/simgen/dataset.hpp"

using namespace dmbn;
using namespace dmbn::sim;

namespace {

constexpr double kPi = std::numbers::pi;
const ArmGeometry kUnit{1.0, 1.0};

struct Centroid {
    double col = 0.0, row = 0.0;
    int count = 0;
};

Centroid color_centroid(const Image& img, const Rgb& color) {
    Centroid c;
    for (int r = 0; r < img.dim(1); ++r) {
        for (int col = 0; col < img.dim(2); ++col) {
            bool match = true;
            for (int ch = 0; ch < 3; ++ch) match = match && std::abs(img.at(ch, r, col) - color[ch]) < 1e-6f;
            if (match) {
                c.col += col;
                c.row += r;
                ++c.count;
            }
        }
    }
    if (c.count) {
        c.col /= c.count;
        c.row /= c.count;
    }
    return c;
}

std::string serialize(const Dataset& ds) {
    std::ostringstream os;
    save_dataset(ds, os);
    return os.str();
}

}  // namespace

TEST(Kinematics, ForwardExamples) {
    auto a = forward_kinematics(0, 0, kUnit);
    EXPECT_NEAR(a.tip.x, 2.0, 1e-15);
    EXPECT_NEAR(a.tip.y, 0.0, 1e-15);
    a = forward_kinematics(kPi / 2, 0, kUnit);
    EXPECT_NEAR(a.tip.x, 0.0, 1e-15);
    EXPECT_NEAR(a.tip.y, 2.0, 1e-15);
    a = forward_kinematics(kPi / 2, -kPi / 2, kUnit);
    EXPECT_NEAR(a.elbow.x, 0.0, 1e-15);
    EXPECT_NEAR(a.elbow.y, 1.0, 1e-15);
    EXPECT_NEAR(a.tip.x, 1.0, 1e-15);
    EXPECT_NEAR(a.tip.y, 1.0, 1e-15);
}

TEST(Kinematics, ForwardUsesBasePose) {
    const Pose2 base{{0.5, -1.0}, kPi / 2};
    const auto a = forward_kinematics(0, 0, kUnit, base);
    EXPECT_NEAR(a.tip.x, 0.5, 1e-12);
    EXPECT_NEAR(a.tip.y, 1.0, 1e-12);
}

TEST(Kinematics, InverseExamples) {
    auto q = inverse_kinematics({2, 0}, kUnit);
    EXPECT_NEAR(q.theta1, 0.0, 1e-9);
    EXPECT_NEAR(q.theta2, 0.0, 1e-9);
    q = inverse_kinematics({std::sqrt(2.0), 0}, kUnit);
    EXPECT_NEAR(q.theta1, kPi / 4, 1e-9);
    EXPECT_NEAR(q.theta2, -kPi / 2, 1e-9);
    EXPECT_THROW(inverse_kinematics({3, 0}, kUnit), IkError);
    EXPECT_THROW(inverse_kinematics({0, 0}, kUnit), IkError);
}

TEST(Kinematics, IkErrorNamesDistanceAndAnnulus) {
    try {
        inverse_kinematics({3, 0}, kUnit);
        FAIL();
    } catch (const IkError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("distance 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("annulus"), std::string::npos) << msg;
    }
}

TEST(Kinematics, ForwardInverseRoundTrip) {
    nc::Rng rng(3);
    const ArmGeometry arm{0.6, 0.45};
    for (int i = 0; i < 2000; ++i) {
        const double d = rng.uniform(0.15 + 1e-5, 1.05 - 1e-5);
        const Vec2 target = direction(rng.uniform(-kPi, kPi)) * d;
        const auto q = inverse_kinematics(target, arm);
        EXPECT_LE(q.theta2, 0.0);
        const auto fk = forward_kinematics(q.theta1, q.theta2, arm);
        ASSERT_NEAR(fk.tip.x, target.x, 1e-9);
        ASSERT_NEAR(fk.tip.y, target.y, 1e-9);
    }
}

TEST(Planner, PushDisplacesObjectAlongApproach) {
    for (double phi : {0.0, 1.0, 2.5, 4.0, 5.5}) {
        const auto scenes = plan_action(Action::push, phi);
        ASSERT_EQ(scenes.size(), static_cast<std::size_t>(timeline::kSteps));
        const Vec2 moved = scenes.back().object - scenes.front().object;
        EXPECT_NEAR(moved.x, 0.3 * std::cos(phi), 1e-6);
        EXPECT_NEAR(moved.y, 0.3 * std::sin(phi), 1e-6);
        for (const auto& s : scenes) EXPECT_EQ(s.aperture, 1.0);
    }
}

TEST(Planner, PushTipFollowsObject) {
    const auto scenes = plan_action(Action::push, 0.0);
    const auto& last = scenes.back();
    const auto fk = forward_kinematics(last.theta1, last.theta2, world::kArmGeometry, last.base);
    EXPECT_NEAR(fk.tip.x, last.object.x - timeline::kPushContactOffset, 1e-9);
    EXPECT_NEAR(fk.tip.y, last.object.y, 1e-9);
}

TEST(Planner, GraspEndsClosedWithObjectAtTip) {
    for (double phi : {0.3, 1.7, 3.3, 5.0}) {
        const auto scenes = plan_action(Action::grasp, phi);
        const auto& last = scenes.back();
        EXPECT_EQ(last.aperture, 0.0);
        const auto fk = forward_kinematics(last.theta1, last.theta2, world::kArmGeometry, last.base);
        EXPECT_NEAR(fk.tip.x, last.object.x, 1e-9);
        EXPECT_NEAR(fk.tip.y, last.object.y, 1e-9);
        // Retracted 0.3 toward the own base.
        const Vec2 moved = last.object - scenes.front().object;
        EXPECT_NEAR(moved.norm(), 0.3, 1e-9);
        EXPECT_LT(moved.y, 0.0);
    }
}

TEST(Render, ObjectAtCenterProjectsToImageCenter) {
    SceneState s;
    s.theta1 = -0.6;
    s.theta2 = -0.4;
    const auto c = color_centroid(render_frame(s), world::kObject);
    ASSERT_GT(c.count, 0);
    EXPECT_NEAR(c.col, 16.0, 0.5);
    EXPECT_NEAR(c.row, 16.0, 0.5);
}

TEST(Render, ValuesInUnitRangeAndDeterministic) {
    const auto scenes = plan_action(Action::grasp, 2.0);
    const Image a = render_frame(scenes[30]);
    EXPECT_EQ(a.shape(), (nc::Shape{3, 32, 32}));
    for (float v : a) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(a, render_frame(scenes[30]));
}

TEST(Render, HideArmRemovesArmAndBase) {
    const auto scenes = plan_action(Action::push, 1.0);
    for (const auto& s : scenes) {
        const Image full = render_frame(s, Viewpoint::opposite);
        const Image hidden = render_frame(s, Viewpoint::opposite, Occlusion::hide_arm);
        EXPECT_GT(count_color(full, world::kArm), 0);
        EXPECT_EQ(count_color(hidden, world::kArm), 0);
        EXPECT_EQ(count_color(hidden, world::kBase), 0);
        EXPECT_GT(count_color(hidden, world::kGripper), 0);
    }
}

TEST(Render, HideBaseKeepsArm) {
    const auto s = plan_action(Action::push, 1.0)[10];
    const Image img = render_frame(s, Viewpoint::own, Occlusion::hide_base);
    EXPECT_EQ(count_color(img, world::kBase), 0);
    EXPECT_GT(count_color(img, world::kArm), 0);
}

TEST(Render, OppositeViewIsHalfTurnOfOwnView) {
    const auto scenes = plan_action(Action::push, 0.8);
    for (int k : {0, 25, 49}) {
        const Image own = render_frame(scenes[k]);
        const Image opp = render_frame(scenes[k], Viewpoint::opposite);
        for (const Rgb& color : {world::kObject, world::kBase}) {
            const auto a = color_centroid(own, color);
            const auto b = color_centroid(opp, color);
            ASSERT_GT(a.count, 0);
            // The table centre projects to pixel 16, so a half turn maps c to 32 - c.
            EXPECT_NEAR(b.col, 32.0 - a.col, 1.0);
            EXPECT_NEAR(b.row, 32.0 - a.row, 1.0);
        }
    }
}

TEST(Render, SideViewsPlaceBaseOnNamedSide) {
    SceneState s;
    const auto left = color_centroid(render_frame(s, Viewpoint::left), world::kBase);
    const auto right = color_centroid(render_frame(s, Viewpoint::right), world::kBase);
    EXPECT_LT(left.col, 16.0);
    EXPECT_GT(right.col, 16.0);
    EXPECT_GT(color_centroid(render_frame(s), world::kBase).row, 16.0);
    EXPECT_LT(color_centroid(render_frame(s, Viewpoint::opposite), world::kBase).row, 16.0);
}

TEST(Variant, ColorOverrideKeepsGeometry) {
    SceneState s;
    const auto v = variant_scene(s, world::kBlue);
    EXPECT_EQ(v.object, s.object);
    EXPECT_EQ(v.object_radius, s.object_radius);
    EXPECT_EQ(v.theta1, s.theta1);
    const Image img = render_frame(v);
    EXPECT_EQ(count_color(img, world::kObject), 0);
    EXPECT_EQ(count_color(img, world::kBlue), count_color(render_frame(s), world::kObject));
}

TEST(Variant, DoubleRadiusQuadruplesArea) {
    SceneState s;
    s.theta1 = -1.2;  // keep the arm clear of the disk
    s.object = {0.3, 0.4};
    const auto base = color_centroid(render_frame(s), world::kObject);
    const auto big = color_centroid(render_frame(variant_scene(s, std::nullopt, 2 * s.object_radius)), world::kObject);
    EXPECT_NEAR(static_cast<double>(big.count) / base.count, 4.0, 0.4);
    EXPECT_NEAR(big.col, base.col, 0.5);
    EXPECT_NEAR(big.row, base.row, 0.5);
}

TEST(Variant, NoOverrideIsIdentity) {
    SceneState s;
    s.theta2 = -0.7;
    EXPECT_EQ(variant_scene(s), s);
}

TEST(Dataset, StandardSizeAndSplit) {
    const Dataset ds = generate_dataset(50, 50, 1);
    ASSERT_EQ(ds.interactions.size(), 100u);
    EXPECT_EQ(ds.split, 80u);
    EXPECT_EQ(ds.train().size(), 80u);
    EXPECT_EQ(ds.test().size(), 20u);
    int pushes = 0;
    for (const auto& it : ds.interactions) {
        pushes += it.label == Action::push;
        ASSERT_EQ(it.steps(), 50);
        EXPECT_EQ(it.times.front(), 0.0f);
        EXPECT_EQ(it.times.back(), 1.0f);
        for (int k = 1; k < it.steps(); ++k) EXPECT_LT(it.times[k - 1], it.times[k]);
        for (float v : it.streams[0]) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
        for (float v : it.streams[1]) ASSERT_TRUE(std::isfinite(v));
        EXPECT_GE(it.approach, 0.0);
        EXPECT_LT(it.approach, 2 * kPi);
    }
    EXPECT_EQ(pushes, 50);
}

TEST(Dataset, SameSeedSameBytes) {
    EXPECT_EQ(serialize(generate_dataset(4, 3, 9)), serialize(generate_dataset(4, 3, 9)));
    EXPECT_NE(serialize(generate_dataset(4, 3, 9)), serialize(generate_dataset(4, 3, 10)));
}

TEST(Dataset, SinglePush) {
    const Dataset ds = generate_dataset(1, 0, 123);
    ASSERT_EQ(ds.interactions.size(), 1u);
    EXPECT_EQ(ds.interactions[0].label, Action::push);
    EXPECT_EQ(ds.split, 1u);
    EXPECT_THROW(generate_dataset(0, 0, 1), ValueError);
}

TEST(Dataset, FileRoundTripIsBitExact) {
    const Dataset ds = generate_dataset(3, 2, 5);
    const std::string bytes = serialize(ds);
    std::istringstream is(bytes);
    const Dataset back = load_dataset(is);
    EXPECT_EQ(back, ds);
    EXPECT_EQ(serialize(back), bytes);
}

TEST(Dataset, CorruptMagicNamesExpected) {
    std::string bytes = serialize(generate_dataset(1, 0, 1));
    bytes[0] = 'X';
    std::istringstream is(bytes);
    try {
        load_dataset(is);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("MMDS"), std::string::npos);
    }
    std::istringstream truncated(serialize(generate_dataset(1, 0, 1)).substr(0, 60));
    EXPECT_THROW(load_dataset(truncated), FormatError);
}

TEST(Dataset, TrainSizeSubset) {
    const Dataset ds = generate_dataset(10, 10, 2);
    const Dataset small = with_train_size(ds, 5);
    EXPECT_EQ(small.split, 5u);
    EXPECT_EQ(small.test().size(), ds.test().size());
    EXPECT_EQ(small.train()[4], ds.train()[4]);
    EXPECT_THROW(with_train_size(ds, 17), ValueError);
}
