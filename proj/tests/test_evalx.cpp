#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dmbn/evalx/experiments.hpp"
#include "dmbn/check/fixtures.hpp"

using namespace dmbn;
using namespace dmbn::evalx;
using nc::Shape;
using nc::Tensor;

namespace {

const sim::Dataset& small_dataset() {
    static const sim::Dataset ds = sim::generate_dataset(3, 2, 5);
    return ds;
}

// T frames of background with a disk at the given pixel centres and,
// optionally, an arm stroke.
Tensor<float> synthetic_frames(const std::vector<std::array<double, 2>>& centres, bool arm) {
    const int n = sim::world::kImageSize;
    std::vector<Tensor<float>> frames;
    for (const auto& c : centres) {
        sim::Image img(Shape{3, n, n});
        for (int r = 0; r < n; ++r) {
            for (int col = 0; col < n; ++col) sim::detail::put(img, r, col, sim::world::kBackground);
        }
        if (arm) sim::detail::stroke(img, {16.0, 30.0}, {4.0, 20.0}, 1.0, sim::world::kArm);
        sim::detail::disk(img, {c[0], c[1]}, 2.0, sim::world::kObject);
        frames.push_back(img);
    }
    return nc::stack(frames);
}

std::vector<std::array<double, 2>> path(std::array<double, 2> from, std::array<double, 2> to, int steps = 10) {
    std::vector<std::array<double, 2>> out;
    for (int k = 0; k < steps; ++k) {
        const double s = static_cast<double>(k) / (steps - 1);
        out.push_back({from[0] + s * (to[0] - from[0]), from[1] + s * (to[1] - from[1])});
    }
    return out;
}

}  // namespace

TEST(Spearman, MatchesReferenceValues) {
    const std::vector<double> x{1, 2, 3, 4, 5}, y{5, 6, 7, 8, 7};
    EXPECT_NEAR(spearman(x, y), 0.8207826816681233, 1e-12);
    const std::vector<double> a{3, 1, 4, 1, 5, 9, 2, 6}, b{2, 7, 1, 8, 2, 8, 1, 8};
    EXPECT_NEAR(spearman(a, b), 0.19885368120992467, 1e-12);
}

TEST(Spearman, MonotoneAndConstantSeries) {
    const std::vector<double> x{1, 2, 3, 4}, up{0.1, 0.5, 2, 9}, down{4, 3, 2, 1}, flat{2, 2, 2, 2};
    EXPECT_DOUBLE_EQ(spearman(x, up), 1.0);
    EXPECT_DOUBLE_EQ(spearman(x, down), -1.0);
    EXPECT_DOUBLE_EQ(spearman(x, flat), 0.0);
    EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{2}), ValueError);
}

TEST(Pca, RankOneCloudHasNoSecondVariance) {
    Eigen::MatrixXd x(20, 3);
    for (int i = 0; i < 20; ++i) {
        const double t = -3.0 + 0.37 * i;
        x.row(i) << 1.0 * t + 5.0, -2.0 * t, 0.5 * t - 1.0;
    }
    const Pca2 p = pca2(x);
    EXPECT_NEAR(p.variance(1), 0.0, 1e-10);
    // Direction (1, -2, 0.5) normalised, signed so the largest entry is positive.
    const double norm = std::sqrt(1.0 + 4.0 + 0.25);
    EXPECT_NEAR(p.components(0, 0), -1.0 / norm, 1e-10);
    EXPECT_NEAR(p.components(1, 0), 2.0 / norm, 1e-10);
    EXPECT_NEAR(p.components(2, 0), -0.5 / norm, 1e-10);
}

TEST(Pca, AxisAlignedVariances) {
    Eigen::MatrixXd x(4, 2);
    x << 2, 0, -2, 0, 0, 1, 0, -1;
    const Pca2 p = pca2(x);
    EXPECT_NEAR(p.variance(0), 8.0 / 3.0, 1e-12);
    EXPECT_NEAR(p.variance(1), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(p.components(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(p.projection(0, 0), 2.0, 1e-12);
}

TEST(MetricsCsv, HeaderIsUnionOfConditionKeys) {
    const std::vector<MetricRow> rows = {
        {"missing", {{"model", "dmbn"}, {"train_size", "10"}}, "mse", 0.25, 3},
        {"missing", {{"model", "mvae"}, {"target", "image"}}, "mse", 1.0 / 3.0, 4},
    };
    std::ostringstream os;
    write_metrics_csv(os, rows);
    EXPECT_EQ(os.str(),
              "experiment,model,train_size,target,metric,value,seed\n"
              "missing,dmbn,10,,mse,0.25,3\n"
              "missing,mvae,,image,mse,0.3333333333333333,4\n");
}

TEST(MetricsCsv, ValuesRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -2.5}) EXPECT_EQ(std::stod(format_value(v)), v);
}

TEST(Behavior, DiskTowardBaseIsEgocentric) {
    const auto frames = synthetic_frames(path({16, 14}, {16, 24}), true);
    const auto b = classify_behavior(frames, 0.0, -1.0, 0.0);
    EXPECT_EQ(b.label, Behavior::egocentric) << b.reason;
    EXPECT_NEAR(b.dy, 10.0, 1e-9);
    EXPECT_NEAR(b.dx, 0.0, 1e-9);
}

TEST(Behavior, DiskWithDemonstratedEffect) {
    const auto frames = synthetic_frames(path({16, 16}, {10, 8}), true);
    const auto b = classify_behavior(frames, -1.0, -1.0, 0.0);
    EXPECT_EQ(b.label, Behavior::effect) << b.reason;
}

TEST(Behavior, StaticDiskWithArmIsNone) {
    const auto frames = synthetic_frames(path({16, 16}, {16, 16}), true);
    const double ref = arm_pixel_count(frames, 0, 0.15f);
    ASSERT_GT(ref, 0.0);
    EXPECT_EQ(classify_behavior(frames, 0.0, -1.0, ref).label, Behavior::none);
}

TEST(Behavior, BackgroundOnlyIsIncoherent) {
    const int n = sim::world::kImageSize;
    Tensor<float> frames(Shape{6, 3, n, n});
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = sim::world::kBackground[(i / (n * n)) % 3];
    const auto b = classify_behavior(frames, 0.0, -1.0, 0.0);
    EXPECT_EQ(b.label, Behavior::incoherent);
    EXPECT_EQ(b.frames_without_object, 6);
}

TEST(Behavior, MissingArmIsIncoherent) {
    const auto frames = synthetic_frames(path({16, 14}, {16, 24}), false);
    EXPECT_EQ(classify_behavior(frames, 0.0, -1.0, 40.0).label, Behavior::incoherent);
}

TEST(Behavior, SidewaysMotionMatchesNeither) {
    const auto frames = synthetic_frames(path({16, 16}, {26, 16}), true);
    EXPECT_EQ(classify_behavior(frames, 0.0, -1.0, 0.0).label, Behavior::incoherent);
}

TEST(Scenario, DemonstrationDirections) {
    const auto sc = canonical_scenarios();
    ASSERT_EQ(sc.size(), 2u);
    const auto up = demo_direction(sc[0]);
    EXPECT_LT(up[1], -3.0);
    EXPECT_NEAR(up[0], 0.0, 1e-6);
    const auto left = demo_direction(sc[1]);
    EXPECT_LT(left[0], -3.0);
    EXPECT_NEAR(left[1], 0.0, 1e-6);
    EXPECT_EQ(sc[0].name(), "opposite/none/pull");
}

TEST(Mirror, LabelIsDeterministic) {
    const model::Dmbn<float> net(check::small_spec(3));
    const double ref = mean_arm_pixels(small_dataset().train(), 0, 0.15f);
    const auto a = mirror_test(net, canonical_scenarios()[0], ref);
    const auto b = mirror_test(net, canonical_scenarios()[0], ref);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.behavior.label, b.behavior.label);
    EXPECT_EQ(a.images.dim(0), sim::timeline::kSteps);
    ASSERT_TRUE(a.joints.has_value());
    EXPECT_EQ(a.joints->dim(0), sim::timeline::kSteps);
}

TEST(Retrieval, ExactTrainingFrameMatchesAtZeroDistance) {
    const auto& ds = small_dataset();
    const model::Dmbn<float> net(check::small_spec(4));
    const auto idx = build_latent_index(net, ds);
    const auto& it = ds.interactions[2];
    const Tensor<float> q = nc::take_row(it.streams[0], 31);
    const Match px = nearest_pixel(q, ds);
    EXPECT_EQ(px.distance, 0.0);
    EXPECT_EQ(px.interaction, 2u);
    const Match lt = nearest_latent(net, idx, q, it.times[31]);
    EXPECT_EQ(lt.distance, 0.0);
    EXPECT_EQ(lt.interaction, 2u);
    EXPECT_EQ(lt.frame, 31);
}

TEST(Retrieval, TiesKeepLowestIndices) {
    sim::Dataset ds = small_dataset();
    ds.interactions[1] = ds.interactions[0];
    const Tensor<float> q = nc::take_row(ds.interactions[0].streams[0], 0);
    // Frame 0 is identical across all interactions (arm at home).
    const Match px = nearest_pixel(q, ds);
    EXPECT_EQ(px.interaction, 0u);
    EXPECT_EQ(px.frame, 0);
}

TEST(Latents, PairingDistancesOnHandExample) {
    std::vector<LatentRow> a(2), b(2);
    a[0].z = {0, 0};
    a[1].z = {1, 0};
    b[0].z = {0, 0};
    b[1].z = {1, 1};
    const auto [paired, mism] = pairing_distances(a, b);
    EXPECT_NEAR(paired, 0.5, 1e-12);
    EXPECT_NEAR(mism, (std::sqrt(2.0) + 1.0) / 2.0, 1e-12);
}

TEST(Latents, ExportRowCountAndLabels) {
    const auto& ds = small_dataset();
    const model::Dmbn<float> net(check::small_spec(5));
    const auto ex = export_latents(net, ds);
    std::size_t steps = 0;
    for (const auto& it : ds.train()) steps += static_cast<std::size_t>(it.steps());
    EXPECT_EQ(ex.rows.size(), 2 * steps);
    EXPECT_EQ(ex.rows.front().modality, "image");
    EXPECT_EQ(ex.rows.back().modality, "joint");
    EXPECT_GT(ex.ratio(), 0.0);
    std::ostringstream os;
    write_latents_csv(os, ex);
    EXPECT_EQ(os.str().rfind("modality,action,interaction,t,component_0,", 0), 0u);
}

TEST(Missing, RowsPerCombinationAndRepeatable) {
    const auto& ds = small_dataset();
    const model::Dmbn<float> dm(check::small_spec(6));
    const mvae::Mvae<float> mv(mvae::from_dmbn_spec(check::small_spec(6)));
    const auto rows = missing_modality_rows(dm, mv, ds, 6);
    EXPECT_EQ(rows.size(), 12u);
    for (const auto& r : rows) {
        EXPECT_TRUE(std::isfinite(r.value));
        EXPECT_GT(r.value, 0.0);
    }
    EXPECT_EQ(rows, missing_modality_rows(dm, mv, ds, 6));
}

TEST(Horizon, OneRowPerModelStepAndMetric) {
    const auto& ds = small_dataset();
    const model::Dmbn<float> dm(check::small_spec(7));
    const mvae::Mvae<float> mv(mvae::from_dmbn_spec(check::small_spec(7)));
    const auto rows = eval_multistep(dm, mv, ds, 7);
    const int horizon = std::max(sim::timeline::kPreContact, sim::timeline::kSteps - 1 - sim::timeline::kPreContact);
    EXPECT_EQ(rows.size(), static_cast<std::size_t>(2 * horizon * 3));
    for (const auto& r : rows) EXPECT_GT(r.value, 0.0);
    const double rho = horizon_spearman(rows, "mvae");
    EXPECT_GE(rho, -1.0);
    EXPECT_LE(rho, 1.0);
}

TEST(Generalization, UnchangedSceneReproducesDatasetInteraction) {
    const auto& ds = small_dataset();
    for (const auto& it : ds.test()) {
        EXPECT_EQ(sim::record_interaction(it.label, it.approach, sim::plan_action(it.label, it.approach)), it);
    }
}

TEST(Generalization, ReportsAngleAndColourRows) {
    const auto& ds = small_dataset();
    const model::Dmbn<float> net(check::small_spec(8));
    const auto rows = eval_generalization(net, ds, {{"none", {}, {}}, {"blue", sim::world::kBlue, {}}}, 8);
    ASSERT_EQ(rows.size(), 6u);
    EXPECT_EQ(rows[0].metric, "approach_error_deg");
    EXPECT_GE(rows[0].value, 0.0);
    EXPECT_LE(rows[0].value, 180.0);
    EXPECT_EQ(rows[2].value, 0.0);  // no variant colour to count
}

TEST(Generalization, ApproachFromGroundTruthJoints) {
    const auto& it = small_dataset().interactions[0];
    EXPECT_LT(angle_difference(approach_from_joints(it.streams[1]), it.approach), 1e-4);
}

TEST(Ablation, CountCellsSumToRunsPerModel) {
    model::TrainConfig tc;
    tc.iterations = 2;
    const auto table = ablate_image_only(small_dataset(), canonical_scenarios(), {0, 1}, tc, {}, 8);
    EXPECT_EQ(table.records.size(), 8u);
    for (const std::string model : {"blended", "image-only"}) {
        int total = 0;
        for (const auto& s : canonical_scenarios()) total += table.count(model, s.name(), true) + table.count(model, s.name(), false);
        EXPECT_EQ(total, 4);
    }
}
