#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "posefuse/augment.hpp"
#include "test_util.hpp"

using namespace posefuse;

namespace {

// Three keypoints in a chain: root -> top is the torso bone, top -> tip the
// measured limb. Torso length equals the root-top distance, so the first
// bone's length ratio is identically 1.
SkeletonSpec chain_skeleton() {
    SkeletonSpec sk;
    sk.name = "chain3";
    sk.keypoint_names = {"root", "top", "tip"};
    sk.limb_pairs = {{0, 1}, {1, 2}};
    sk.oks_sigmas = {0.1, 0.1, 0.1};
    sk.torso_top = {1};
    sk.torso_bottom = {0};
    return sk;
}

// Upright chain pose with a tip bone of `ratio` torso lengths.
PersonPose chain_pose(double ratio, double cx = 0.0, double cy = 0.0, double torso = 10.0) {
    PersonPose pose;
    pose.score = 1.0;
    pose.image_id = 1;
    pose.keypoints = {Keypoint{cx, cy, kLabeledVisible, 1.0}, Keypoint{cx, cy + torso, kLabeledVisible, 1.0},
                      Keypoint{cx, cy + torso + ratio * torso, kLabeledVisible, 1.0}};
    return pose;
}

double bone_length(const PersonPose& pose, int a, int b) {
    const Keypoint& ka = pose.keypoints[static_cast<std::size_t>(a)];
    const Keypoint& kb = pose.keypoints[static_cast<std::size_t>(b)];
    return std::hypot(ka.x - kb.x, ka.y - kb.y);
}

}  // namespace

TEST(TransformPose, IdentityParametersCopyBitwise) {
    const SkeletonSpec sk = coco17_skeleton();
    const PersonPose pose = testutil::person_at(sk, 300, 200, 0.85);
    TransformParams params;
    params.limb_rotation_max = 0.0;
    params.limb_scale_range = {1.0, 1.0};
    params.seed = 17;
    const PersonPose out = transform_pose(pose, sk, params);
    ASSERT_EQ(out.keypoints.size(), pose.keypoints.size());
    for (std::size_t j = 0; j < pose.keypoints.size(); ++j) {
        EXPECT_EQ(out.keypoints[j].x, pose.keypoints[j].x);
        EXPECT_EQ(out.keypoints[j].y, pose.keypoints[j].y);
        EXPECT_EQ(out.keypoints[j].v, pose.keypoints[j].v);
        EXPECT_EQ(out.keypoints[j].confidence, pose.keypoints[j].confidence);
    }
    EXPECT_EQ(out.score, pose.score);
    EXPECT_EQ(out.image_id, pose.image_id);
}

TEST(TransformPose, SingleBoneRotationMatchesHandComputation) {
    SkeletonSpec sk;
    sk.name = "stick";
    sk.keypoint_names = {"a", "b"};
    sk.limb_pairs = {{0, 1}};
    sk.oks_sigmas = {0.1, 0.1};

    PersonPose pose;
    pose.score = 1.0;
    pose.keypoints = {Keypoint{0.0, 0.0, kLabeledVisible, 1.0}, Keypoint{10.0, 0.0, kLabeledVisible, 1.0}};

    TransformParams params;
    params.limb_rotation_max = 0.5;
    params.limb_scale_range = {1.0, 1.0};
    params.seed = 99;

    const PersonPose out = transform_pose(pose, sk, params);

    Rng replica(99);
    const double theta = replica.uniform(-0.5, 0.5);
    EXPECT_DOUBLE_EQ(out.keypoints[1].x, std::cos(theta) * 10.0);
    EXPECT_DOUBLE_EQ(out.keypoints[1].y, std::sin(theta) * 10.0);
    EXPECT_DOUBLE_EQ(out.keypoints[0].x, 0.0);
    EXPECT_DOUBLE_EQ(out.keypoints[0].y, 0.0);
}

TEST(TransformPose, TreeBoneLengthsScaleWithinTheConfiguredRange) {
    // The COCO limb graph has cycles; only the oriented tree bones carry a
    // single scale factor, so bound those.
    const SkeletonSpec sk = coco17_skeleton();
    const PersonPose pose = testutil::person_at(sk, 0, 0);
    const auto edges = detail::kinematic_tree(sk);
    ASSERT_FALSE(edges.empty());

    TransformParams params;
    params.limb_rotation_max = 0.4;
    params.limb_scale_range = {0.8, 1.2};

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        params.seed = seed;
        const PersonPose out = transform_pose(pose, sk, params);
        for (const auto& e : edges) {
            const double before = bone_length(pose, e.parent, e.child);
            const double after = bone_length(out, e.parent, e.child);
            if (before < 1e-9) continue;
            EXPECT_GE(after / before, 0.8 - 1e-9) << "seed " << seed;
            EXPECT_LE(after / before, 1.2 + 1e-9) << "seed " << seed;
        }
    }
}

TEST(TransformPose, RotationOnlyPreservesBoneLengths) {
    const SkeletonSpec sk = chain_skeleton();
    const PersonPose pose = chain_pose(0.8);
    TransformParams params;
    params.limb_rotation_max = 0.5;
    params.limb_scale_range = {1.0, 1.0};
    params.seed = 7;
    const PersonPose out = transform_pose(pose, sk, params);
    EXPECT_NEAR(bone_length(out, 0, 1), bone_length(pose, 0, 1), 1e-9);
    EXPECT_NEAR(bone_length(out, 1, 2), bone_length(pose, 1, 2), 1e-9);
    // But the pose did change.
    EXPECT_NE(out.keypoints[2].x, pose.keypoints[2].x);
}

TEST(TransformPose, DeterministicInTheSeed) {
    const SkeletonSpec sk = coco17_skeleton();
    const PersonPose pose = testutil::person_at(sk, 100, 100);
    TransformParams params;
    params.seed = 5;
    const PersonPose a = transform_pose(pose, sk, params);
    const PersonPose b = transform_pose(pose, sk, params);
    for (std::size_t j = 0; j < a.keypoints.size(); ++j) {
        ASSERT_EQ(a.keypoints[j].x, b.keypoints[j].x);
        ASSERT_EQ(a.keypoints[j].y, b.keypoints[j].y);
    }
    params.seed = 6;
    const PersonPose c = transform_pose(pose, sk, params);
    bool differs = false;
    for (std::size_t j = 0; j < a.keypoints.size() && !differs; ++j) differs = a.keypoints[j].x != c.keypoints[j].x;
    EXPECT_TRUE(differs);
}

TEST(TransformPose, ValidatesParameters) {
    const SkeletonSpec sk = chain_skeleton();
    const PersonPose pose = chain_pose(0.8);
    TransformParams bad;
    bad.limb_rotation_max = -0.1;
    EXPECT_THROW(transform_pose(pose, sk, bad), Error);
    bad = TransformParams{};
    bad.limb_scale_range = {1.5, 2.0};
    EXPECT_THROW(transform_pose(pose, sk, bad), Error);
    bad = TransformParams{};
    bad.attempts_max = 0;
    EXPECT_THROW(transform_pose(pose, sk, bad), Error);

    PersonPose short_pose = pose;
    short_pose.keypoints.pop_back();
    EXPECT_THROW(
        {
            try {
                transform_pose(short_pose, sk, TransformParams{});
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::skeleton_mismatch);
                throw;
            }
        },
        Error);
}

TEST(Plausibility, HandComputedZScores) {
    const SkeletonSpec sk = chain_skeleton();
    // Half the corpus has tip ratio 0.4, half 0.6: mean 0.5, stddev 0.1.
    std::vector<PersonPose> corpus;
    for (int i = 0; i < 15; ++i) corpus.push_back(chain_pose(0.4));
    for (int i = 0; i < 15; ++i) corpus.push_back(chain_pose(0.6));

    const PlausibilityModel model = fit_plausibility(corpus, sk, 3.0);
    ASSERT_EQ(model.mean.size(), 2u);
    EXPECT_NEAR(model.mean[0], 1.0, 1e-12);   // torso bone over torso length
    EXPECT_NEAR(model.mean[1], 0.5, 1e-12);
    EXPECT_NEAR(model.stddev[1], 0.1, 1e-9);
    EXPECT_EQ(model.fitted_count, 30u);

    EXPECT_NEAR(plausibility_score(chain_pose(0.5), model, sk), 0.0, 1e-7);
    EXPECT_NEAR(plausibility_score(chain_pose(0.85), model, sk), 3.5, 1e-7);
    EXPECT_TRUE(plausibility_passes(chain_pose(0.7), model, sk));    // z = 2
    EXPECT_FALSE(plausibility_passes(chain_pose(0.85), model, sk));  // z = 3.5
}

TEST(Plausibility, Validation) {
    const SkeletonSpec sk = chain_skeleton();
    std::vector<PersonPose> tiny(10, chain_pose(0.5));
    EXPECT_THROW(
        {
            try {
                fit_plausibility(tiny, sk);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::insufficient_rows);
                throw;
            }
        },
        Error);

    PlausibilityModel unfitted;
    EXPECT_THROW(plausibility_score(chain_pose(0.5), unfitted, sk), Error);

    // Degenerate torso: top collapses onto the root.
    std::vector<PersonPose> corpus(30, chain_pose(0.5));
    PersonPose flat = chain_pose(0.5);
    flat.keypoints[1].x = flat.keypoints[0].x;
    flat.keypoints[1].y = flat.keypoints[0].y;
    const PlausibilityModel model = fit_plausibility(corpus, sk);
    EXPECT_THROW(
        {
            try {
                plausibility_score(flat, model, sk);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::degenerate_torso);
                throw;
            }
        },
        Error);

    SkeletonSpec no_torso = sk;
    no_torso.torso_top.clear();
    EXPECT_THROW(torso_length(chain_pose(0.5), no_torso), Error);
}

TEST(NormalizePose, CentersOnTheTorsoAndScalesByItsLength) {
    const SkeletonSpec sk = chain_skeleton();
    const PersonPose pose = chain_pose(0.6);  // root (0,0), top (0,10), tip (0,16)
    const std::vector<double> n = normalize_pose(pose, sk);
    ASSERT_EQ(n.size(), 6u);
    EXPECT_DOUBLE_EQ(n[0], 0.0);
    EXPECT_DOUBLE_EQ(n[1], -0.5);
    EXPECT_DOUBLE_EQ(n[2], 0.0);
    EXPECT_DOUBLE_EQ(n[3], 0.5);
    EXPECT_DOUBLE_EQ(n[4], 0.0);
    EXPECT_DOUBLE_EQ(n[5], 1.1);

    // Translation and uniform scale wash out entirely.
    const PersonPose moved = chain_pose(0.6, 250.0, -40.0, 30.0);
    EXPECT_EQ(normalize_pose(moved, sk), n);

    PersonPose partial = pose;
    partial.keypoints[2].v = kUnlabeled;
    const std::vector<double> p = normalize_pose(partial, sk);
    EXPECT_DOUBLE_EQ(p[4], 0.0);
    EXPECT_DOUBLE_EQ(p[5], 0.0);
}

TEST(ClusterPoses, SeparatesTwoArticulationFamilies) {
    const SkeletonSpec sk = chain_skeleton();
    std::vector<PersonPose> poses;
    for (int i = 0; i < 20; ++i) poses.push_back(chain_pose(0.5 + 0.02 * (i % 3), 10.0 * i, 0.0));
    for (int i = 0; i < 30; ++i) poses.push_back(chain_pose(1.05 + 0.02 * (i % 3), 5.0 * i, 100.0));

    const ClusterModel model = cluster_poses(poses, sk, 2, 11);
    ASSERT_EQ(model.centroids.size(), 2u);
    ASSERT_EQ(model.assignment.size(), 50u);

    const int family_a = model.assignment[0];
    for (int i = 0; i < 20; ++i) EXPECT_EQ(model.assignment[static_cast<std::size_t>(i)], family_a);
    const int family_b = model.assignment[20];
    EXPECT_NE(family_a, family_b);
    for (int i = 20; i < 50; ++i) EXPECT_EQ(model.assignment[static_cast<std::size_t>(i)], family_b);

    EXPECT_EQ(model.sizes[static_cast<std::size_t>(family_a)], 20u);
    EXPECT_EQ(model.sizes[static_cast<std::size_t>(family_b)], 30u);

    // nearest() agrees with the stored assignment.
    for (std::size_t i = 0; i < poses.size(); ++i)
        EXPECT_EQ(model.nearest(normalize_pose(poses[i], sk)), model.assignment[i]);
}

TEST(ClusterPoses, DeterministicAndValidated) {
    const SkeletonSpec sk = chain_skeleton();
    std::vector<PersonPose> poses;
    for (int i = 0; i < 12; ++i) poses.push_back(chain_pose(0.4 + 0.07 * i));

    const ClusterModel a = cluster_poses(poses, sk, 3, 5);
    const ClusterModel b = cluster_poses(poses, sk, 3, 5);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.sizes, b.sizes);
    EXPECT_DOUBLE_EQ(a.objective, b.objective);

    std::size_t total = 0;
    for (std::size_t s : a.sizes) total += s;
    EXPECT_EQ(total, poses.size());

    EXPECT_THROW(cluster_poses(poses, sk, 0, 1), Error);
    EXPECT_THROW(
        {
            try {
                cluster_poses(poses, sk, 13, 1);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::too_few_poses);
                throw;
            }
        },
        Error);
}

TEST(AugmentDataset, FillsTheBudgetWithPlausibleRareClusterPoses) {
    const SkeletonSpec sk = chain_skeleton();
    std::vector<PersonPose> poses;
    for (int i = 0; i < 12; ++i) poses.push_back(chain_pose(0.48 + 0.01 * (i % 5)));
    for (int i = 0; i < 48; ++i) poses.push_back(chain_pose(1.03 + 0.01 * (i % 5)));

    const PlausibilityModel plaus = fit_plausibility(poses, sk, 3.0);
    const ClusterModel clusters = cluster_poses(poses, sk, 2, 3);

    // Identify the rare family's cluster.
    const int rare = clusters.assignment[0];
    ASSERT_EQ(clusters.sizes[static_cast<std::size_t>(rare)], 12u);

    TransformParams params;
    params.limb_rotation_max = 0.15;
    params.limb_scale_range = {0.95, 1.05};
    params.seed = 21;

    const std::size_t budget = 8;
    const std::vector<PersonPose> accepted = augment_dataset(poses, sk, params, plaus, clusters, budget);
    ASSERT_EQ(accepted.size(), budget);
    for (const PersonPose& p : accepted) {
        EXPECT_TRUE(plausibility_passes(p, plaus, sk));
        // The size gap (12 vs 48) exceeds the budget, so every acceptance
        // lands in the rare cluster.
        EXPECT_EQ(clusters.nearest(normalize_pose(p, sk)), rare);
    }

    const std::vector<PersonPose> again = augment_dataset(poses, sk, params, plaus, clusters, budget);
    ASSERT_EQ(again.size(), budget);
    for (std::size_t i = 0; i < budget; ++i)
        for (std::size_t j = 0; j < accepted[i].keypoints.size(); ++j) {
            ASSERT_EQ(again[i].keypoints[j].x, accepted[i].keypoints[j].x);
            ASSERT_EQ(again[i].keypoints[j].y, accepted[i].keypoints[j].y);
        }
}

TEST(AugmentDataset, BudgetZeroAndFailureModes) {
    const SkeletonSpec sk = chain_skeleton();
    std::vector<PersonPose> poses;
    for (int i = 0; i < 30; ++i) poses.push_back(chain_pose(0.5 + 0.01 * (i % 4)));
    PlausibilityModel plaus = fit_plausibility(poses, sk, 3.0);
    const ClusterModel clusters = cluster_poses(poses, sk, 2, 1);

    TransformParams params;
    params.attempts_max = 3;
    EXPECT_TRUE(augment_dataset(poses, sk, params, plaus, clusters, 0).empty());

    EXPECT_THROW(
        {
            try {
                augment_dataset({}, sk, params, plaus, clusters, 4);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::empty_input);
                throw;
            }
        },
        Error);

    plaus.threshold = -1.0;  // nothing can pass
    EXPECT_THROW(
        {
            try {
                augment_dataset(poses, sk, params, plaus, clusters, 4);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::budget_unreachable);
                throw;
            }
        },
        Error);
}
