// Closed-form ensemble fusion: unweighted averaging of base-model poses and
// score-weighted averaging with w = 1/((1-sc)^2 + eps), for both 6-DoF rigid
// poses and 2D keypoint poses.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/rotation.hpp"
#include "posefuse/types.hpp"

namespace posefuse {

enum class BaggingMode { simple, weighted };

// `paper_1_over_n` divides the weighted translation sum by n instead of the
// weight total, reproducing that published variant literally; `sum_weights`
// is the proper weighted mean.
enum class WeightNormalization { sum_weights, paper_1_over_n };

struct BaggingConfig {
    BaggingMode mode = BaggingMode::weighted;
    double epsilon = 1e-6;
    WeightNormalization weight_normalization = WeightNormalization::sum_weights;

    void validate() const {
        if (!(epsilon > 0.0))
            throw Error(Errc::non_positive_epsilon, "epsilon=" + std::to_string(epsilon) + " must be > 0");
    }
};

struct FusedResult {
    std::variant<PersonPose, RigidPose> pose;
    std::vector<std::pair<std::string, double>> member_weights;  // model_id -> applied weight
    std::string strategy;

    const PersonPose& person() const {
        if (!std::holds_alternative<PersonPose>(pose))
            throw Error(Errc::invalid_argument, "fused result holds a rigid pose, not keypoints");
        return std::get<PersonPose>(pose);
    }
    const RigidPose& rigid() const {
        if (!std::holds_alternative<RigidPose>(pose))
            throw Error(Errc::invalid_argument, "fused result holds keypoints, not a rigid pose");
        return std::get<RigidPose>(pose);
    }
};

// Score-to-weight map: 1 / ((1 - sc)^2 + epsilon). Strictly increasing on
// [0,1], bounded by 1/epsilon.
inline double weight_from_score(double sc, double epsilon) {
    if (!(sc >= 0.0 && sc <= 1.0))
        throw Error(Errc::score_out_of_range, "score " + std::to_string(sc) + " outside [0,1]");
    if (!(epsilon > 0.0))
        throw Error(Errc::non_positive_epsilon, "epsilon=" + std::to_string(epsilon) + " must be > 0");
    const double miss = 1.0 - sc;
    return 1.0 / (miss * miss + epsilon);
}

// Unweighted fusion: arithmetic mean of translations, chordal mean of
// rotations. Summation order is fixed by index.
inline RigidPose simple_bag_rigid(const std::vector<RigidPose>& poses) {
    if (poses.empty()) throw Error(Errc::empty_input, "bagging over zero poses");
    Vec3 ta{0.0, 0.0, 0.0};
    std::vector<Mat3> rotations;
    rotations.reserve(poses.size());
    for (const RigidPose& p : poses) {
        ta += p.translation();
        rotations.push_back(p.rotation());
    }
    ta = ta / static_cast<double>(poses.size());
    return RigidPose(ta, chordal_mean(rotations), 1e-6);
}

// Score-weighted fusion. Weights are normalized by their maximum before the
// translation sum, so all-equal scores reproduce simple_bag_rigid bit for
// bit under sum_weights; paper_1_over_n applies the raw weights and divides
// by n.
inline RigidPose weighted_bag_rigid(const std::vector<RigidPose>& poses, const std::vector<double>& scores,
                                    const BaggingConfig& cfg) {
    cfg.validate();
    if (poses.empty()) throw Error(Errc::empty_input, "bagging over zero poses");
    if (poses.size() != scores.size())
        throw Error(Errc::length_mismatch, std::to_string(poses.size()) + " poses vs " +
                                               std::to_string(scores.size()) + " scores");

    std::vector<double> weights(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) weights[i] = weight_from_score(scores[i], cfg.epsilon);

    Vec3 ta{0.0, 0.0, 0.0};
    if (cfg.weight_normalization == WeightNormalization::sum_weights) {
        const double wmax = *std::max_element(weights.begin(), weights.end());
        double wsum = 0.0;
        for (std::size_t i = 0; i < poses.size(); ++i) {
            const double u = weights[i] / wmax;
            ta += poses[i].translation() * u;
            wsum += u;
        }
        ta = ta / wsum;
    } else {
        for (std::size_t i = 0; i < poses.size(); ++i) ta += poses[i].translation() * weights[i];
        ta = ta / static_cast<double>(poses.size());
    }

    std::vector<RotationSample> samples;
    samples.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) samples.push_back({poses[i].rotation(), weights[i]});
    return RigidPose(ta, chordal_mean_weighted(samples), 1e-6);
}

// Per-keypoint fusion of a matched group. Each keypoint is the weighted mean
// over the members that observed it (v > 0 or confidence > 0), with weights
// renormalized over those members; a keypoint unobserved everywhere stays
// v = 0 at the origin. Weights come from the members' detection scores in
// weighted mode and are uniform in simple mode. Translational weighting is
// always a proper mean here — keypoint fusion has no 1/n variant.
inline FusedResult fuse_keypoints(const MatchedGroup& group, const BaggingConfig& cfg) {
    cfg.validate();
    if (group.members.empty()) throw Error(Errc::empty_group, "fusing an empty group");
    const std::size_t k = group.members.front().keypoints.size();
    for (const PersonPose& m : group.members)
        if (m.keypoints.size() != k)
            throw Error(Errc::skeleton_mismatch, "group members disagree on keypoint count");

    FusedResult result;
    result.strategy = cfg.mode == BaggingMode::simple ? "simple" : "weighted";

    if (group.members.size() == 1) {
        result.pose = group.members.front();
        result.member_weights.emplace_back(group.members.front().source_model, 1.0);
        return result;
    }

    std::vector<double> weights(group.members.size(), 1.0);
    if (cfg.mode == BaggingMode::weighted) {
        for (std::size_t i = 0; i < group.members.size(); ++i)
            weights[i] = weight_from_score(group.members[i].score, cfg.epsilon);
        const double wmax = *std::max_element(weights.begin(), weights.end());
        for (double& w : weights) w /= wmax;
    }
    for (std::size_t i = 0; i < group.members.size(); ++i)
        result.member_weights.emplace_back(group.members[i].source_model, weights[i]);

    PersonPose fused;
    fused.image_id = group.image_id;
    fused.source_model = result.strategy;
    fused.keypoints.assign(k, Keypoint{0.0, 0.0, kUnlabeled, 0.0});

    for (std::size_t j = 0; j < k; ++j) {
        double wsum = 0.0, x = 0.0, y = 0.0, conf = 0.0;
        int v = 0;
        for (std::size_t i = 0; i < group.members.size(); ++i) {
            const Keypoint& kp = group.members[i].keypoints[j];
            if (!(kp.v > 0 || kp.confidence > 0.0)) continue;
            x += weights[i] * kp.x;
            y += weights[i] * kp.y;
            conf += weights[i] * kp.confidence;
            wsum += weights[i];
            v = std::max(v, kp.v);
        }
        if (wsum == 0.0) continue;  // unobserved by every member
        fused.keypoints[j] = Keypoint{x / wsum, y / wsum, v > 0 ? v : kLabeledVisible, conf / wsum};
    }

    double score = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < group.members.size(); ++i) {
        score += weights[i] * group.members[i].score;
        wsum += weights[i];
    }
    fused.score = score / wsum;

    // Bounding box of the observed fused keypoints, for downstream OKS use.
    double minx = 0.0, miny = 0.0, maxx = 0.0, maxy = 0.0;
    bool any = false;
    for (const Keypoint& kp : fused.keypoints) {
        if (!kp.labeled()) continue;
        if (!any) {
            minx = maxx = kp.x;
            miny = maxy = kp.y;
            any = true;
        } else {
            minx = std::min(minx, kp.x);
            maxx = std::max(maxx, kp.x);
            miny = std::min(miny, kp.y);
            maxy = std::max(maxy, kp.y);
        }
    }
    if (any) fused.bbox = BBox{minx, miny, maxx - minx, maxy - miny};

    result.pose = std::move(fused);
    return result;
}

}  // namespace posefuse
