// Cross-model instance association: decide which detections from different
// base models describe the same person. Models merge pairwise in ascending
// model-id order via minimum-cost assignment on 1 - OKS.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "posefuse/assignment.hpp"
#include "posefuse/error.hpp"
#include "posefuse/types.hpp"

namespace posefuse {

struct AssociationConfig {
    double oks_threshold = 0.5;   // pairs below this similarity are split
    bool allow_singletons = true; // keep groups with a single member

    void validate() const {
        if (!(oks_threshold >= 0.0 && oks_threshold <= 1.0))
            throw Error(Errc::invalid_argument,
                        "oks_threshold " + std::to_string(oks_threshold) + " outside [0,1]");
    }
};

// Object keypoint similarity of `candidate` against `reference`: the mean
// over labeled reference keypoints of exp(-d_j^2 / (2 * s^2 * sigma_j^2)),
// where s^2 is the reference area (bbox w*h fallback).
inline double oks(const PersonPose& candidate, const PersonPose& reference, const SkeletonSpec& skeleton) {
    const int k = skeleton.keypoint_count();
    if (candidate.keypoint_count() != k || reference.keypoint_count() != k)
        throw Error(Errc::skeleton_mismatch, "pose keypoint count differs from skeleton '" + skeleton.name + "'");
    const auto area = reference.reference_area();
    if (!area || !(*area > 0.0))
        throw Error(Errc::missing_area, "reference pose carries no positive area or bbox");

    double sum = 0.0;
    int labeled = 0;
    for (int j = 0; j < k; ++j) {
        const Keypoint& ref = reference.keypoints[static_cast<std::size_t>(j)];
        if (!ref.labeled()) continue;
        const Keypoint& cand = candidate.keypoints[static_cast<std::size_t>(j)];
        const double dx = cand.x - ref.x;
        const double dy = cand.y - ref.y;
        const double sigma = skeleton.oks_sigmas[static_cast<std::size_t>(j)];
        sum += std::exp(-(dx * dx + dy * dy) / (2.0 * *area * sigma * sigma));
        ++labeled;
    }
    if (labeled == 0) throw Error(Errc::no_labeled_keypoints, "reference pose has no labeled keypoints");
    return sum / labeled;
}

// Merges per-model detections of one image into MatchedGroups. The running
// group list is matched to each next model's poses by hungarian() on cost
// 1 - OKS, with the group's highest-score member as the OKS reference.
// Assigned pairs with OKS < threshold are split; unmatched poses found
// groups of their own. Groups still singleton after all models are dropped
// unless cfg.allow_singletons.
inline std::vector<MatchedGroup> match_instances(const std::map<std::string, std::vector<PersonPose>>& per_model,
                                                 const SkeletonSpec& skeleton, const AssociationConfig& cfg) {
    cfg.validate();
    bool saw_pose = false;
    std::int64_t image_id = 0;
    for (const auto& [model_id, poses] : per_model) {
        for (const PersonPose& pose : poses) {
            if (pose.keypoint_count() != skeleton.keypoint_count())
                throw Error(Errc::skeleton_mismatch, "pose from model '" + model_id +
                                                         "' has keypoint count different from skeleton '" +
                                                         skeleton.name + "'");
            if (!saw_pose) {
                image_id = pose.image_id;
                saw_pose = true;
            } else if (pose.image_id != image_id) {
                throw Error(Errc::invalid_argument, "match_instances received mixed image ids " +
                                                        std::to_string(image_id) + " and " +
                                                        std::to_string(pose.image_id));
            }
        }
    }

    std::vector<MatchedGroup> groups;
    auto found_group = [&](const PersonPose& pose, const std::string& model_id) {
        MatchedGroup g;
        g.image_id = pose.image_id;
        g.members.push_back(pose);
        g.members.back().source_model = model_id;
        g.match_quality.push_back(1.0);
        groups.push_back(std::move(g));
    };

    for (const auto& [model_id, poses] : per_model) {
        if (groups.empty()) {
            for (const PersonPose& pose : poses) found_group(pose, model_id);
            continue;
        }
        if (poses.empty()) continue;

        std::vector<std::vector<double>> cost(groups.size(), std::vector<double>(poses.size(), 0.0));
        std::vector<std::vector<double>> quality(groups.size(), std::vector<double>(poses.size(), 0.0));
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const PersonPose& reference = groups[g].anchor();
            for (std::size_t p = 0; p < poses.size(); ++p) {
                quality[g][p] = oks(poses[p], reference, skeleton);
                cost[g][p] = 1.0 - quality[g][p];
            }
        }

        std::vector<char> pose_matched(poses.size(), 0);
        for (const auto& [g, p] : hungarian(cost).pairs) {
            const double q = quality[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
            if (q < cfg.oks_threshold) continue; // split: pose founds its own group below
            groups[static_cast<std::size_t>(g)].members.push_back(poses[static_cast<std::size_t>(p)]);
            groups[static_cast<std::size_t>(g)].members.back().source_model = model_id;
            groups[static_cast<std::size_t>(g)].match_quality.push_back(q);
            pose_matched[static_cast<std::size_t>(p)] = 1;
        }
        for (std::size_t p = 0; p < poses.size(); ++p)
            if (!pose_matched[p]) found_group(poses[p], model_id);
    }

    if (!cfg.allow_singletons) {
        std::vector<MatchedGroup> kept;
        for (auto& g : groups)
            if (g.members.size() > 1) kept.push_back(std::move(g));
        groups = std::move(kept);
    }
    return groups;
}

}  // namespace posefuse
