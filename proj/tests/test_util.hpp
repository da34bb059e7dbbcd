// Shared fixture helpers for the test suite.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "posefuse/posefuse.hpp"

namespace testutil {

// A person-shaped ring of keypoints around (cx, cy); labeled, confident,
// with bbox and area set so OKS is well defined.
inline posefuse::PersonPose ring_pose(const posefuse::SkeletonSpec& skeleton, double cx, double cy, double score,
                                      std::int64_t image_id = 1, double rx = 30.0, double ry = 55.0) {
    posefuse::PersonPose pose;
    pose.score = score;
    pose.image_id = image_id;
    const int k = skeleton.keypoint_count();
    for (int j = 0; j < k; ++j) {
        const double ang = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(k);
        pose.keypoints.push_back(
            posefuse::Keypoint{cx + rx * std::cos(ang), cy + ry * std::sin(ang), posefuse::kLabeledVisible, 1.0});
    }
    pose.bbox = posefuse::BBox{cx - rx, cy - ry, 2.0 * rx, 2.0 * ry};
    pose.area = 4.0 * rx * ry;
    return pose;
}

// The standing template from the synthetic generator, shifted to a center;
// articulated skeleton tests (plausibility, clustering) want this one.
inline posefuse::PersonPose person_at(const posefuse::SkeletonSpec& skeleton, double cx, double cy,
                                      double score = 1.0, std::int64_t image_id = 1) {
    posefuse::PersonPose pose = posefuse::canonical_pose(skeleton);
    pose.score = score;
    pose.image_id = image_id;
    for (posefuse::Keypoint& kp : pose.keypoints) {
        kp.x += cx;
        kp.y += cy;
    }
    double lo_x = pose.keypoints[0].x, hi_x = lo_x, lo_y = pose.keypoints[0].y, hi_y = lo_y;
    for (const posefuse::Keypoint& kp : pose.keypoints) {
        lo_x = std::min(lo_x, kp.x);
        hi_x = std::max(hi_x, kp.x);
        lo_y = std::min(lo_y, kp.y);
        hi_y = std::max(hi_y, kp.y);
    }
    pose.bbox = posefuse::BBox{lo_x, lo_y, hi_x - lo_x, hi_y - lo_y};
    pose.area = (hi_x - lo_x) * (hi_y - lo_y);
    return pose;
}

inline posefuse::PersonPose jitter(const posefuse::PersonPose& pose, posefuse::Rng& rng, double sigma) {
    posefuse::PersonPose out = pose;
    for (posefuse::Keypoint& kp : out.keypoints) {
        kp.x += rng.gaussian() * sigma;
        kp.y += rng.gaussian() * sigma;
    }
    return out;
}

inline double frobenius_distance(const posefuse::Mat3& a, const posefuse::Mat3& b) {
    return (a - b).frobenius_norm();
}

}  // namespace testutil
