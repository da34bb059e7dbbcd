// Core domain types: skeleton taxonomy, 2D person poses, 6-DoF rigid poses
// and cross-model matched groups. Everything is an immutable-after-build
// value type; validation is explicit and throws posefuse::Error.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"

namespace posefuse {

// Visibility flags follow the COCO convention.
enum Visibility : int {
    kUnlabeled = 0,
    kLabeledOccluded = 1,
    kLabeledVisible = 2,
};

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    int v = kUnlabeled;
    double confidence = 1.0;

    bool labeled() const { return v > 0; }
};

struct SkeletonSpec {
    std::string name;
    std::vector<std::string> keypoint_names;
    std::vector<std::pair<int, int>> limb_pairs;
    std::vector<double> oks_sigmas;
    // Head segment (proximal, distal) for PCKh; absent for skeletons whose
    // convention does not define one.
    std::optional<std::pair<int, int>> head_segment;
    // Keypoint index sets whose midpoints anchor the torso axis used for
    // pose normalization (clustering, plausibility, scene synthesis).
    std::vector<int> torso_top;
    std::vector<int> torso_bottom;

    int keypoint_count() const { return static_cast<int>(keypoint_names.size()); }

    void validate() const {
        const int k = keypoint_count();
        if (k < 1) throw Error(Errc::invalid_argument, "skeleton '" + name + "' has no keypoints");
        for (std::size_t i = 0; i < keypoint_names.size(); ++i)
            for (std::size_t j = i + 1; j < keypoint_names.size(); ++j)
                if (keypoint_names[i] == keypoint_names[j])
                    throw Error(Errc::invalid_argument,
                                "skeleton '" + name + "' duplicates keypoint name '" + keypoint_names[i] + "'");
        for (const auto& [a, b] : limb_pairs)
            if (a < 0 || b < 0 || a >= k || b >= k)
                throw Error(Errc::invalid_argument, "skeleton '" + name + "' limb index out of range");
        if (static_cast<int>(oks_sigmas.size()) != k)
            throw Error(Errc::invalid_argument, "skeleton '" + name + "' sigma count != keypoint count");
        for (std::size_t i = 0; i < oks_sigmas.size(); ++i)
            if (!(oks_sigmas[i] > 0.0))
                throw Error(Errc::invalid_argument,
                            "skeleton '" + name + "' sigma[" + std::to_string(i) + "] must be > 0");
    }
};

struct BBox {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
};

struct PersonPose {
    std::vector<Keypoint> keypoints;
    double score = 1.0;
    std::optional<BBox> bbox;
    std::optional<double> area;
    std::int64_t image_id = 0;
    std::string source_model;

    int keypoint_count() const { return static_cast<int>(keypoints.size()); }

    // Area for OKS normalization: explicit area, else bbox w*h.
    std::optional<double> reference_area() const {
        if (area) return area;
        if (bbox) return bbox->w * bbox->h;
        return std::nullopt;
    }
};

// 6-DoF rigid pose; the rotation is checked against SO(3) at construction.
class RigidPose {
public:
    RigidPose(const Vec3& translation, const Mat3& rotation, double tol = 1e-9)
        : ta_(translation), ro_(rotation) {
        if (!translation.finite() || !rotation.finite())
            throw Error(Errc::non_finite_coordinate, "rigid pose has non-finite entries");
        if (!is_rotation(rotation, tol))
            throw Error(Errc::not_a_rotation,
                        "rotation fails orthonormality, defect=" + std::to_string(orthonormality_defect(rotation)) +
                            " det=" + std::to_string(rotation.det()));
    }

    const Vec3& translation() const { return ta_; }
    const Mat3& rotation() const { return ro_; }

private:
    Vec3 ta_;
    Mat3 ro_;
};

// Co-referring detections of one person from different base models.
// Members are unique per source model; match_quality[i] is the OKS of
// members[i] against the group anchor at join time (1.0 for the founder).
struct MatchedGroup {
    std::int64_t image_id = 0;
    std::vector<PersonPose> members;
    std::vector<double> match_quality;

    std::size_t size() const { return members.size(); }

    // Highest-score member; ties resolved toward the smaller model id.
    const PersonPose& anchor() const {
        if (members.empty()) throw Error(Errc::empty_group, "anchor of empty group");
        std::size_t best = 0;
        for (std::size_t i = 1; i < members.size(); ++i) {
            if (members[i].score > members[best].score ||
                (members[i].score == members[best].score &&
                 members[i].source_model < members[best].source_model))
                best = i;
        }
        return members[best];
    }
};

// Returns the pose unchanged iff every invariant holds; otherwise throws
// with the offending field and index in the message.
inline const PersonPose& validate_pose(const PersonPose& pose, const SkeletonSpec& skeleton) {
    if (pose.keypoint_count() != skeleton.keypoint_count())
        throw Error(Errc::keypoint_count_mismatch,
                    "keypoints: got " + std::to_string(pose.keypoint_count()) + ", skeleton '" + skeleton.name +
                        "' expects " + std::to_string(skeleton.keypoint_count()));
    if (!(pose.score >= 0.0 && pose.score <= 1.0))
        throw Error(Errc::score_out_of_range, "score=" + std::to_string(pose.score));
    for (std::size_t i = 0; i < pose.keypoints.size(); ++i) {
        const Keypoint& kp = pose.keypoints[i];
        if (!std::isfinite(kp.x))
            throw Error(Errc::non_finite_coordinate, "keypoints[" + std::to_string(i) + "].x");
        if (!std::isfinite(kp.y))
            throw Error(Errc::non_finite_coordinate, "keypoints[" + std::to_string(i) + "].y");
        if (kp.v != 0 && kp.v != 1 && kp.v != 2)
            throw Error(Errc::invalid_argument,
                        "keypoints[" + std::to_string(i) + "].v=" + std::to_string(kp.v) + " not in {0,1,2}");
        if (!(kp.confidence >= 0.0 && kp.confidence <= 1.0))
            throw Error(Errc::score_out_of_range,
                        "keypoints[" + std::to_string(i) + "].confidence=" + std::to_string(kp.confidence));
    }
    if (pose.area && !(*pose.area > 0.0))
        throw Error(Errc::invalid_argument, "area=" + std::to_string(*pose.area) + " must be > 0");
    if (pose.bbox && (pose.bbox->w < 0.0 || pose.bbox->h < 0.0))
        throw Error(Errc::invalid_argument, "bbox has negative extent");
    return pose;
}

// The 17-keypoint COCO skeleton. Sigmas transcribed from the reference
// COCO keypoint evaluation code; kept here as the canonical fixture.
inline SkeletonSpec coco17_skeleton() {
    SkeletonSpec s;
    s.name = "coco17";
    s.keypoint_names = {"nose",        "left_eye",   "right_eye",     "left_ear",    "right_ear",
                        "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
                        "left_wrist",  "right_wrist", "left_hip",     "right_hip",
                        "left_knee",   "right_knee",  "left_ankle",   "right_ankle"};
    s.limb_pairs = {{15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12},
                    {5, 6},   {5, 7},   {6, 8},   {7, 9},   {8, 10},  {1, 2},  {0, 1},
                    {0, 2},   {1, 3},   {2, 4},   {3, 5},   {4, 6}};
    s.oks_sigmas = {0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
                    0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089};
    s.head_segment = std::nullopt;  // COCO defines no head segment
    s.torso_top = {5, 6};
    s.torso_bottom = {11, 12};
    return s;
}

// The 16-keypoint MPII skeleton. MPII publishes no OKS falloffs, so the
// COCO value of the analogous joint is reused for each.
inline SkeletonSpec mpii16_skeleton() {
    SkeletonSpec s;
    s.name = "mpii16";
    s.keypoint_names = {"right_ankle", "right_knee",  "right_hip",     "left_hip",
                        "left_knee",   "left_ankle",  "pelvis",        "thorax",
                        "upper_neck",  "head_top",    "right_wrist",   "right_elbow",
                        "right_shoulder", "left_shoulder", "left_elbow", "left_wrist"};
    s.limb_pairs = {{0, 1}, {1, 2},  {2, 6},   {3, 6},   {3, 4},  {4, 5},  {6, 7}, {7, 8},
                    {8, 9}, {10, 11}, {11, 12}, {12, 7}, {13, 7}, {13, 14}, {14, 15}};
    s.oks_sigmas = {0.089, 0.087, 0.107, 0.107, 0.087, 0.089, 0.107, 0.079,
                    0.079, 0.026, 0.062, 0.072, 0.079, 0.079, 0.072, 0.062};
    s.head_segment = std::pair<int, int>{8, 9};
    s.torso_top = {7};
    s.torso_bottom = {6};
    return s;
}

inline std::vector<SkeletonSpec> default_skeletons() { return {coco17_skeleton(), mpii16_skeleton()}; }

inline std::optional<SkeletonSpec> find_skeleton(const std::string& name) {
    for (auto& s : default_skeletons())
        if (s.name == name) return s;
    return std::nullopt;
}

}  // namespace posefuse
