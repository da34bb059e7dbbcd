// Pose-transformation augmentation: perturb limbs kinematically, reject
// implausible results with a bone-ratio discriminator, cluster poses in a
// normalized articulation space, and grow the rarest clusters up to a
// sample budget. Fully deterministic under the configured seed.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/rng.hpp"
#include "posefuse/types.hpp"

namespace posefuse {

struct TransformParams {
    double limb_rotation_max = 0.52;  // radians; 0 disables rotation (identity limit)
    std::pair<double, double> limb_scale_range = {0.8, 1.2};
    int attempts_max = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(limb_rotation_max >= 0.0 && limb_rotation_max < M_PI))
            throw Error(Errc::invalid_argument, "limb_rotation_max outside [0, pi)");
        if (!(limb_scale_range.first > 0.0 && limb_scale_range.first <= 1.0 && limb_scale_range.second >= 1.0))
            throw Error(Errc::invalid_argument, "limb_scale_range must satisfy 0 < low <= 1 <= high");
        if (attempts_max < 1) throw Error(Errc::invalid_argument, "attempts_max must be >= 1");
    }
};

namespace detail {

// Midpoint of a keypoint index set.
inline std::pair<double, double> keypoint_midpoint(const PersonPose& pose, const std::vector<int>& idx) {
    double x = 0.0, y = 0.0;
    for (int i : idx) {
        x += pose.keypoints[static_cast<std::size_t>(i)].x;
        y += pose.keypoints[static_cast<std::size_t>(i)].y;
    }
    const double n = static_cast<double>(idx.size());
    return {x / n, y / n};
}

struct KinematicEdge {
    int parent;
    int child;
};

// Orients the limb graph into a tree by breadth-first search from the
// torso-bottom root (pelvis/hips); edges that would close a cycle are left
// out. Deterministic: neighbors are visited in ascending keypoint order.
inline std::vector<KinematicEdge> kinematic_tree(const SkeletonSpec& skeleton) {
    const int k = skeleton.keypoint_count();
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(k));
    for (const auto& [a, b] : skeleton.limb_pairs) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());

    const int root = skeleton.torso_bottom.empty() ? 0 : skeleton.torso_bottom.front();
    std::vector<char> visited(static_cast<std::size_t>(k), 0);
    std::vector<KinematicEdge> edges;
    std::vector<int> queue{root};
    visited[static_cast<std::size_t>(root)] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int p = queue[head];
        for (int c : adj[static_cast<std::size_t>(p)]) {
            if (visited[static_cast<std::size_t>(c)]) continue;
            visited[static_cast<std::size_t>(c)] = 1;
            edges.push_back({p, c});
            queue.push_back(c);
        }
    }
    // Disconnected keypoints (unusual skeletons): root them on themselves so
    // every keypoint belongs to some subtree walk.
    for (int i = 0; i < k; ++i)
        if (!visited[static_cast<std::size_t>(i)]) {
            visited[static_cast<std::size_t>(i)] = 1;
            queue.push_back(i);
            for (int c : adj[static_cast<std::size_t>(i)])
                if (!visited[static_cast<std::size_t>(c)]) {
                    visited[static_cast<std::size_t>(c)] = 1;
                    edges.push_back({i, c});
                    queue.push_back(c);
                }
        }
    return edges;
}

// child -> all keypoints in its subtree (child included), per tree edge list.
inline std::vector<int> subtree_of(const std::vector<KinematicEdge>& edges, int child, int keypoint_count) {
    std::vector<std::vector<int>> children(static_cast<std::size_t>(keypoint_count));
    for (const KinematicEdge& e : edges) children[static_cast<std::size_t>(e.parent)].push_back(e.child);
    std::vector<int> out{child};
    for (std::size_t head = 0; head < out.size(); ++head)
        for (int c : children[static_cast<std::size_t>(out[head])]) out.push_back(c);
    return out;
}

}  // namespace detail

// Rotates each kinematic-tree limb about its proximal joint by a uniform
// angle in [-limb_rotation_max, +limb_rotation_max] and rescales the bone
// by a uniform factor in limb_scale_range; everything distal to the bone
// follows rigidly. Visibility flags, confidences and image_id are
// untouched. A sampled (angle, scale) of exactly (0, 1) leaves the limb
// bitwise unchanged.
inline PersonPose transform_pose(const PersonPose& pose, const SkeletonSpec& skeleton, const TransformParams& params,
                                 Rng& rng) {
    params.validate();
    if (pose.keypoint_count() != skeleton.keypoint_count())
        throw Error(Errc::skeleton_mismatch, "pose keypoint count differs from skeleton '" + skeleton.name + "'");

    PersonPose out = pose;
    const std::vector<detail::KinematicEdge> edges = detail::kinematic_tree(skeleton);
    const int k = skeleton.keypoint_count();

    for (const detail::KinematicEdge& edge : edges) {
        const double angle = rng.uniform(-params.limb_rotation_max, params.limb_rotation_max);
        const double scale = rng.uniform(params.limb_scale_range.first, params.limb_scale_range.second);
        if (angle == 0.0 && scale == 1.0) continue;

        const std::vector<int> moving = detail::subtree_of(edges, edge.child, k);
        const double px = out.keypoints[static_cast<std::size_t>(edge.parent)].x;
        const double py = out.keypoints[static_cast<std::size_t>(edge.parent)].y;
        const double c = std::cos(angle), s = std::sin(angle);

        for (int m : moving) {
            Keypoint& kp = out.keypoints[static_cast<std::size_t>(m)];
            const double dx = kp.x - px, dy = kp.y - py;
            kp.x = px + c * dx - s * dy;
            kp.y = py + s * dx + c * dy;
        }
        // Scale the bone itself; the subtree translates with its distal end.
        Keypoint& child = out.keypoints[static_cast<std::size_t>(edge.child)];
        const double shift_x = (scale - 1.0) * (child.x - px);
        const double shift_y = (scale - 1.0) * (child.y - py);
        for (int m : moving) {
            out.keypoints[static_cast<std::size_t>(m)].x += shift_x;
            out.keypoints[static_cast<std::size_t>(m)].y += shift_y;
        }
    }
    return out;
}

inline PersonPose transform_pose(const PersonPose& pose, const SkeletonSpec& skeleton,
                                 const TransformParams& params) {
    Rng rng(params.seed);
    return transform_pose(pose, skeleton, params, rng);
}

// ---------------------------------------------------------------------------
// Plausibility discriminator: per-bone length-to-torso ratios as z-scores.
// ---------------------------------------------------------------------------

inline double torso_length(const PersonPose& pose, const SkeletonSpec& skeleton) {
    if (skeleton.torso_top.empty() || skeleton.torso_bottom.empty())
        throw Error(Errc::degenerate_torso, "skeleton '" + skeleton.name + "' defines no torso anchors");
    const auto [tx, ty] = detail::keypoint_midpoint(pose, skeleton.torso_top);
    const auto [bx, by] = detail::keypoint_midpoint(pose, skeleton.torso_bottom);
    return std::hypot(tx - bx, ty - by);
}

struct PlausibilityModel {
    std::vector<double> mean;    // per limb pair, bone length / torso length
    std::vector<double> stddev;  // floored at 1e-6
    double threshold = 3.0;
    std::size_t fitted_count = 0;
};

inline PlausibilityModel fit_plausibility(const std::vector<PersonPose>& corpus, const SkeletonSpec& skeleton,
                                          double threshold = 3.0) {
    if (corpus.size() < 30)
        throw Error(Errc::insufficient_rows,
                    "plausibility model needs >= 30 poses, got " + std::to_string(corpus.size()));
    const std::size_t bones = skeleton.limb_pairs.size();
    std::vector<double> sum(bones, 0.0), sumsq(bones, 0.0);
    std::vector<std::size_t> count(bones, 0);

    for (const PersonPose& pose : corpus) {
        const double torso = torso_length(pose, skeleton);
        if (torso < 1e-6) throw Error(Errc::degenerate_torso, "corpus pose has torso length < 1e-6");
        for (std::size_t b = 0; b < bones; ++b) {
            const auto& [a, c] = skeleton.limb_pairs[b];
            const Keypoint& ka = pose.keypoints[static_cast<std::size_t>(a)];
            const Keypoint& kc = pose.keypoints[static_cast<std::size_t>(c)];
            if (!ka.labeled() || !kc.labeled()) continue;
            const double ratio = std::hypot(ka.x - kc.x, ka.y - kc.y) / torso;
            sum[b] += ratio;
            sumsq[b] += ratio * ratio;
            ++count[b];
        }
    }

    PlausibilityModel model;
    model.threshold = threshold;
    model.fitted_count = corpus.size();
    model.mean.resize(bones);
    model.stddev.resize(bones);
    for (std::size_t b = 0; b < bones; ++b) {
        if (count[b] < 2)
            throw Error(Errc::insufficient_rows, "bone " + std::to_string(b) + " labeled in fewer than 2 poses");
        const double n = static_cast<double>(count[b]);
        const double mean = sum[b] / n;
        const double var = std::max(0.0, sumsq[b] / n - mean * mean);
        model.mean[b] = mean;
        model.stddev[b] = std::max(std::sqrt(var), 1e-6);
    }
    return model;
}

// Maximum absolute bone-ratio z-score; a pose passes the discriminator iff
// the score is <= model.threshold. Bones with an unlabeled endpoint are
// skipped; a pose with no measurable bone scores +infinity.
inline double plausibility_score(const PersonPose& pose, const PlausibilityModel& model,
                                 const SkeletonSpec& skeleton) {
    if (model.fitted_count == 0) throw Error(Errc::invalid_argument, "plausibility model is not fitted");
    if (model.mean.size() != skeleton.limb_pairs.size())
        throw Error(Errc::skeleton_mismatch, "plausibility model fitted on a different skeleton");
    const double torso = torso_length(pose, skeleton);
    if (torso < 1e-6) throw Error(Errc::degenerate_torso, "torso length < 1e-6");

    double worst = -1.0;
    for (std::size_t b = 0; b < skeleton.limb_pairs.size(); ++b) {
        const auto& [a, c] = skeleton.limb_pairs[b];
        const Keypoint& ka = pose.keypoints[static_cast<std::size_t>(a)];
        const Keypoint& kc = pose.keypoints[static_cast<std::size_t>(c)];
        if (!ka.labeled() || !kc.labeled()) continue;
        const double ratio = std::hypot(ka.x - kc.x, ka.y - kc.y) / torso;
        worst = std::max(worst, std::abs(ratio - model.mean[b]) / model.stddev[b]);
    }
    return worst < 0.0 ? std::numeric_limits<double>::infinity() : worst;
}

inline bool plausibility_passes(const PersonPose& pose, const PlausibilityModel& model,
                                const SkeletonSpec& skeleton) {
    return plausibility_score(pose, model, skeleton) <= model.threshold;
}

// ---------------------------------------------------------------------------
// Pose clustering in a translation/scale-free articulation space.
// ---------------------------------------------------------------------------

// Keypoints centered on the torso midpoint and scaled by torso length,
// flattened to 2K values (unlabeled keypoints map to the origin).
inline std::vector<double> normalize_pose(const PersonPose& pose, const SkeletonSpec& skeleton) {
    const double torso = torso_length(pose, skeleton);
    if (torso < 1e-6) throw Error(Errc::degenerate_torso, "torso length < 1e-6");
    const auto [tx, ty] = detail::keypoint_midpoint(pose, skeleton.torso_top);
    const auto [bx, by] = detail::keypoint_midpoint(pose, skeleton.torso_bottom);
    const double cx = (tx + bx) / 2.0, cy = (ty + by) / 2.0;

    std::vector<double> out(2 * static_cast<std::size_t>(skeleton.keypoint_count()), 0.0);
    for (std::size_t j = 0; j < pose.keypoints.size(); ++j) {
        const Keypoint& kp = pose.keypoints[j];
        if (!kp.labeled()) continue;
        out[2 * j + 0] = (kp.x - cx) / torso;
        out[2 * j + 1] = (kp.y - cy) / torso;
    }
    return out;
}

struct ClusterModel {
    int k = 10;
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignment;
    std::vector<std::size_t> sizes;
    double objective = 0.0;  // within-cluster sum of squares

    int nearest(const std::vector<double>& point) const {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            double d = 0.0;
            for (std::size_t i = 0; i < point.size(); ++i) {
                const double diff = point[i] - centroids[c][i];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        return best;
    }
};

// Lloyd iterations from seeded farthest-point initialization, run to the
// assignment fixpoint (at most 100 rounds). The within-cluster objective is
// non-increasing across iterations by construction.
inline ClusterModel cluster_poses(const std::vector<PersonPose>& poses, const SkeletonSpec& skeleton, int k,
                                  std::uint64_t seed) {
    if (k < 1) throw Error(Errc::invalid_argument, "cluster count must be >= 1");
    if (poses.size() < static_cast<std::size_t>(k))
        throw Error(Errc::too_few_poses,
                    std::to_string(poses.size()) + " poses cannot fill " + std::to_string(k) + " clusters");

    std::vector<std::vector<double>> points;
    points.reserve(poses.size());
    for (const PersonPose& pose : poses) points.push_back(normalize_pose(pose, skeleton));
    const std::size_t dim = points.front().size();

    auto sqdist = [dim](const std::vector<double>& a, const std::vector<double>& b) {
        double d = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double diff = a[i] - b[i];
            d += diff * diff;
        }
        return d;
    };

    ClusterModel model;
    model.k = k;
    Rng rng(derive_seed(seed, 0x636c7573));
    model.centroids.push_back(points[rng.bounded(points.size())]);
    std::vector<double> min_d(points.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(model.centroids.size()) < k) {
        std::size_t farthest = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            min_d[i] = std::min(min_d[i], sqdist(points[i], model.centroids.back()));
            if (min_d[i] > best) {
                best = min_d[i];
                farthest = i;
            }
        }
        model.centroids.push_back(points[farthest]);
    }

    model.assignment.assign(points.size(), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int a = model.nearest(points[i]);
            if (a != model.assignment[i]) {
                model.assignment[i] = a;
                changed = true;
            }
        }
        if (!changed) break;
        for (int c = 0; c < k; ++c) {
            std::vector<double> mean(dim, 0.0);
            std::size_t n = 0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (model.assignment[i] != c) continue;
                for (std::size_t d = 0; d < dim; ++d) mean[d] += points[i][d];
                ++n;
            }
            if (n == 0) continue;  // empty cluster keeps its centroid
            for (double& v : mean) v /= static_cast<double>(n);
            model.centroids[static_cast<std::size_t>(c)] = std::move(mean);
        }
    }

    model.sizes.assign(static_cast<std::size_t>(k), 0);
    model.objective = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        ++model.sizes[static_cast<std::size_t>(model.assignment[i])];
        model.objective += sqdist(points[i], model.centroids[static_cast<std::size_t>(model.assignment[i])]);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Budgeted augmentation favoring under-represented clusters.
// ---------------------------------------------------------------------------

// Generates transform candidates from per-candidate derived seeds, keeps a
// candidate iff it passes the discriminator and its nearest cluster is
// currently among the smallest, and stops after `budget` acceptances.
// Throws BudgetUnreachable once budget * attempts_max candidate failures
// (implausible or rejected by cluster size) have accumulated.
inline std::vector<PersonPose> augment_dataset(const std::vector<PersonPose>& poses, const SkeletonSpec& skeleton,
                                               const TransformParams& params, const PlausibilityModel& plaus,
                                               const ClusterModel& clusters, std::size_t budget) {
    params.validate();
    if (budget == 0) return {};
    if (poses.empty()) throw Error(Errc::empty_input, "augmenting an empty corpus");

    std::vector<std::size_t> sizes = clusters.sizes;
    std::vector<PersonPose> accepted;
    accepted.reserve(budget);

    const std::size_t failure_budget = budget * static_cast<std::size_t>(params.attempts_max);
    std::size_t failures = 0;

    for (std::uint64_t candidate = 0; accepted.size() < budget; ++candidate) {
        if (failures >= failure_budget)
            throw Error(Errc::budget_unreachable, "accepted " + std::to_string(accepted.size()) + "/" +
                                                      std::to_string(budget) + " after " + std::to_string(failures) +
                                                      " failures");
        Rng rng(derive_seed(params.seed, candidate));
        const PersonPose& source = poses[rng.bounded(poses.size())];

        bool plausible = false;
        PersonPose transformed;
        for (int attempt = 0; attempt < params.attempts_max; ++attempt) {
            transformed = transform_pose(source, skeleton, params, rng);
            if (plausibility_passes(transformed, plaus, skeleton)) {
                plausible = true;
                break;
            }
            if (++failures >= failure_budget) break;
        }
        if (!plausible) continue;

        const int cluster = clusters.nearest(normalize_pose(transformed, skeleton));
        const std::size_t min_size = *std::min_element(sizes.begin(), sizes.end());
        if (sizes[static_cast<std::size_t>(cluster)] == min_size) {
            ++sizes[static_cast<std::size_t>(cluster)];
            accepted.push_back(std::move(transformed));
        } else {
            ++failures;
        }
    }
    return accepted;
}

}  // namespace posefuse
