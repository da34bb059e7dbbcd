// Synthetic scenes and noisy virtual detectors: lets the fusion pipeline be
// exercised and measured end-to-end without any trained network.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "posefuse/association.hpp"
#include "posefuse/augment.hpp"
#include "posefuse/bagging.hpp"
#include "posefuse/dataio.hpp"
#include "posefuse/error.hpp"
#include "posefuse/metrics.hpp"
#include "posefuse/rng.hpp"
#include "posefuse/types.hpp"

namespace posefuse {

struct DetectorNoiseModel {
    double coordinate_noise_sigma = 0.0;  // pixels
    double score_bias = 0.0;
    double miss_rate = 0.0;
    std::pair<double, double> systematic_offset{0.0, 0.0};
    std::uint64_t seed = 0;

    void validate() const {
        if (!(coordinate_noise_sigma >= 0.0))
            throw Error(Errc::invalid_argument, "coordinate_noise_sigma must be >= 0");
        if (!(miss_rate >= 0.0 && miss_rate < 1.0))
            throw Error(Errc::invalid_argument, "miss_rate must lie in [0, 1)");
        if (!std::isfinite(score_bias) || !std::isfinite(systematic_offset.first) ||
            !std::isfinite(systematic_offset.second))
            throw Error(Errc::non_finite_input, "noise model fields must be finite");
    }
};

// A neutral standing figure, centered on the torso midpoint, ~180 px tall.
// Articulated variants of this template are the sampling prior for scenes
// and for fitting the shared plausibility model.
inline PersonPose canonical_pose(const SkeletonSpec& skeleton) {
    static const std::map<std::string, std::vector<std::pair<double, double>>> layouts = {
        {"coco17",
         {{0, -75},  {4, -80},  {-4, -80}, {8, -77},  {-8, -77}, {18, -50}, {-18, -50}, {26, -22}, {-26, -22},
          {30, 4},   {-30, 4},  {12, 0},   {-12, 0},  {14, 45},  {-14, 45}, {15, 90},   {-15, 90}}},
        {"mpii16",
         {{-15, 90}, {-14, 45}, {-12, 0},  {12, 0},   {14, 45},  {15, 90},  {0, 0},     {0, -50},  {0, -62},
          {0, -85},  {-30, 4},  {-26, -22}, {-18, -50}, {18, -50}, {26, -22}, {30, 4}}},
    };
    const auto it = layouts.find(skeleton.name);
    if (it == layouts.end())
        throw Error(Errc::invalid_argument, "no canonical template for skeleton '" + skeleton.name + "'");
    if (it->second.size() != static_cast<std::size_t>(skeleton.keypoint_count()))
        throw Error(Errc::skeleton_mismatch, "template size does not match skeleton '" + skeleton.name + "'");
    PersonPose pose;
    pose.score = 1.0;
    for (const auto& [x, y] : it->second) pose.keypoints.push_back(Keypoint{x, y, kLabeledVisible, 1.0});
    return pose;
}

namespace detail {

inline void set_bbox_and_area(PersonPose& pose) {
    double lo_x = 0, lo_y = 0, hi_x = 0, hi_y = 0;
    bool any = false;
    for (const Keypoint& kp : pose.keypoints) {
        if (!kp.labeled()) continue;
        if (!any) {
            lo_x = hi_x = kp.x;
            lo_y = hi_y = kp.y;
            any = true;
        } else {
            lo_x = std::min(lo_x, kp.x);
            hi_x = std::max(hi_x, kp.x);
            lo_y = std::min(lo_y, kp.y);
            hi_y = std::max(hi_y, kp.y);
        }
    }
    if (!any) return;
    pose.bbox = BBox{lo_x, lo_y, hi_x - lo_x, hi_y - lo_y};
    pose.area = std::max((hi_x - lo_x) * (hi_y - lo_y), 1.0);
}

inline TransformParams scene_jitter_params() {
    TransformParams params;
    params.limb_rotation_max = 0.25;
    params.limb_scale_range = {0.92, 1.08};
    return params;
}

}  // namespace detail

// Articulation prior shared with the augmentation module: fit the bone-ratio
// model on a corpus of jittered canonical poses.
inline PlausibilityModel reference_plausibility(const SkeletonSpec& skeleton, double threshold = 3.0) {
    const PersonPose base = canonical_pose(skeleton);
    Rng rng(derive_seed(0x706c617573u, 0));  // fixed: the prior is a constant of the skeleton
    std::vector<PersonPose> corpus;
    corpus.reserve(64);
    for (int i = 0; i < 64; ++i) corpus.push_back(transform_pose(base, skeleton, detail::scene_jitter_params(), rng));
    return fit_plausibility(corpus, skeleton, threshold);
}

// Samples one plausible articulated figure: jitter the template, scale it
// globally (ratio-preserving), and translate to `center`.
inline PersonPose sample_scene_pose(const SkeletonSpec& skeleton, const PlausibilityModel& plausibility,
                                    std::pair<double, double> center, Rng& rng) {
    const PersonPose base = canonical_pose(skeleton);
    for (int attempt = 0; attempt < 64; ++attempt) {
        PersonPose candidate = transform_pose(base, skeleton, detail::scene_jitter_params(), rng);
        const double scale = rng.uniform(0.7, 1.3);
        for (Keypoint& kp : candidate.keypoints) {
            kp.x = kp.x * scale + center.first;
            kp.y = kp.y * scale + center.second;
        }
        if (!plausibility_passes(candidate, plausibility, skeleton)) continue;
        detail::set_bbox_and_area(candidate);
        return candidate;
    }
    throw Error(Errc::placement_failure, "could not sample a plausible pose");
}

// One synthetic image: `num_people` plausible figures with centers at least
// 10 px apart inside the frame.
inline std::pair<std::vector<PersonPose>, ImageInfo> generate_scene(int num_people, const SkeletonSpec& skeleton,
                                                                    std::pair<int, int> image_size,
                                                                    std::uint64_t seed, std::int64_t image_id = 1) {
    if (num_people < 0) throw Error(Errc::invalid_argument, "num_people must be >= 0");
    const double w = static_cast<double>(image_size.first);
    const double h = static_cast<double>(image_size.second);
    if (w <= 0.0 || h <= 0.0) throw Error(Errc::invalid_argument, "image size must be positive");

    ImageInfo info;
    info.id = image_id;
    info.width = image_size.first;
    info.height = image_size.second;
    info.file_name = "synthetic_" + std::to_string(image_id) + ".png";

    std::vector<PersonPose> poses;
    if (num_people == 0) return {poses, info};

    const PlausibilityModel plausibility = reference_plausibility(skeleton);
    Rng rng(derive_seed(seed, 0x7363656eu));
    const double margin_x = std::min(120.0, w / 2.0);
    const double margin_y = std::min(130.0, h / 2.0);

    std::vector<std::pair<double, double>> centers;
    for (int p = 0; p < num_people; ++p) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const std::pair<double, double> c{rng.uniform(margin_x, w - margin_x),
                                              rng.uniform(margin_y, h - margin_y)};
            bool clear = true;
            for (const auto& other : centers)
                clear = clear && std::hypot(c.first - other.first, c.second - other.second) >= 10.0;
            if (!clear) continue;
            PersonPose pose = sample_scene_pose(skeleton, plausibility, c, rng);
            pose.image_id = image_id;
            poses.push_back(std::move(pose));
            centers.push_back(c);
            placed = true;
        }
        if (!placed)
            throw Error(Errc::placement_failure,
                        "no free center for person " + std::to_string(p) + " after 100 attempts");
    }
    return {poses, info};
}

// Virtual detector: drops each instance with miss_rate, perturbs survivors
// with Gaussian noise plus a systematic offset, and scores them by their
// true OKS against the source (plus bias, clamped) so scores carry the
// quality signal that score-based weighting assumes.
inline std::vector<PersonPose> simulate_detector(const std::vector<PersonPose>& ground_truth,
                                                 const DetectorNoiseModel& noise, const SkeletonSpec& skeleton) {
    noise.validate();
    Rng rng(derive_seed(noise.seed, 0x646574u));
    std::vector<PersonPose> out;
    out.reserve(ground_truth.size());
    for (const PersonPose& gt : ground_truth) {
        const bool dropped = rng.uniform() < noise.miss_rate;
        PersonPose pred = gt;
        pred.area.reset();
        for (Keypoint& kp : pred.keypoints) {
            if (!kp.labeled()) continue;
            kp.x += rng.gaussian() * noise.coordinate_noise_sigma + noise.systematic_offset.first;
            kp.y += rng.gaussian() * noise.coordinate_noise_sigma + noise.systematic_offset.second;
        }
        if (dropped) continue;  // RNG consumed above keeps survivors' noise stable across miss rates
        const double quality = oks(pred, gt, skeleton);
        pred.score = std::clamp(quality + noise.score_bias, 0.0, 1.0);
        for (Keypoint& kp : pred.keypoints)
            if (kp.labeled()) kp.confidence = pred.score;
        detail::set_bbox_and_area(pred);
        pred.area.reset();  // predictions carry a bbox, not an annotated area
        out.push_back(std::move(pred));
    }
    return out;
}

// ---------------------------------------------------------------------------
// The headline experiment: same scenes through each base detector and each
// fusion strategy, compared by mAP and mean matched keypoint error.
// ---------------------------------------------------------------------------

struct ExperimentRow {
    std::string label;
    EvalReport report;
    std::vector<double> per_scene_mean_error;  // pixels, matched instances only
    double mean_error = 0.0;
};

struct ExperimentResult {
    std::vector<ExperimentRow> rows;
    std::string table;
};

namespace detail {

// Mean pixel distance over labeled keypoints of greedily matched pairs.
// A pair counts only when OKS >= 0.1: genuine correspondences clear that at
// any plausible noise level, while leftover predictions forced onto a
// distant still-free ground truth sit at essentially zero similarity and
// would otherwise dominate the mean.
inline double scene_mean_error(const std::vector<PersonPose>& predictions,
                               const std::vector<PersonPose>& ground_truth, const SkeletonSpec& skeleton) {
    const std::vector<MatchRecord> records = greedy_match(predictions, ground_truth, skeleton);
    std::map<std::int64_t, std::vector<std::size_t>> preds_by_image;
    for (std::size_t i = 0; i < predictions.size(); ++i) preds_by_image[predictions[i].image_id].push_back(i);

    double sum = 0.0;
    std::size_t pairs = 0;
    for (const MatchRecord& rec : records) {
        if (rec.gt_index < 0 || rec.oks < 0.1) continue;
        const PersonPose& pred = predictions[preds_by_image[rec.image_id][static_cast<std::size_t>(rec.pred_index)]];
        const PersonPose& gt = ground_truth[static_cast<std::size_t>(rec.gt_index)];
        double d = 0.0;
        int labeled = 0;
        for (std::size_t j = 0; j < gt.keypoints.size(); ++j) {
            if (!gt.keypoints[j].labeled()) continue;
            d += std::hypot(pred.keypoints[j].x - gt.keypoints[j].x, pred.keypoints[j].y - gt.keypoints[j].y);
            ++labeled;
        }
        if (labeled == 0) continue;
        sum += d / labeled;
        ++pairs;
    }
    return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

}  // namespace detail

inline ExperimentResult run_fusion_experiment(int num_scenes, const std::vector<DetectorNoiseModel>& detectors,
                                              const std::vector<std::string>& strategies,
                                              const SkeletonSpec& skeleton, std::uint64_t seed) {
    if (num_scenes < 1) throw Error(Errc::invalid_argument, "num_scenes must be >= 1");
    if (detectors.size() < 2) throw Error(Errc::invalid_argument, "experiment needs at least 2 detectors");
    for (const DetectorNoiseModel& d : detectors) d.validate();
    for (const std::string& s : strategies)
        if (s != "simple" && s != "weighted")
            throw Error(Errc::invalid_argument, "strategy '" + s + "' is not simple|weighted");

    // Per scene: ground truth, per-detector predictions, per-strategy fusions.
    std::vector<PersonPose> all_gt;
    std::vector<std::vector<PersonPose>> det_preds(detectors.size());
    std::vector<std::vector<PersonPose>> fused(strategies.size());
    std::vector<std::vector<double>> det_errors(detectors.size());
    std::vector<std::vector<double>> fused_errors(strategies.size());

    AssociationConfig assoc;
    for (int scene = 0; scene < num_scenes; ++scene) {
        const std::uint64_t scene_seed = derive_seed(seed, static_cast<std::uint64_t>(scene));
        Rng scene_rng(derive_seed(scene_seed, 0x70656f70u));
        const int people = 1 + static_cast<int>(scene_rng.bounded(3));
        auto [gt, info] = generate_scene(people, skeleton, {640, 480}, scene_seed, scene + 1);

        std::map<std::string, std::vector<PersonPose>> by_model;
        for (std::size_t d = 0; d < detectors.size(); ++d) {
            DetectorNoiseModel noise = detectors[d];
            noise.seed = derive_seed(noise.seed, static_cast<std::uint64_t>(scene));
            std::vector<PersonPose> preds = simulate_detector(gt, noise, skeleton);
            const std::string model_id = "det" + std::to_string(d);
            for (PersonPose& p : preds) p.source_model = model_id;
            det_errors[d].push_back(detail::scene_mean_error(preds, gt, skeleton));
            by_model[model_id] = preds;
            det_preds[d].insert(det_preds[d].end(), preds.begin(), preds.end());
        }

        if (!strategies.empty()) {
            const std::vector<MatchedGroup> groups = match_instances(by_model, skeleton, assoc);
            for (std::size_t s = 0; s < strategies.size(); ++s) {
                BaggingConfig bag;
                bag.mode = strategies[s] == "simple" ? BaggingMode::simple : BaggingMode::weighted;
                std::vector<PersonPose> scene_fused;
                for (const MatchedGroup& g : groups) {
                    FusedResult r = fuse_keypoints(g, bag);
                    scene_fused.push_back(r.person());
                }
                fused_errors[s].push_back(detail::scene_mean_error(scene_fused, gt, skeleton));
                fused[s].insert(fused[s].end(), scene_fused.begin(), scene_fused.end());
            }
        }
        all_gt.insert(all_gt.end(), gt.begin(), gt.end());
    }

    ExperimentResult result;
    auto push_row = [&](const std::string& label, const std::vector<PersonPose>& preds,
                        std::vector<double> errors) {
        ExperimentRow row;
        row.label = label;
        row.report = evaluate_map(preds, all_gt, skeleton);
        row.per_scene_mean_error = std::move(errors);
        double sum = 0.0;
        for (double e : row.per_scene_mean_error) sum += e;
        row.mean_error = row.per_scene_mean_error.empty() ? 0.0 : sum / row.per_scene_mean_error.size();
        result.rows.push_back(std::move(row));
    };
    for (std::size_t d = 0; d < detectors.size(); ++d)
        push_row("det" + std::to_string(d), det_preds[d], std::move(det_errors[d]));
    for (std::size_t s = 0; s < strategies.size(); ++s)
        push_row("fused_" + strategies[s], fused[s], std::move(fused_errors[s]));

    std::vector<std::pair<std::string, EvalReport>> table_rows;
    for (const ExperimentRow& row : result.rows) table_rows.emplace_back(row.label, row.report);
    result.table = format_eval_table(table_rows);
    return result;
}

}  // namespace posefuse
