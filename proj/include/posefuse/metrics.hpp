// Evaluation surfaces: OKS-based average precision (COCO-style greedy
// matching, 101-point interpolation), PCKh, confusion-matrix metrics,
// convergence checkpoint tables and a wall-clock throughput harness.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "posefuse/association.hpp"
#include "posefuse/error.hpp"
#include "posefuse/types.hpp"

namespace posefuse {

struct MatchRecord {
    std::int64_t image_id = 0;
    int pred_index = -1;  // input index within the image's predictions
    int gt_index = -1;    // global index into the ground-truth list, -1 if unmatched
    double oks = 0.0;
    double score = 0.0;
};

struct EvalReport {
    double map = 0.0;
    double map_50 = 0.0;
    double map_75 = 0.0;
    double map_medium = 0.0;
    double map_large = 0.0;
    std::optional<double> pckh_05;
    std::optional<double> precision, recall, f1, accuracy;
    std::vector<MatchRecord> match_log;
};

struct ConfusionMetrics {
    std::optional<double> accuracy, precision, recall, f1;
};

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct BenchRow {
    std::pair<int, int> input_resolution{0, 0};  // (w, h) pixels
    double fps = 0.0;
    double latency_ms = 0.0;
};

namespace detail {

// Greedy score-ordered matching within each image: the highest-score
// prediction claims the unmatched ground truth of highest OKS, and so on.
// The matching itself is threshold-free; callers threshold the recorded
// OKS. Ground truth without labeled keypoints is ignored.
inline std::vector<MatchRecord> greedy_match(const std::vector<PersonPose>& predictions,
                                             const std::vector<PersonPose>& ground_truth,
                                             const SkeletonSpec& skeleton) {
    for (const PersonPose& p : predictions)
        if (!std::isfinite(p.score))
            throw Error(Errc::missing_score, "prediction carries a non-finite score");

    std::map<std::int64_t, std::vector<std::size_t>> preds_by_image, gt_by_image;
    for (std::size_t i = 0; i < predictions.size(); ++i) preds_by_image[predictions[i].image_id].push_back(i);
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
        bool labeled = false;
        for (const Keypoint& kp : ground_truth[i].keypoints) labeled = labeled || kp.labeled();
        if (labeled) gt_by_image[ground_truth[i].image_id].push_back(i);
    }

    std::vector<MatchRecord> records;
    records.reserve(predictions.size());
    for (const auto& [image_id, pidx] : preds_by_image) {
        std::vector<std::size_t> order = pidx;  // input order within the image
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (predictions[a].score != predictions[b].score) return predictions[a].score > predictions[b].score;
            return a < b;  // stable input-index tiebreak
        });

        std::vector<std::size_t> gts;
        if (auto it = gt_by_image.find(image_id); it != gt_by_image.end()) gts = it->second;
        std::vector<char> taken(gts.size(), 0);

        for (std::size_t p : order) {
            MatchRecord rec;
            rec.image_id = image_id;
            rec.pred_index = static_cast<int>(std::find(pidx.begin(), pidx.end(), p) - pidx.begin());
            rec.score = predictions[p].score;
            double best = -1.0;
            std::size_t best_g = 0;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (taken[g]) continue;
                const double q = oks(predictions[p], ground_truth[gts[g]], skeleton);
                if (q > best) {
                    best = q;
                    best_g = g;
                }
            }
            if (best >= 0.0) {
                taken[best_g] = 1;
                rec.gt_index = static_cast<int>(gts[best_g]);
                rec.oks = best;
            }
            records.push_back(rec);
        }
    }
    return records;
}

enum class AreaClass { all, medium, large };

inline bool area_in_class(double area, AreaClass cls) {
    switch (cls) {
        case AreaClass::all: return true;
        case AreaClass::medium: return area > 32.0 * 32.0 && area <= 96.0 * 96.0;
        case AreaClass::large: return area > 96.0 * 96.0;
    }
    return false;
}

// Average precision at one OKS threshold over one area class, by 101-point
// precision interpolation over recall. With no in-class ground truth the
// class is vacuously perfect unless in-class false positives exist.
inline double average_precision(const std::vector<MatchRecord>& records,
                                const std::vector<PersonPose>& predictions,
                                const std::vector<PersonPose>& ground_truth, double threshold, AreaClass cls) {
    std::size_t npos = 0;
    std::vector<char> gt_in_class(ground_truth.size(), 0);
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
        bool labeled = false;
        for (const Keypoint& kp : ground_truth[i].keypoints) labeled = labeled || kp.labeled();
        if (!labeled) continue;
        const auto area = ground_truth[i].reference_area();
        if (!area) throw Error(Errc::missing_area, "ground truth without area");
        if (area_in_class(*area, cls)) {
            gt_in_class[i] = 1;
            ++npos;
        }
    }

    // Detections relevant to this class: matched to in-class gt (tp/fp by
    // OKS), or unmatched with own area in class (fp); matches to
    // out-of-class gt are ignored.
    std::map<std::int64_t, std::vector<std::size_t>> preds_by_image;
    for (std::size_t i = 0; i < predictions.size(); ++i) preds_by_image[predictions[i].image_id].push_back(i);

    struct Det {
        double score;
        std::int64_t image_id;
        int rank;
        bool tp;
    };
    std::vector<Det> dets;
    for (const MatchRecord& rec : records) {
        if (rec.gt_index >= 0) {
            if (!gt_in_class[static_cast<std::size_t>(rec.gt_index)]) continue;
            dets.push_back({rec.score, rec.image_id, rec.pred_index, rec.oks >= threshold});
        } else {
            if (cls != AreaClass::all) {
                // Attribute unmatched detections by their own extent.
                const PersonPose& p =
                    predictions[preds_by_image[rec.image_id][static_cast<std::size_t>(rec.pred_index)]];
                const auto area = p.reference_area();
                if (!area || !area_in_class(*area, cls)) continue;
            }
            dets.push_back({rec.score, rec.image_id, rec.pred_index, false});
        }
    }

    if (npos == 0) return dets.empty() ? 1.0 : 0.0;
    if (dets.empty()) return 0.0;

    std::sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.rank < b.rank;
    });

    std::vector<double> recall(dets.size()), precision(dets.size());
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        (dets[i].tp ? tp : fp) += 1;
        recall[i] = static_cast<double>(tp) / static_cast<double>(npos);
        precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    for (std::size_t i = dets.size() - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);

    double ap = 0.0;
    std::size_t idx = 0;
    for (int r = 0; r <= 100; ++r) {
        const double want = static_cast<double>(r) / 100.0;
        while (idx < recall.size() && recall[idx] < want) ++idx;
        if (idx == recall.size()) break;
        ap += precision[idx];
    }
    return ap / 101.0;
}

}  // namespace detail

// mAP family per the COCO protocol: greedy per-image matching, 101-point
// interpolated AP averaged over OKS thresholds 0.50:0.05:0.95; medium and
// large restrict ground truth by area.
inline EvalReport evaluate_map(const std::vector<PersonPose>& predictions,
                               const std::vector<PersonPose>& ground_truth, const SkeletonSpec& skeleton) {
    EvalReport report;
    report.match_log = detail::greedy_match(predictions, ground_truth, skeleton);

    double sum = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double t = 0.50 + 0.05 * i;
        const double ap =
            detail::average_precision(report.match_log, predictions, ground_truth, t, detail::AreaClass::all);
        sum += ap;
        if (i == 0) report.map_50 = ap;
        if (i == 5) report.map_75 = ap;
    }
    report.map = sum / 10.0;

    double sum_m = 0.0, sum_l = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double t = 0.50 + 0.05 * i;
        sum_m +=
            detail::average_precision(report.match_log, predictions, ground_truth, t, detail::AreaClass::medium);
        sum_l += detail::average_precision(report.match_log, predictions, ground_truth, t, detail::AreaClass::large);
    }
    report.map_medium = sum_m / 10.0;
    report.map_large = sum_l / 10.0;
    return report;
}

// PCKh: fraction of labeled ground-truth keypoints whose matched prediction
// lands within alpha * head-segment length. Instances are paired by
// evaluate_map's greedy matching kept at OKS >= 0.5; keypoints of unmatched
// ground truth count as misses. Instances whose head segment is unlabeled
// or degenerate are skipped entirely.
inline double evaluate_pckh(const std::vector<PersonPose>& predictions, const std::vector<PersonPose>& ground_truth,
                            const SkeletonSpec& skeleton, double alpha = 0.5) {
    if (!skeleton.head_segment)
        throw Error(Errc::no_head_segment, "skeleton '" + skeleton.name + "' defines no head segment");
    const auto [h0, h1] = *skeleton.head_segment;

    const std::vector<MatchRecord> records = detail::greedy_match(predictions, ground_truth, skeleton);
    std::vector<int> matched_pred_rank(ground_truth.size(), -1);  // gt -> pred input index
    std::vector<std::int64_t> matched_image(ground_truth.size(), 0);
    for (const MatchRecord& rec : records)
        if (rec.gt_index >= 0 && rec.oks >= 0.5) {
            matched_pred_rank[static_cast<std::size_t>(rec.gt_index)] = rec.pred_index;
            matched_image[static_cast<std::size_t>(rec.gt_index)] = rec.image_id;
        }

    std::map<std::int64_t, std::vector<std::size_t>> preds_by_image;
    for (std::size_t i = 0; i < predictions.size(); ++i) preds_by_image[predictions[i].image_id].push_back(i);

    std::size_t correct = 0, total = 0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        const PersonPose& gt = ground_truth[g];
        const Keypoint& ha = gt.keypoints[static_cast<std::size_t>(h0)];
        const Keypoint& hb = gt.keypoints[static_cast<std::size_t>(h1)];
        if (!ha.labeled() || !hb.labeled()) continue;
        const double head = std::hypot(ha.x - hb.x, ha.y - hb.y);
        if (head < 1e-9) continue;

        const PersonPose* pred = nullptr;
        if (matched_pred_rank[g] >= 0) {
            const std::vector<std::size_t>& pidx = preds_by_image[gt.image_id];
            pred = &predictions[pidx[static_cast<std::size_t>(matched_pred_rank[g])]];
        }
        for (std::size_t j = 0; j < gt.keypoints.size(); ++j) {
            if (!gt.keypoints[j].labeled()) continue;
            ++total;
            if (!pred) continue;
            const double d = std::hypot(pred->keypoints[j].x - gt.keypoints[j].x,
                                        pred->keypoints[j].y - gt.keypoints[j].y);
            if (d <= alpha * head) ++correct;
        }
    }
    if (total == 0) throw Error(Errc::no_labeled_keypoints, "no evaluable ground-truth keypoints");
    return static_cast<double>(correct) / static_cast<double>(total);
}

// Confusion-matrix metrics with explicit absence instead of NaN whenever a
// denominator is zero.
inline ConfusionMetrics confusion_metrics(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn) {
    if (tp < 0 || fp < 0 || fn < 0 || tn < 0)
        throw Error(Errc::invalid_argument, "confusion counts must be nonnegative");
    ConfusionMetrics m;
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    const std::int64_t total = tp + fp + fn + tn;
    if (total > 0) m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
    return m;
}

// Harmonic mean of precision and recall.
inline double f1_score(double precision, double recall) {
    if (!(precision >= 0.0) || !(recall >= 0.0) || precision + recall <= 0.0)
        throw Error(Errc::invalid_argument, "f1 undefined for these precision/recall values");
    return 2.0 * precision * recall / (precision + recall);
}

// Maps keypoint predictions onto confusion counts. Instances pair by the
// greedy matching; within a pair, a confident prediction (confidence > 0.5)
// is tp when within `distance_threshold` of a labeled ground-truth keypoint
// and fp otherwise; labeled keypoints with no qualifying prediction are fn;
// below-confidence predictions on unlabeled keypoints are tn. Keypoints of
// unmatched predictions count against an unlabeled background.
inline ConfusionCounts keypoint_confusion(const std::vector<PersonPose>& predictions,
                                          const std::vector<PersonPose>& ground_truth,
                                          const SkeletonSpec& skeleton, double distance_threshold) {
    const std::vector<MatchRecord> records = detail::greedy_match(predictions, ground_truth, skeleton);
    std::map<std::int64_t, std::vector<std::size_t>> preds_by_image;
    for (std::size_t i = 0; i < predictions.size(); ++i) preds_by_image[predictions[i].image_id].push_back(i);

    ConfusionCounts counts;
    std::vector<char> gt_matched(ground_truth.size(), 0);

    for (const MatchRecord& rec : records) {
        const PersonPose& pred = predictions[preds_by_image[rec.image_id][static_cast<std::size_t>(rec.pred_index)]];
        const PersonPose* gt = rec.gt_index >= 0 ? &ground_truth[static_cast<std::size_t>(rec.gt_index)] : nullptr;
        if (gt) gt_matched[static_cast<std::size_t>(rec.gt_index)] = 1;

        for (std::size_t j = 0; j < pred.keypoints.size(); ++j) {
            const bool confident = pred.keypoints[j].confidence > 0.5;
            const bool labeled = gt && gt->keypoints[j].labeled();
            if (labeled) {
                const double d = std::hypot(pred.keypoints[j].x - gt->keypoints[j].x,
                                            pred.keypoints[j].y - gt->keypoints[j].y);
                if (confident && d <= distance_threshold) {
                    ++counts.tp;
                } else {
                    if (confident) ++counts.fp;
                    ++counts.fn;  // no qualifying prediction for this labeled keypoint
                }
            } else {
                if (confident)
                    ++counts.fp;
                else
                    ++counts.tn;
            }
        }
    }
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        if (gt_matched[g]) continue;
        for (const Keypoint& kp : ground_truth[g].keypoints)
            if (kp.labeled()) ++counts.fn;
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Convergence checkpoints.
// ---------------------------------------------------------------------------

struct ConvergenceRow {
    std::vector<std::pair<int, std::optional<double>>> checkpoints;  // epoch -> value (absent before history)
};

// Emits the metric at the requested checkpoint epochs, taking the exact
// epoch when recorded and the last value before it otherwise.
inline ConvergenceRow convergence_report(const std::vector<std::pair<int, double>>& per_epoch,
                                         const std::vector<int>& checkpoints = {12, 24, 36, 48, 60}) {
    if (per_epoch.empty()) throw Error(Errc::empty_history, "no epochs recorded");
    for (std::size_t i = 1; i < per_epoch.size(); ++i)
        if (per_epoch[i].first <= per_epoch[i - 1].first)
            throw Error(Errc::invalid_argument, "epochs must be strictly increasing");

    ConvergenceRow row;
    for (int cp : checkpoints) {
        std::optional<double> value;
        for (const auto& [epoch, v] : per_epoch) {
            if (epoch > cp) break;
            value = v;
        }
        row.checkpoints.emplace_back(cp, value);
    }
    return row;
}

// ---------------------------------------------------------------------------
// Throughput harness.
// ---------------------------------------------------------------------------

// Runs the workload once unrecorded (warmup), then `repeats` timed passes
// per resolution, reporting the median wall-clock latency and derived fps.
inline std::vector<BenchRow> bench_throughput(const std::function<void(std::pair<int, int>)>& workload,
                                              const std::vector<std::pair<int, int>>& resolutions, int repeats) {
    if (repeats < 3) throw Error(Errc::invalid_argument, "bench repeats must be >= 3");
    std::vector<BenchRow> rows;
    for (const auto& res : resolutions) {
        workload(res);  // warmup, excluded
        std::vector<double> ms(static_cast<std::size_t>(repeats));
        for (int i = 0; i < repeats; ++i) {
            const auto start = std::chrono::steady_clock::now();
            workload(res);
            const auto stop = std::chrono::steady_clock::now();
            ms[static_cast<std::size_t>(i)] =
                std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop - start).count();
        }
        std::sort(ms.begin(), ms.end());
        const std::size_t mid = ms.size() / 2;
        const double median = ms.size() % 2 ? ms[mid] : (ms[mid - 1] + ms[mid]) / 2.0;
        BenchRow row;
        row.input_resolution = res;
        row.latency_ms = median;
        row.fps = median > 0.0 ? 1000.0 / median : std::numeric_limits<double>::infinity();
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Plain-text table formatting.
// ---------------------------------------------------------------------------

inline std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(24) << "method" << std::right << std::setw(8) << "mAP" << std::setw(8) << "mAP50"
       << std::setw(8) << "mAP75" << std::setw(8) << "mAPm" << std::setw(8) << "mAPl" << "\n";
    os << std::fixed << std::setprecision(3);
    for (const auto& [name, r] : rows)
        os << std::left << std::setw(24) << name << std::right << std::setw(8) << r.map << std::setw(8) << r.map_50
           << std::setw(8) << r.map_75 << std::setw(8) << r.map_medium << std::setw(8) << r.map_large << "\n";
    return os.str();
}

inline std::string format_convergence_table(const std::vector<std::pair<std::string, ConvergenceRow>>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(24) << "method";
    if (!rows.empty())
        for (const auto& [cp, v] : rows.front().second.checkpoints) os << std::right << std::setw(8) << (std::to_string(cp) + "e");
    os << "\n" << std::fixed << std::setprecision(3);
    for (const auto& [name, row] : rows) {
        os << std::left << std::setw(24) << name;
        for (const auto& [cp, v] : row.checkpoints) {
            if (v)
                os << std::right << std::setw(8) << *v;
            else
                os << std::right << std::setw(8) << "-";
        }
        os << "\n";
    }
    return os.str();
}

inline std::string format_bench_table(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "resolution" << std::right << std::setw(12) << "fps" << std::setw(14)
       << "latency_ms" << "\n";
    os << std::fixed << std::setprecision(2);
    for (const BenchRow& r : rows) {
        const std::string res = std::to_string(r.input_resolution.first) + "x" +
                                std::to_string(r.input_resolution.second);
        os << std::left << std::setw(16) << res << std::right << std::setw(12) << r.fps << std::setw(14)
           << r.latency_ms << "\n";
    }
    return os.str();
}

}  // namespace posefuse
