// Stacking ensemble: encode matched groups as fixed-layout feature rows in a
// reference-bbox-normalized frame, train an integration-level regressor on
// rows matched to ground truth, and predict refined keypoints. Trained
// models serialize to a versioned binary format (magic "HEGP") that
// round-trips bit-exactly.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "posefuse/association.hpp"
#include "posefuse/bagging.hpp"
#include "posefuse/error.hpp"
#include "posefuse/learners.hpp"
#include "posefuse/matrix.hpp"
#include "posefuse/rng.hpp"
#include "posefuse/types.hpp"

namespace posefuse {

// Fixed feature ordering: model_id (ascending), then keypoint index, then
// (x, y, confidence), then the model's detection score — per model block
// length 3K + 1.
struct StackLayout {
    std::vector<std::string> model_ids;
    int keypoint_count = 0;

    std::size_t block_dim() const { return 3 * static_cast<std::size_t>(keypoint_count) + 1; }
    std::size_t feature_dim() const { return model_ids.size() * block_dim(); }
    std::size_t target_dim() const { return 2 * static_cast<std::size_t>(keypoint_count); }
};

struct StackDataset {
    StackLayout layout;
    Matrix features;                            // rows x feature_dim
    Matrix targets;                             // rows x 2K, same normalized frame
    std::vector<std::vector<char>> missing_mask;  // rows x model count
    std::vector<BBox> reference_boxes;          // per-row denormalization frame
};

// The frame every row is normalized to: the anchor member's bbox, or the
// bounds of its labeled keypoints. Extents are floored to stay divisible.
inline BBox group_reference_bbox(const MatchedGroup& group) {
    const PersonPose& anchor = group.anchor();
    BBox box;
    if (anchor.bbox) {
        box = *anchor.bbox;
    } else {
        bool any = false;
        double minx = 0, miny = 0, maxx = 0, maxy = 0;
        for (const Keypoint& kp : anchor.keypoints) {
            if (!kp.labeled() && kp.confidence <= 0.0) continue;
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
        if (!any)
            throw Error(Errc::missing_area, "group anchor has neither bbox nor observed keypoints");
        box = BBox{minx, miny, maxx - minx, maxy - miny};
    }
    box.w = std::max(box.w, 1e-6);
    box.h = std::max(box.h, 1e-6);
    return box;
}

// Encodes one group as a feature row in `box`'s frame. A model absent from
// the group gets the mean of the present models' blocks with score 0 and its
// missing flag set; group members whose model is not in the layout are
// ignored.
inline std::vector<double> encode_group(const MatchedGroup& group, const StackLayout& layout, const BBox& box,
                                        std::vector<char>* missing_out = nullptr) {
    if (group.members.empty()) throw Error(Errc::empty_group, "encoding an empty group");
    const std::size_t k = static_cast<std::size_t>(layout.keypoint_count);
    const std::size_t block = layout.block_dim();

    std::vector<double> row(layout.feature_dim(), 0.0);
    std::vector<char> missing(layout.model_ids.size(), 1);

    std::vector<double> block_mean(block - 1, 0.0);
    std::size_t present = 0;
    for (std::size_t m = 0; m < layout.model_ids.size(); ++m) {
        const PersonPose* member = nullptr;
        for (const PersonPose& cand : group.members)
            if (cand.source_model == layout.model_ids[m]) {
                member = &cand;
                break;
            }
        if (!member) continue;
        if (member->keypoints.size() != k)
            throw Error(Errc::dimension_mismatch, "group member keypoint count " +
                                                      std::to_string(member->keypoints.size()) +
                                                      " differs from layout K=" + std::to_string(k));
        double* slot = row.data() + m * block;
        for (std::size_t j = 0; j < k; ++j) {
            slot[3 * j + 0] = (member->keypoints[j].x - box.x) / box.w;
            slot[3 * j + 1] = (member->keypoints[j].y - box.y) / box.h;
            slot[3 * j + 2] = member->keypoints[j].confidence;
        }
        slot[block - 1] = member->score;
        missing[m] = 0;
        ++present;
        for (std::size_t s = 0; s + 1 < block; ++s) block_mean[s] += slot[s];
    }
    if (present == 0)
        throw Error(Errc::dimension_mismatch, "no group member matches the layout's model ids");
    for (double& v : block_mean) v /= static_cast<double>(present);
    for (std::size_t m = 0; m < layout.model_ids.size(); ++m) {
        if (!missing[m]) continue;
        double* slot = row.data() + m * block;
        for (std::size_t s = 0; s + 1 < block; ++s) slot[s] = block_mean[s];
        slot[block - 1] = 0.0;
    }
    if (missing_out) *missing_out = std::move(missing);
    return row;
}

// Builds the meta-training set: groups are matched to ground-truth
// instances per image (assignment on 1 - OKS, threshold from cfg); each
// matched pair becomes one feature/target row. Ground-truth keypoints the
// annotator left unlabeled are imputed with the present members' mean so
// targets carry no sentinel zeros.
inline StackDataset build_stack_dataset(const std::vector<MatchedGroup>& groups,
                                        const std::vector<PersonPose>& ground_truth, const SkeletonSpec& skeleton,
                                        const AssociationConfig& cfg = {}) {
    cfg.validate();
    StackDataset ds;
    ds.layout.keypoint_count = skeleton.keypoint_count();
    {
        std::set<std::string> ids;
        for (const MatchedGroup& g : groups)
            for (const PersonPose& m : g.members) ids.insert(m.source_model);
        ds.layout.model_ids.assign(ids.begin(), ids.end());
    }

    std::map<std::int64_t, std::vector<std::size_t>> groups_by_image, gt_by_image;
    for (std::size_t i = 0; i < groups.size(); ++i) groups_by_image[groups[i].image_id].push_back(i);
    for (std::size_t i = 0; i < ground_truth.size(); ++i) gt_by_image[ground_truth[i].image_id].push_back(i);

    std::vector<std::vector<double>> feature_rows;
    std::vector<std::vector<double>> target_rows;

    for (const auto& [image_id, gidx] : groups_by_image) {
        const auto git = gt_by_image.find(image_id);
        if (git == gt_by_image.end()) continue;
        const std::vector<std::size_t>& tidx = git->second;

        std::vector<std::vector<double>> cost(gidx.size(), std::vector<double>(tidx.size(), 0.0));
        std::vector<std::vector<double>> quality = cost;
        for (std::size_t gi = 0; gi < gidx.size(); ++gi)
            for (std::size_t ti = 0; ti < tidx.size(); ++ti) {
                quality[gi][ti] = oks(groups[gidx[gi]].anchor(), ground_truth[tidx[ti]], skeleton);
                cost[gi][ti] = 1.0 - quality[gi][ti];
            }

        for (const auto& [gi, ti] : hungarian(cost).pairs) {
            if (quality[static_cast<std::size_t>(gi)][static_cast<std::size_t>(ti)] < cfg.oks_threshold) continue;
            const MatchedGroup& group = groups[gidx[static_cast<std::size_t>(gi)]];
            const PersonPose& gt = ground_truth[tidx[static_cast<std::size_t>(ti)]];

            const BBox box = group_reference_bbox(group);
            std::vector<char> missing;
            std::vector<double> feat = encode_group(group, ds.layout, box, &missing);

            const std::size_t k = static_cast<std::size_t>(ds.layout.keypoint_count);
            std::vector<double> target(2 * k, 0.0);
            for (std::size_t j = 0; j < k; ++j) {
                if (gt.keypoints[j].labeled()) {
                    target[2 * j + 0] = (gt.keypoints[j].x - box.x) / box.w;
                    target[2 * j + 1] = (gt.keypoints[j].y - box.y) / box.h;
                } else {
                    // Mean of the present members' normalized coordinates.
                    double mx = 0.0, my = 0.0;
                    std::size_t present = 0;
                    for (std::size_t m = 0; m < ds.layout.model_ids.size(); ++m) {
                        if (missing[m]) continue;
                        mx += feat[m * ds.layout.block_dim() + 3 * j + 0];
                        my += feat[m * ds.layout.block_dim() + 3 * j + 1];
                        ++present;
                    }
                    target[2 * j + 0] = mx / static_cast<double>(present);
                    target[2 * j + 1] = my / static_cast<double>(present);
                }
            }

            feature_rows.push_back(std::move(feat));
            target_rows.push_back(std::move(target));
            ds.missing_mask.push_back(std::move(missing));
            ds.reference_boxes.push_back(box);
        }
    }

    if (feature_rows.empty())
        throw Error(Errc::no_matched_rows, "no group matched any ground-truth instance");

    ds.features = Matrix(feature_rows.size(), ds.layout.feature_dim());
    ds.targets = Matrix(target_rows.size(), ds.layout.target_dim());
    for (std::size_t r = 0; r < feature_rows.size(); ++r) {
        for (std::size_t c = 0; c < feature_rows[r].size(); ++c) ds.features(r, c) = feature_rows[r][c];
        for (std::size_t c = 0; c < target_rows[r].size(); ++c) ds.targets(r, c) = target_rows[r][c];
    }
    return ds;
}

struct StackTrainResult {
    MetaLearner model;
    std::size_t train_rows = 0;
    std::size_t validation_rows = 0;
    std::vector<std::size_t> validation_indices;   // dataset rows held out
    double validation_mse = 0.0;                   // normalized frame
    std::vector<double> per_keypoint_pixel_error;  // denormalized, K entries
    FitReport mlp_report;                          // populated for kind == mlp
};

// Splits the dataset split_ratio/(1 - split_ratio) by seeded shuffle, fits
// the requested learner on the training part and records holdout metrics.
// cfg.decay doubles as the ridge penalty (the same L2 penalty the gradient
// learners apply as weight decay).
inline StackTrainResult stack_train(const StackDataset& dataset, LearnerKind kind, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t rows = dataset.features.rows();
    if (rows == 0) throw Error(Errc::empty_input, "stack_train on an empty dataset");

    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, 0x73706c6974));  // split stream
    rng.shuffle(order);
    const std::size_t n_train =
        rows == 1 ? 1
                  : std::clamp<std::size_t>(
                        static_cast<std::size_t>(std::floor(static_cast<double>(rows) * cfg.split_ratio)), 1,
                        rows - 1);

    auto take = [&](std::size_t begin, std::size_t end, const Matrix& src) {
        Matrix out(end - begin, src.cols());
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t c = 0; c < src.cols(); ++c) out(i - begin, c) = src(order[i], c);
        return out;
    };
    const Matrix train_x = take(0, n_train, dataset.features);
    const Matrix train_y = take(0, n_train, dataset.targets);
    const Matrix val_x = take(n_train, rows, dataset.features);
    const Matrix val_y = take(n_train, rows, dataset.targets);

    StackTrainResult result;
    result.train_rows = n_train;
    result.validation_rows = rows - n_train;
    result.validation_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    switch (kind) {
        case LearnerKind::ridge:
            result.model = ridge_fit(train_x, train_y, cfg.decay);
            break;
        case LearnerKind::random_forest: {
            ForestConfig fc;
            fc.seed = derive_seed(cfg.seed, 0x666f7265);
            result.model = random_forest_fit(train_x, train_y, fc);
            break;
        }
        case LearnerKind::mlp: {
            const bool has_val = val_x.rows() > 0;
            result.model = mlp_fit(train_x, train_y, cfg, {64, 64}, has_val ? &val_x : nullptr,
                                   has_val ? &val_y : nullptr, &result.mlp_report);
            break;
        }
    }
    result.model.layout_model_ids = dataset.layout.model_ids;
    result.model.layout_keypoint_count = dataset.layout.keypoint_count;

    if (result.validation_rows > 0) {
        const Matrix pred = learner_predict_matrix(result.model, val_x);
        result.validation_mse = mean_squared_error(pred, val_y);
        const std::size_t k = static_cast<std::size_t>(dataset.layout.keypoint_count);
        result.per_keypoint_pixel_error.assign(k, 0.0);
        for (std::size_t i = 0; i < val_x.rows(); ++i) {
            const BBox& box = dataset.reference_boxes[order[n_train + i]];
            for (std::size_t j = 0; j < k; ++j) {
                const double dx = (pred(i, 2 * j) - val_y(i, 2 * j)) * box.w;
                const double dy = (pred(i, 2 * j + 1) - val_y(i, 2 * j + 1)) * box.h;
                result.per_keypoint_pixel_error[j] += std::hypot(dx, dy);
            }
        }
        for (double& v : result.per_keypoint_pixel_error) v /= static_cast<double>(val_x.rows());
    }
    return result;
}

// Predicts refined keypoints for one group with a stack-trained model.
inline FusedResult stack_predict(const MetaLearner& model, const MatchedGroup& group, const SkeletonSpec& skeleton) {
    if (group.members.empty()) throw Error(Errc::empty_group, "predicting on an empty group");
    if (model.layout_model_ids.empty())
        throw Error(Errc::dimension_mismatch, "model carries no group-encoding layout");
    if (model.layout_keypoint_count != skeleton.keypoint_count())
        throw Error(Errc::dimension_mismatch,
                    "model trained for K=" + std::to_string(model.layout_keypoint_count) + ", skeleton '" +
                        skeleton.name + "' has K=" + std::to_string(skeleton.keypoint_count()));

    StackLayout layout;
    layout.model_ids = model.layout_model_ids;
    layout.keypoint_count = model.layout_keypoint_count;
    if (layout.feature_dim() != model.feature_dim)
        throw Error(Errc::dimension_mismatch, "layout feature width disagrees with the trained model");

    const BBox box = group_reference_bbox(group);
    const std::vector<double> row = encode_group(group, layout, box);
    const std::vector<double> pred = learner_predict(model, row);

    const std::size_t k = static_cast<std::size_t>(layout.keypoint_count);
    PersonPose pose;
    pose.image_id = group.image_id;
    pose.source_model = "stack";
    pose.keypoints.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        double conf = 0.0;
        std::size_t observers = 0;
        for (const PersonPose& m : group.members) {
            const Keypoint& kp = m.keypoints[j];
            if (kp.v > 0 || kp.confidence > 0.0) {
                conf += kp.confidence;
                ++observers;
            }
        }
        pose.keypoints[j] = Keypoint{pred[2 * j] * box.w + box.x, pred[2 * j + 1] * box.h + box.y, kLabeledVisible,
                                     observers ? conf / static_cast<double>(observers) : 0.0};
    }
    double score = 0.0;
    for (const PersonPose& m : group.members) score += m.score;
    pose.score = score / static_cast<double>(group.members.size());

    double minx = pose.keypoints[0].x, maxx = pose.keypoints[0].x;
    double miny = pose.keypoints[0].y, maxy = pose.keypoints[0].y;
    for (const Keypoint& kp : pose.keypoints) {
        minx = std::min(minx, kp.x);
        maxx = std::max(maxx, kp.x);
        miny = std::min(miny, kp.y);
        maxy = std::max(maxy, kp.y);
    }
    pose.bbox = BBox{minx, miny, maxx - minx, maxy - miny};

    FusedResult out;
    out.pose = std::move(pose);
    out.strategy = "stack";
    for (const PersonPose& m : group.members)
        out.member_weights.emplace_back(m.source_model, 1.0 / static_cast<double>(group.members.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Model serialization: little-endian binary, magic "HEGP", version 1.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

inline void write_i32(std::ostream& os, std::int32_t v) {
    const auto u = static_cast<std::uint32_t>(v);
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    os.write(buf, 4);
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
    write_u64(os, v.size());
    for (double d : v) write_f64(os, d);
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
    write_u64(os, m.rows());
    write_u64(os, m.cols());
    for (double d : m.data()) write_f64(os, d);
}

inline std::uint64_t read_u64(std::istream& is) {
    char buf[8];
    if (!is.read(buf, 8)) throw Error(Errc::parse_error, "truncated model file (u64)");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

inline std::int32_t read_i32(std::istream& is) {
    char buf[4];
    if (!is.read(buf, 4)) throw Error(Errc::parse_error, "truncated model file (i32)");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return static_cast<std::int32_t>(v);
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline std::string read_string(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    if (n > (1u << 20)) throw Error(Errc::parse_error, "unreasonable string length in model file");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n)))
        throw Error(Errc::parse_error, "truncated model file (string)");
    return s;
}

inline std::vector<double> read_doubles(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::vector<double> v(n);
    for (std::uint64_t i = 0; i < n; ++i) v[i] = read_f64(is);
    return v;
}

inline Matrix read_matrix(std::istream& is) {
    const std::uint64_t rows = read_u64(is);
    const std::uint64_t cols = read_u64(is);
    Matrix m(rows, cols);
    for (double& d : m.data()) d = read_f64(is);
    return m;
}

}  // namespace detail

inline void save_model(const MetaLearner& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
    os.write("HEGP", 4);
    detail::write_u64(os, 1);  // format version
    os.put(static_cast<char>(model.kind));
    detail::write_u64(os, model.feature_dim);
    detail::write_u64(os, model.target_dim);
    detail::write_u64(os, model.layout_model_ids.size());
    for (const std::string& id : model.layout_model_ids) detail::write_string(os, id);
    detail::write_u64(os, static_cast<std::uint64_t>(model.layout_keypoint_count));

    switch (model.kind) {
        case LearnerKind::ridge:
            detail::write_matrix(os, model.ridge.coef);
            detail::write_doubles(os, model.ridge.intercept);
            break;
        case LearnerKind::random_forest:
            detail::write_u64(os, model.forest.trees.size());
            for (const DecisionTree& tree : model.forest.trees) {
                detail::write_u64(os, tree.nodes.size());
                for (const TreeNode& n : tree.nodes) {
                    detail::write_i32(os, n.feature);
                    detail::write_f64(os, n.threshold);
                    detail::write_i32(os, n.left);
                    detail::write_i32(os, n.right);
                    detail::write_doubles(os, n.value);
                }
            }
            break;
        case LearnerKind::mlp:
            detail::write_u64(os, model.mlp.weights.size());
            for (std::size_t l = 0; l < model.mlp.weights.size(); ++l) {
                detail::write_matrix(os, model.mlp.weights[l]);
                detail::write_doubles(os, model.mlp.biases[l]);
            }
            break;
    }
    if (!os) throw Error(Errc::io_error, "write to '" + path + "' failed");
}

inline MetaLearner load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(Errc::io_error, "cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "HEGP")
        throw Error(Errc::parse_error, "'" + path + "' is not a model file (bad magic)");
    const std::uint64_t version = detail::read_u64(is);
    if (version != 1)
        throw Error(Errc::schema_error, "unsupported model format version " + std::to_string(version));
    const int kind_tag = is.get();
    if (kind_tag < 0 || kind_tag > 2)
        throw Error(Errc::schema_error, "unknown learner kind tag " + std::to_string(kind_tag));

    MetaLearner model;
    model.kind = static_cast<LearnerKind>(kind_tag);
    model.feature_dim = detail::read_u64(is);
    model.target_dim = detail::read_u64(is);
    const std::uint64_t id_count = detail::read_u64(is);
    for (std::uint64_t i = 0; i < id_count; ++i) model.layout_model_ids.push_back(detail::read_string(is));
    model.layout_keypoint_count = static_cast<int>(detail::read_u64(is));

    switch (model.kind) {
        case LearnerKind::ridge:
            model.ridge.coef = detail::read_matrix(is);
            model.ridge.intercept = detail::read_doubles(is);
            break;
        case LearnerKind::random_forest: {
            const std::uint64_t tree_count = detail::read_u64(is);
            model.forest.trees.resize(tree_count);
            for (std::uint64_t t = 0; t < tree_count; ++t) {
                const std::uint64_t node_count = detail::read_u64(is);
                model.forest.trees[t].nodes.resize(node_count);
                for (std::uint64_t n = 0; n < node_count; ++n) {
                    TreeNode& node = model.forest.trees[t].nodes[n];
                    node.feature = detail::read_i32(is);
                    node.threshold = detail::read_f64(is);
                    node.left = detail::read_i32(is);
                    node.right = detail::read_i32(is);
                    node.value = detail::read_doubles(is);
                }
            }
            break;
        }
        case LearnerKind::mlp: {
            const std::uint64_t layer_count = detail::read_u64(is);
            for (std::uint64_t l = 0; l < layer_count; ++l) {
                model.mlp.weights.push_back(detail::read_matrix(is));
                model.mlp.biases.push_back(detail::read_doubles(is));
            }
            break;
        }
    }
    return model;
}

}  // namespace posefuse
