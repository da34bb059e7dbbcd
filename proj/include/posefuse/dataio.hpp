// COCO-format keypoint I/O plus the run-configuration file the CLI consumes.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "posefuse/association.hpp"
#include "posefuse/bagging.hpp"
#include "posefuse/error.hpp"
#include "posefuse/learners.hpp"
#include "posefuse/types.hpp"

namespace posefuse {

struct ImageInfo {
    std::int64_t id = 0;
    int width = 0;
    int height = 0;
    std::string file_name;
};

struct AnnotationSet {
    std::vector<ImageInfo> images;
    std::vector<PersonPose> poses;
};

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::parse_error, "'" + path + "': " + e.what());
    }
}

inline double json_number(const nlohmann::json& record, const char* key, const std::string& where) {
    if (!record.contains(key)) throw Error(Errc::parse_error, where + ": missing \"" + key + "\"");
    if (!record[key].is_number()) throw Error(Errc::parse_error, where + ": \"" + key + "\" is not a number");
    return record[key].get<double>();
}

// Flat [x, y, third] * K triplet list.
inline std::vector<std::array<double, 3>> json_triplets(const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array()) throw Error(Errc::parse_error, where + ": \"keypoints\" is not an array");
    if (arr.size() % 3 != 0)
        throw Error(Errc::keypoint_count_mismatch,
                    where + ": keypoints has " + std::to_string(arr.size()) + " numbers, not a multiple of 3");
    std::vector<std::array<double, 3>> out(arr.size() / 3);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number())
            throw Error(Errc::parse_error, where + ": keypoints[" + std::to_string(i) + "] is not a number");
        out[i / 3][i % 3] = arr[i].get<double>();
    }
    return out;
}

// Fixed 17-significant-digit rendering so a written file re-reads to the
// identical double and a second write is byte-identical.
inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

// Loads a COCO keypoint annotation file. Crowd regions (iscrowd = 1) are
// skipped: they carry no per-person keypoints worth matching against.
// Keypoint counts are validated against the categories block when present.
inline AnnotationSet load_annotations(const std::string& path) {
    const nlohmann::json doc = detail::parse_json_file(path);
    if (!doc.is_object() || !doc.contains("annotations"))
        throw Error(Errc::schema_error, "'" + path + "': no \"annotations\" block");

    AnnotationSet set;
    if (doc.contains("images")) {
        if (!doc["images"].is_array()) throw Error(Errc::schema_error, "'" + path + "': \"images\" is not an array");
        for (const auto& im : doc["images"]) {
            ImageInfo info;
            info.id = static_cast<std::int64_t>(detail::json_number(im, "id", path + " images[]"));
            if (im.contains("width")) info.width = im["width"].get<int>();
            if (im.contains("height")) info.height = im["height"].get<int>();
            if (im.contains("file_name")) info.file_name = im["file_name"].get<std::string>();
            set.images.push_back(info);
        }
    }

    std::size_t expected_k = 0;
    if (doc.contains("categories") && doc["categories"].is_array() && !doc["categories"].empty() &&
        doc["categories"][0].contains("keypoints"))
        expected_k = doc["categories"][0]["keypoints"].size();

    const nlohmann::json& anns = doc["annotations"];
    if (!anns.is_array()) throw Error(Errc::schema_error, "'" + path + "': \"annotations\" is not an array");
    for (std::size_t i = 0; i < anns.size(); ++i) {
        const nlohmann::json& ann = anns[i];
        const std::string where = path + " annotations[" + std::to_string(i) + "]";
        if (ann.contains("iscrowd") && ann["iscrowd"].is_number() && ann["iscrowd"].get<int>() == 1) continue;
        if (!ann.contains("keypoints")) throw Error(Errc::schema_error, where + ": missing \"keypoints\"");
        if (!ann.contains("area")) throw Error(Errc::schema_error, where + ": missing \"area\"");

        const auto triplets = detail::json_triplets(ann["keypoints"], where);
        if (expected_k != 0 && triplets.size() != expected_k)
            throw Error(Errc::keypoint_count_mismatch, where + ": " + std::to_string(triplets.size()) +
                                                           " keypoints, category declares " +
                                                           std::to_string(expected_k));

        PersonPose pose;
        pose.image_id = static_cast<std::int64_t>(detail::json_number(ann, "image_id", where));
        pose.score = 1.0;
        pose.keypoints.reserve(triplets.size());
        for (std::size_t j = 0; j < triplets.size(); ++j) {
            const double vraw = triplets[j][2];
            const int v = static_cast<int>(std::lround(vraw));
            if (vraw != static_cast<double>(v) || v < 0 || v > 2)
                throw Error(Errc::parse_error,
                            where + ": keypoints[" + std::to_string(j) + "] visibility " +
                                detail::format_number(vraw) + " not in {0,1,2}");
            Keypoint kp;
            kp.x = triplets[j][0];
            kp.y = triplets[j][1];
            kp.v = v;
            kp.confidence = v > 0 ? 1.0 : 0.0;
            pose.keypoints.push_back(kp);
        }
        pose.area = detail::json_number(ann, "area", where);
        if (ann.contains("bbox")) {
            const auto& bb = ann["bbox"];
            if (!bb.is_array() || bb.size() != 4)
                throw Error(Errc::parse_error, where + ": \"bbox\" must be [x, y, w, h]");
            pose.bbox = BBox{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
        }
        set.poses.push_back(std::move(pose));
    }
    return set;
}

// Loads a COCO keypoint results file, tagging every pose with `model_id`.
// The triplet's third slot is read as a per-keypoint confidence (the common
// producer convention) with v inferred as 2 when positive; a bbox is derived
// from the confident keypoints' bounds so downstream area logic has one.
inline std::vector<PersonPose> load_predictions(const std::string& path, const std::string& model_id) {
    const nlohmann::json doc = detail::parse_json_file(path);
    if (!doc.is_array()) throw Error(Errc::schema_error, "'" + path + "': results file must be a JSON array");

    std::vector<PersonPose> poses;
    poses.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const nlohmann::json& rec = doc[i];
        const std::string where = path + " record " + std::to_string(i);
        if (!rec.contains("score")) throw Error(Errc::parse_error, where + ": missing \"score\"");
        if (!rec.contains("keypoints")) throw Error(Errc::parse_error, where + ": missing \"keypoints\"");

        PersonPose pose;
        pose.image_id = static_cast<std::int64_t>(detail::json_number(rec, "image_id", where));
        pose.score = detail::json_number(rec, "score", where);
        if (!(pose.score >= 0.0 && pose.score <= 1.0))
            throw Error(Errc::score_out_of_range, where + ": score=" + detail::format_number(pose.score));
        pose.source_model = model_id;

        const auto triplets = detail::json_triplets(rec["keypoints"], where);
        double lo_x = 0, lo_y = 0, hi_x = 0, hi_y = 0;
        bool any = false;
        for (std::size_t j = 0; j < triplets.size(); ++j) {
            Keypoint kp;
            kp.x = triplets[j][0];
            kp.y = triplets[j][1];
            kp.confidence = triplets[j][2];
            if (!(kp.confidence >= 0.0 && kp.confidence <= 1.0))
                throw Error(Errc::score_out_of_range, where + ": keypoints[" + std::to_string(j) +
                                                          "] confidence=" + detail::format_number(kp.confidence));
            kp.v = kp.confidence > 0.0 ? kLabeledVisible : 0;
            if (kp.confidence > 0.0) {
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
            pose.keypoints.push_back(kp);
        }
        if (any) pose.bbox = BBox{lo_x, lo_y, hi_x - lo_x, hi_y - lo_y};
        poses.push_back(std::move(pose));
    }
    return poses;
}

// Writes poses in the results schema, in input order, numbers at 17
// significant digits (write -> load -> write is byte-identical).
inline void write_results(const std::vector<PersonPose>& poses, const std::string& path) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const PersonPose& p = poses[i];
        os << (i ? ",\n " : "\n ") << "{\"image_id\": " << p.image_id << ", \"category_id\": 1, \"keypoints\": [";
        for (std::size_t j = 0; j < p.keypoints.size(); ++j) {
            const Keypoint& kp = p.keypoints[j];
            os << (j ? ", " : "") << detail::format_number(kp.x) << ", " << detail::format_number(kp.y) << ", "
               << detail::format_number(kp.confidence);
        }
        os << "], \"score\": " << detail::format_number(p.score) << "}";
    }
    os << (poses.empty() ? "]" : "\n]") << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
    out << os.str();
    if (!out) throw Error(Errc::io_error, "write to '" + path + "' failed");
}

inline void write_results(const std::vector<FusedResult>& results, const std::string& path) {
    std::vector<PersonPose> poses;
    poses.reserve(results.size());
    for (const FusedResult& r : results) {
        if (!std::holds_alternative<PersonPose>(r.pose))
            throw Error(Errc::invalid_argument, "rigid fused results have no results-file representation");
        poses.push_back(std::get<PersonPose>(r.pose));
    }
    write_results(poses, path);
}

// Annotation-schema writer (used by the synthetic benchmark so its scenes
// feed back through load_annotations unchanged).
inline void write_annotations(const std::vector<ImageInfo>& images, const std::vector<PersonPose>& poses,
                              const SkeletonSpec& skeleton, const std::string& path) {
    std::ostringstream os;
    os << "{\"images\": [";
    for (std::size_t i = 0; i < images.size(); ++i)
        os << (i ? ",\n  " : "\n  ") << "{\"id\": " << images[i].id << ", \"width\": " << images[i].width
           << ", \"height\": " << images[i].height << ", \"file_name\": \"" << images[i].file_name << "\"}";
    os << (images.empty() ? "]," : "\n ],") << "\n \"annotations\": [";
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const PersonPose& p = poses[i];
        int labeled = 0;
        for (const Keypoint& kp : p.keypoints) labeled += kp.labeled() ? 1 : 0;
        os << (i ? ",\n  " : "\n  ") << "{\"id\": " << (i + 1) << ", \"image_id\": " << p.image_id
           << ", \"category_id\": 1, \"iscrowd\": 0, \"num_keypoints\": " << labeled << ", \"keypoints\": [";
        for (std::size_t j = 0; j < p.keypoints.size(); ++j)
            os << (j ? ", " : "") << detail::format_number(p.keypoints[j].x) << ", "
               << detail::format_number(p.keypoints[j].y) << ", " << p.keypoints[j].v;
        os << "], \"area\": " << detail::format_number(p.area ? *p.area : 1.0);
        if (p.bbox)
            os << ", \"bbox\": [" << detail::format_number(p.bbox->x) << ", " << detail::format_number(p.bbox->y)
               << ", " << detail::format_number(p.bbox->w) << ", " << detail::format_number(p.bbox->h) << "]";
        os << "}";
    }
    os << (poses.empty() ? "]," : "\n ],") << "\n \"categories\": [{\"id\": 1, \"name\": \"person\", \"keypoints\": [";
    for (std::size_t i = 0; i < skeleton.keypoint_names.size(); ++i)
        os << (i ? ", " : "") << "\"" << skeleton.keypoint_names[i] << "\"";
    os << "], \"skeleton\": [";
    for (std::size_t i = 0; i < skeleton.limb_pairs.size(); ++i)
        os << (i ? ", " : "") << "[" << (skeleton.limb_pairs[i].first + 1) << ", "
           << (skeleton.limb_pairs[i].second + 1) << "]";
    os << "]}]}\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
    out << os.str();
    if (!out) throw Error(Errc::io_error, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Run configuration: `key = value` lines, '#' comments, prediction paths as
// `prediction.<model_id> = <path>`. Every key doubles as a CLI flag.
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string skeleton = "coco17";
    AssociationConfig association;
    BaggingConfig bagging;
    TrainConfig train;
    std::string ground_truth;
    std::vector<std::pair<std::string, std::string>> predictions;  // model_id -> path, file order
    std::string results_out;
    std::string model_out;
    std::string model_in;
    std::string report_out;
    std::string strategy = "weighted";
    std::string learner = "ridge";
    std::uint64_t seed = 0;

    void validate() const {
        if (predictions.empty()) throw Error(Errc::invalid_config, "no prediction paths configured");
        std::set<std::string> files;
        for (const auto& [model, file] : predictions) {
            if (!files.insert(file).second)
                throw Error(Errc::invalid_config, "prediction path '" + file + "' referenced twice");
        }
        if (!ground_truth.empty() && !files.insert(ground_truth).second)
            throw Error(Errc::invalid_config, "ground truth path collides with a prediction path");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double config_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(Errc::invalid_config, "key '" + key + "': '" + value + "' is not a number");
    }
}

inline long long config_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(Errc::invalid_config, "key '" + key + "': '" + value + "' is not an integer");
    }
}

inline bool config_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw Error(Errc::invalid_config, "key '" + key + "': '" + value + "' is not a boolean");
}

}  // namespace detail

// Applies one key/value onto the config; shared by the file loader and the
// CLI's flag-override path so both spell keys identically.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::config_bool;
    using detail::config_double;
    using detail::config_int;
    if (key == "skeleton") {
        cfg.skeleton = value;
    } else if (key == "oks_threshold") {
        cfg.association.oks_threshold = config_double(key, value);
    } else if (key == "allow_singletons") {
        cfg.association.allow_singletons = config_bool(key, value);
    } else if (key == "mode") {
        if (value == "simple")
            cfg.bagging.mode = BaggingMode::simple;
        else if (value == "weighted")
            cfg.bagging.mode = BaggingMode::weighted;
        else
            throw Error(Errc::invalid_config, "key 'mode': '" + value + "' is not simple|weighted");
    } else if (key == "epsilon") {
        cfg.bagging.epsilon = config_double(key, value);
    } else if (key == "weight_normalization") {
        if (value == "sum_weights")
            cfg.bagging.weight_normalization = WeightNormalization::sum_weights;
        else if (value == "paper_1_over_n")
            cfg.bagging.weight_normalization = WeightNormalization::paper_1_over_n;
        else
            throw Error(Errc::invalid_config,
                        "key 'weight_normalization': '" + value + "' is not sum_weights|paper_1_over_n");
    } else if (key == "dropout_rate") {
        cfg.train.dropout_rate = config_double(key, value);
    } else if (key == "learning_rate") {
        cfg.train.learning_rate = config_double(key, value);
    } else if (key == "decay") {
        cfg.train.decay = config_double(key, value);
    } else if (key == "epochs") {
        cfg.train.epochs = static_cast<int>(config_int(key, value));
    } else if (key == "batch_size") {
        cfg.train.batch_size = static_cast<int>(config_int(key, value));
    } else if (key == "split_ratio") {
        cfg.train.split_ratio = config_double(key, value);
    } else if (key == "early_stop_patience") {
        cfg.train.early_stop_patience = static_cast<int>(config_int(key, value));
    } else if (key == "ground_truth") {
        cfg.ground_truth = value;
    } else if (key.rfind("prediction.", 0) == 0) {
        const std::string model = key.substr(std::string("prediction.").size());
        if (model.empty()) throw Error(Errc::invalid_config, "prediction key without a model id");
        for (auto& [m, f] : cfg.predictions)
            if (m == model) {
                f = value;
                return;
            }
        cfg.predictions.emplace_back(model, value);
    } else if (key == "results_out") {
        cfg.results_out = value;
    } else if (key == "model_out") {
        cfg.model_out = value;
    } else if (key == "model_in") {
        cfg.model_in = value;
    } else if (key == "report_out") {
        cfg.report_out = value;
    } else if (key == "strategy") {
        if (value != "simple" && value != "weighted" && value != "stack")
            throw Error(Errc::invalid_config, "key 'strategy': '" + value + "' is not simple|weighted|stack");
        cfg.strategy = value;
    } else if (key == "learner") {
        learner_kind_from_name(value);  // validates
        cfg.learner = value;
    } else if (key == "seed") {
        const long long v = config_int(key, value);
        if (v < 0) throw Error(Errc::invalid_config, "key 'seed': must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(v);
    } else {
        throw Error(Errc::invalid_config, "unknown key '" + key + "'");
    }
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open '" + path + "'");
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const std::size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::invalid_config, path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw Error(Errc::invalid_config, path + ":" + std::to_string(line_no) + ": empty key");
        try {
            apply_config_entry(cfg, key, value);
        } catch (const Error& e) {
            throw Error(e.code(), path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

}  // namespace posefuse
