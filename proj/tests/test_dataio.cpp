#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "posefuse/dataio.hpp"
#include "posefuse/synth.hpp"
#include "test_util.hpp"

using namespace posefuse;

namespace {

std::string temp_path(const std::string& name) { return ::testing::TempDir() + name; }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    ASSERT_TRUE(out.is_open());
    out << text;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in.is_open());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Errc thrown_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return Errc::invalid_argument;
}

}  // namespace

TEST(LoadAnnotations, ParsesImagesPosesAndSkipsCrowds) {
    const std::string path = temp_path("anns.json");
    write_text(path, R"({
      "images": [{"id": 7, "width": 640, "height": 480, "file_name": "a.jpg"},
                 {"id": 8}],
      "annotations": [
        {"id": 1, "image_id": 7, "iscrowd": 0, "area": 150.5,
         "bbox": [4.0, 5.0, 10.0, 20.0],
         "keypoints": [1.5, 2.5, 2,  3.0, 4.0, 1,  0.0, 0.0, 0]},
        {"id": 2, "image_id": 7, "iscrowd": 1, "area": 9000,
         "keypoints": [0, 0, 2]},
        {"id": 3, "image_id": 8, "area": 42.0,
         "keypoints": [9.0, 8.0, 2,  0, 0, 0,  0, 0, 0]}
      ],
      "categories": [{"id": 1, "name": "person", "keypoints": ["a", "b", "c"]}]
    })");

    const AnnotationSet set = load_annotations(path);
    ASSERT_EQ(set.images.size(), 2u);
    EXPECT_EQ(set.images[0].id, 7);
    EXPECT_EQ(set.images[0].width, 640);
    EXPECT_EQ(set.images[0].file_name, "a.jpg");
    EXPECT_EQ(set.images[1].id, 8);

    ASSERT_EQ(set.poses.size(), 2u);  // the crowd region is dropped
    const PersonPose& p = set.poses[0];
    EXPECT_EQ(p.image_id, 7);
    EXPECT_DOUBLE_EQ(p.score, 1.0);
    ASSERT_EQ(p.keypoints.size(), 3u);
    EXPECT_DOUBLE_EQ(p.keypoints[0].x, 1.5);
    EXPECT_DOUBLE_EQ(p.keypoints[0].y, 2.5);
    EXPECT_EQ(p.keypoints[0].v, kLabeledVisible);
    EXPECT_DOUBLE_EQ(p.keypoints[0].confidence, 1.0);
    EXPECT_EQ(p.keypoints[1].v, kLabeledOccluded);
    EXPECT_DOUBLE_EQ(p.keypoints[1].confidence, 1.0);
    EXPECT_EQ(p.keypoints[2].v, kUnlabeled);
    EXPECT_DOUBLE_EQ(p.keypoints[2].confidence, 0.0);
    ASSERT_TRUE(p.area);
    EXPECT_DOUBLE_EQ(*p.area, 150.5);
    ASSERT_TRUE(p.bbox);
    EXPECT_DOUBLE_EQ(p.bbox->w, 10.0);
    EXPECT_EQ(set.poses[1].image_id, 8);
    EXPECT_FALSE(set.poses[1].bbox);
}

TEST(LoadAnnotations, RejectsMalformedInput) {
    const std::string path = temp_path("bad_anns.json");

    write_text(path, R"({"annotations": [{"image_id": 1, "area": 5, "keypoints": [1, 2]}]})");
    EXPECT_EQ(thrown_code([&] { load_annotations(path); }), Errc::keypoint_count_mismatch);

    write_text(path, R"({"annotations": [{"image_id": 1, "area": 5, "keypoints": [1, 2, 2]}],
                         "categories": [{"keypoints": ["a", "b"]}]})");
    EXPECT_EQ(thrown_code([&] { load_annotations(path); }), Errc::keypoint_count_mismatch);

    write_text(path, R"({"annotations": [{"image_id": 1, "area": 5, "keypoints": [1, 2, 3]}]})");
    EXPECT_EQ(thrown_code([&] { load_annotations(path); }), Errc::parse_error);  // visibility 3

    write_text(path, R"({"annotations": [{"image_id": 1, "area": 5, "keypoints": [1, 2, 0.5]}]})");
    EXPECT_EQ(thrown_code([&] { load_annotations(path); }), Errc::parse_error);  // fractional visibility

    write_text(path, R"({"annotations": [{"image_id": 1, "keypoints": [1, 2, 0]}]})");
    EXPECT_EQ(thrown_code([&] { load_annotations(path); }), Errc::schema_error);  // no area

    write_text(path, R"({"images": []})");
    EXPECT_EQ(thrown_code([&] { load_annotations(path); }), Errc::schema_error);  // no annotations

    write_text(path, "{not json");
    EXPECT_EQ(thrown_code([&] { load_annotations(path); }), Errc::parse_error);

    EXPECT_EQ(thrown_code([&] { load_annotations(temp_path("missing_file.json")); }), Errc::io_error);
}

TEST(LoadPredictions, ReadsConfidencesAndDerivesTheBboxFromConfidentKeypoints) {
    const std::string path = temp_path("preds.json");
    write_text(path, R"([
      {"image_id": 3, "category_id": 1, "score": 0.75,
       "keypoints": [10.0, 20.0, 0.9,  500.0, 500.0, 0.0,  30.0, 5.0, 0.5]}
    ])");

    const std::vector<PersonPose> poses = load_predictions(path, "hrnet");
    ASSERT_EQ(poses.size(), 1u);
    const PersonPose& p = poses[0];
    EXPECT_EQ(p.image_id, 3);
    EXPECT_DOUBLE_EQ(p.score, 0.75);
    EXPECT_EQ(p.source_model, "hrnet");
    ASSERT_EQ(p.keypoints.size(), 3u);
    EXPECT_EQ(p.keypoints[0].v, kLabeledVisible);
    EXPECT_DOUBLE_EQ(p.keypoints[0].confidence, 0.9);
    EXPECT_EQ(p.keypoints[1].v, kUnlabeled);  // zero confidence
    EXPECT_EQ(p.keypoints[2].v, kLabeledVisible);
    ASSERT_TRUE(p.bbox);  // bounds of the two confident keypoints only
    EXPECT_DOUBLE_EQ(p.bbox->x, 10.0);
    EXPECT_DOUBLE_EQ(p.bbox->y, 5.0);
    EXPECT_DOUBLE_EQ(p.bbox->w, 20.0);
    EXPECT_DOUBLE_EQ(p.bbox->h, 15.0);
    EXPECT_FALSE(p.area);
}

TEST(LoadPredictions, ValidatesRecordsByIndex) {
    const std::string path = temp_path("bad_preds.json");

    write_text(path, R"([{"image_id": 1, "score": 0.5, "keypoints": [1, 2, 0.5]},
                         {"image_id": 1, "keypoints": [1, 2, 0.5]}])");
    try {
        load_predictions(path, "m");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::parse_error);
        EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("score"), std::string::npos);
    }

    write_text(path, R"([{"image_id": 1, "score": 1.5, "keypoints": [1, 2, 0.5]}])");
    EXPECT_EQ(thrown_code([&] { load_predictions(path, "m"); }), Errc::score_out_of_range);

    write_text(path, R"([{"image_id": 1, "score": 0.5, "keypoints": [1, 2, -0.25]}])");
    EXPECT_EQ(thrown_code([&] { load_predictions(path, "m"); }), Errc::score_out_of_range);

    write_text(path, R"({"score": 0.5})");
    EXPECT_EQ(thrown_code([&] { load_predictions(path, "m"); }), Errc::schema_error);
}

TEST(ResultsRoundTrip, WriteLoadWriteIsByteIdentical) {
    std::vector<PersonPose> poses;
    PersonPose a;
    a.image_id = 12;
    a.score = 1.0 / 3.0;
    a.keypoints = {Keypoint{0.1, -2.7182818284590451, kLabeledVisible, 0.9999999999999999},
                   Keypoint{3.141592653589793, 1e-17, kLabeledVisible, 0.5},
                   Keypoint{-123456.789, 7.0, kUnlabeled, 0.0}};
    PersonPose b;
    b.image_id = 13;
    b.score = 0.25;
    b.keypoints = {Keypoint{1.0, 2.0, kLabeledVisible, 1.0}, Keypoint{4.0, 8.0, kLabeledVisible, 0.75},
                   Keypoint{16.0, 32.0, kLabeledVisible, 0.125}};
    poses = {a, b};

    const std::string first = temp_path("results_a.json");
    const std::string second = temp_path("results_b.json");
    write_results(poses, first);
    const std::vector<PersonPose> loaded = load_predictions(first, "fused");
    write_results(loaded, second);
    EXPECT_EQ(read_bytes(first), read_bytes(second));

    ASSERT_EQ(loaded.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(loaded[i].image_id, poses[i].image_id);
        EXPECT_EQ(loaded[i].score, poses[i].score);
        ASSERT_EQ(loaded[i].keypoints.size(), poses[i].keypoints.size());
        for (std::size_t j = 0; j < poses[i].keypoints.size(); ++j) {
            EXPECT_EQ(loaded[i].keypoints[j].x, poses[i].keypoints[j].x);
            EXPECT_EQ(loaded[i].keypoints[j].y, poses[i].keypoints[j].y);
            EXPECT_EQ(loaded[i].keypoints[j].confidence, poses[i].keypoints[j].confidence);
        }
    }

    const std::string empty = temp_path("results_empty.json");
    write_results(std::vector<PersonPose>{}, empty);
    EXPECT_TRUE(load_predictions(empty, "none").empty());
}

TEST(WriteAnnotations, RoundTripsThroughLoadAnnotations) {
    const SkeletonSpec sk = coco17_skeleton();
    std::vector<ImageInfo> images = {{1, 640, 480, "scene_000001.jpg"}, {2, 640, 480, "scene_000002.jpg"}};
    std::vector<PersonPose> poses = {testutil::ring_pose(sk, 100, 120, 1.0, 1), testutil::ring_pose(sk, 300, 200, 1.0, 2)};
    poses[0].keypoints[4].v = kUnlabeled;

    const std::string path = temp_path("written_anns.json");
    write_annotations(images, poses, sk, path);
    const AnnotationSet set = load_annotations(path);

    ASSERT_EQ(set.images.size(), 2u);
    EXPECT_EQ(set.images[1].file_name, "scene_000002.jpg");
    ASSERT_EQ(set.poses.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        ASSERT_EQ(set.poses[i].keypoints.size(), poses[i].keypoints.size());
        for (std::size_t j = 0; j < poses[i].keypoints.size(); ++j) {
            EXPECT_EQ(set.poses[i].keypoints[j].x, poses[i].keypoints[j].x);
            EXPECT_EQ(set.poses[i].keypoints[j].y, poses[i].keypoints[j].y);
            EXPECT_EQ(set.poses[i].keypoints[j].v, poses[i].keypoints[j].v);
        }
        ASSERT_TRUE(set.poses[i].area);
        EXPECT_EQ(*set.poses[i].area, *poses[i].area);
        ASSERT_TRUE(set.poses[i].bbox);
        EXPECT_EQ(set.poses[i].bbox->x, poses[i].bbox->x);
        EXPECT_EQ(set.poses[i].bbox->h, poses[i].bbox->h);
    }

    // A 16-keypoint pose no longer matches the written categories block.
    std::vector<PersonPose> wrong = {testutil::ring_pose(mpii16_skeleton(), 50, 50, 1.0, 1)};
    const std::string mixed = temp_path("mixed_anns.json");
    write_annotations(images, wrong, sk, mixed);
    EXPECT_EQ(thrown_code([&] { load_annotations(mixed); }), Errc::keypoint_count_mismatch);
}

TEST(RunConfigFile, ParsesCommentsOverridesAndPredictionList) {
    const std::string path = temp_path("run.cfg");
    write_text(path,
               "# fusion run\n"
               "skeleton = coco17\n"
               "mode = simple\n"
               "strategy = stack\n"
               "learner = random_forest\n"
               "oks_threshold = 0.6   # tighter grouping\n"
               "allow_singletons = false\n"
               "epsilon = 0.001\n"
               "weight_normalization = paper_1_over_n\n"
               "epochs = 40\n"
               "learning_rate = 0.005\n"
               "seed = 99\n"
               "\n"
               "ground_truth = gt.json\n"
               "prediction.hrnet = hrnet.json\n"
               "prediction.openpose = openpose.json\n"
               "prediction.hrnet = hrnet_v2.json\n"
               "results_out = fused.json\n");

    const RunConfig cfg = load_run_config(path);
    EXPECT_EQ(cfg.skeleton, "coco17");
    EXPECT_EQ(cfg.bagging.mode, BaggingMode::simple);
    EXPECT_EQ(cfg.strategy, "stack");
    EXPECT_EQ(cfg.learner, "random_forest");
    EXPECT_DOUBLE_EQ(cfg.association.oks_threshold, 0.6);
    EXPECT_FALSE(cfg.association.allow_singletons);
    EXPECT_DOUBLE_EQ(cfg.bagging.epsilon, 0.001);
    EXPECT_EQ(cfg.bagging.weight_normalization, WeightNormalization::paper_1_over_n);
    EXPECT_EQ(cfg.train.epochs, 40);
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.005);
    EXPECT_EQ(cfg.seed, 99u);
    EXPECT_EQ(cfg.ground_truth, "gt.json");
    ASSERT_EQ(cfg.predictions.size(), 2u);  // repeated model id overrides in place
    EXPECT_EQ(cfg.predictions[0].first, "hrnet");
    EXPECT_EQ(cfg.predictions[0].second, "hrnet_v2.json");
    EXPECT_EQ(cfg.predictions[1].first, "openpose");
    EXPECT_EQ(cfg.results_out, "fused.json");
    EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfigFile, ErrorsNameTheFileAndLine) {
    const std::string path = temp_path("broken.cfg");
    write_text(path, "skeleton = coco17\nmode = weighted\nbanana = 3\n");
    try {
        load_run_config(path);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::invalid_config);
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("banana"), std::string::npos);
    }

    write_text(path, "skeleton coco17\n");
    EXPECT_EQ(thrown_code([&] { load_run_config(path); }), Errc::invalid_config);  // no '='
    write_text(path, " = value\n");
    EXPECT_EQ(thrown_code([&] { load_run_config(path); }), Errc::invalid_config);  // empty key
    write_text(path, "epochs = many\n");
    EXPECT_EQ(thrown_code([&] { load_run_config(path); }), Errc::invalid_config);
    write_text(path, "mode = bogus\n");
    EXPECT_EQ(thrown_code([&] { load_run_config(path); }), Errc::invalid_config);
    write_text(path, "prediction. = x.json\n");
    EXPECT_EQ(thrown_code([&] { load_run_config(path); }), Errc::invalid_config);
    write_text(path, "seed = -4\n");
    EXPECT_EQ(thrown_code([&] { load_run_config(path); }), Errc::invalid_config);
    EXPECT_EQ(thrown_code([&] { load_run_config(temp_path("ghost.cfg")); }), Errc::io_error);
}

TEST(RunConfigValidation, RejectsPathCollisions) {
    RunConfig cfg;
    EXPECT_EQ(thrown_code([&] { cfg.validate(); }), Errc::invalid_config);  // no predictions

    apply_config_entry(cfg, "prediction.a", "same.json");
    apply_config_entry(cfg, "prediction.b", "same.json");
    EXPECT_EQ(thrown_code([&] { cfg.validate(); }), Errc::invalid_config);

    apply_config_entry(cfg, "prediction.b", "other.json");
    EXPECT_NO_THROW(cfg.validate());

    apply_config_entry(cfg, "ground_truth", "other.json");
    EXPECT_EQ(thrown_code([&] { cfg.validate(); }), Errc::invalid_config);
}

TEST(ApplyConfigEntry, IsTheSingleSourceOfKeySpellings) {
    RunConfig cfg;
    apply_config_entry(cfg, "weight_normalization", "sum_weights");
    EXPECT_EQ(cfg.bagging.weight_normalization, WeightNormalization::sum_weights);
    apply_config_entry(cfg, "allow_singletons", "1");
    EXPECT_TRUE(cfg.association.allow_singletons);
    apply_config_entry(cfg, "allow_singletons", "false");
    EXPECT_FALSE(cfg.association.allow_singletons);
    apply_config_entry(cfg, "dropout_rate", "0.25");
    EXPECT_DOUBLE_EQ(cfg.train.dropout_rate, 0.25);
    apply_config_entry(cfg, "split_ratio", "0.2");
    apply_config_entry(cfg, "early_stop_patience", "7");
    apply_config_entry(cfg, "batch_size", "16");
    apply_config_entry(cfg, "decay", "0.01");
    apply_config_entry(cfg, "model_out", "m.bin");
    apply_config_entry(cfg, "model_in", "m.bin");
    apply_config_entry(cfg, "report_out", "r.txt");
    EXPECT_DOUBLE_EQ(cfg.train.split_ratio, 0.2);
    EXPECT_EQ(cfg.train.early_stop_patience, 7);
    EXPECT_EQ(cfg.train.batch_size, 16);
    EXPECT_DOUBLE_EQ(cfg.train.decay, 0.01);
    EXPECT_EQ(cfg.model_out, "m.bin");
    EXPECT_EQ(cfg.model_in, "m.bin");
    EXPECT_EQ(cfg.report_out, "r.txt");

    EXPECT_EQ(thrown_code([&] { apply_config_entry(cfg, "allow_singletons", "maybe"); }), Errc::invalid_config);
    EXPECT_EQ(thrown_code([&] { apply_config_entry(cfg, "weight_normalization", "avg"); }), Errc::invalid_config);
    EXPECT_THROW(apply_config_entry(cfg, "learner", "svm"), Error);
}
