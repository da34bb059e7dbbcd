// Command-line front end: match | fuse | train-stack | augment | eval | bench.
// Configuration comes from an optional key=value file; every key is also a
// flag of the same name and flags win. Exit codes: 0 success, 1 usage error,
// 2 data error. Diagnostics go to stderr, data to stdout.

#include <atomic>
#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "posefuse/posefuse.hpp"

namespace {

using namespace posefuse;

// Every run-config key registered as a same-named flag; values applied over
// the config file through the shared key/value grammar.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, CLI::Option*>> options;
    std::vector<std::string> prediction_entries;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file (key = value lines)");
        static const std::vector<std::pair<const char*, const char*>> keys = {
            {"skeleton", "skeleton name (coco17|mpii16)"},
            {"oks_threshold", "association OKS threshold"},
            {"allow_singletons", "keep single-member groups (true|false)"},
            {"mode", "bagging mode (simple|weighted)"},
            {"epsilon", "score-weight epsilon"},
            {"weight_normalization", "sum_weights|paper_1_over_n"},
            {"dropout_rate", "MLP dropout rate"},
            {"learning_rate", "MLP learning rate"},
            {"decay", "L2 penalty (ridge lambda / MLP weight decay)"},
            {"epochs", "MLP training epochs"},
            {"batch_size", "MLP minibatch size"},
            {"split_ratio", "train fraction of the stack dataset"},
            {"early_stop_patience", "epochs without improvement before stopping"},
            {"ground_truth", "ground-truth annotations path"},
            {"results_out", "output path for fused results / augmented annotations"},
            {"model_out", "output path for the trained meta-learner"},
            {"model_in", "trained meta-learner for --strategy stack"},
            {"report_out", "structured JSON report path"},
            {"strategy", "simple|weighted|stack"},
            {"learner", "ridge|random_forest|mlp"},
            {"seed", "random seed"},
        };
        for (const auto& [key, help] : keys)
            options.emplace_back(key, cmd->add_option("--" + std::string(key), values[key], help));
        cmd->add_option("--prediction", prediction_entries, "prediction file as model_id=path (repeatable)");
    }

    RunConfig resolve() const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) apply_config_entry(cfg, key, values.at(key));
        for (const std::string& entry : prediction_entries) {
            const std::size_t eq = entry.find('=');
            if (eq == std::string::npos || eq == 0)
                throw Error(Errc::invalid_config, "--prediction expects model_id=path, got '" + entry + "'");
            apply_config_entry(cfg, "prediction." + entry.substr(0, eq), entry.substr(eq + 1));
        }
        return cfg;
    }
};

SkeletonSpec resolve_skeleton(const RunConfig& cfg) {
    const std::optional<SkeletonSpec> skeleton = find_skeleton(cfg.skeleton);
    if (!skeleton) throw Error(Errc::invalid_config, "unknown skeleton '" + cfg.skeleton + "'");
    return *skeleton;
}

std::map<std::string, std::vector<PersonPose>> load_all_predictions(const RunConfig& cfg,
                                                                    const SkeletonSpec& skeleton) {
    cfg.validate();
    std::map<std::string, std::vector<PersonPose>> by_model;
    for (const auto& [model, path] : cfg.predictions) {
        std::vector<PersonPose> poses = load_predictions(path, model);
        for (const PersonPose& p : poses) validate_pose(p, skeleton);
        by_model[model] = std::move(poses);
    }
    return by_model;
}

// image_id -> model -> poses, preserving each file's input order.
std::map<std::int64_t, std::map<std::string, std::vector<PersonPose>>> split_by_image(
    const std::map<std::string, std::vector<PersonPose>>& by_model) {
    std::map<std::int64_t, std::map<std::string, std::vector<PersonPose>>> images;
    for (const auto& [model, poses] : by_model)
        for (const PersonPose& p : poses) images[p.image_id][model].push_back(p);
    return images;
}

struct ImageWork {
    std::int64_t image_id;
    const std::map<std::string, std::vector<PersonPose>>* models;
};

// Matches (and optionally fuses) every image; parallel over images with a
// shared cursor, results landing in per-image slots so output order is
// canonical (ascending image id, group order within) for any job count.
template <typename PerImage>
void for_each_image(const std::vector<ImageWork>& work, int jobs, PerImage&& body) {
    if (jobs <= 1) {
        for (std::size_t i = 0; i < work.size(); ++i) body(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(jobs));
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i; (i = cursor.fetch_add(1)) < work.size();) body(i);
            } catch (...) {
                failures[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (std::thread& t : workers) t.join();
    for (const std::exception_ptr& f : failures)
        if (f) std::rethrow_exception(f);
}

int cmd_match(const ConfigFlags& flags) {
    const RunConfig cfg = flags.resolve();
    const SkeletonSpec skeleton = resolve_skeleton(cfg);
    const auto by_model = load_all_predictions(cfg, skeleton);
    const auto images = split_by_image(by_model);

    std::size_t total = 0;
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    for (const auto& [image_id, models] : images) {
        const std::vector<MatchedGroup> groups = match_instances(models, skeleton, cfg.association);
        for (std::size_t g = 0; g < groups.size(); ++g) {
            os << "image=" << image_id << " group=" << g << " size=" << groups[g].members.size() << " models=";
            for (std::size_t m = 0; m < groups[g].members.size(); ++m)
                os << (m ? "," : "") << groups[g].members[m].source_model;
            os << " quality=";
            for (std::size_t m = 0; m < groups[g].match_quality.size(); ++m)
                os << (m ? "," : "") << groups[g].match_quality[m];
            os << "\n";
        }
        total += groups.size();
    }
    os << "groups=" << total << "\n";
    std::cout << os.str();
    return 0;
}

int cmd_fuse(const ConfigFlags& flags, int jobs) {
    const RunConfig cfg = flags.resolve();
    const SkeletonSpec skeleton = resolve_skeleton(cfg);
    const auto by_model = load_all_predictions(cfg, skeleton);
    const auto images = split_by_image(by_model);

    MetaLearner stack_model;
    if (cfg.strategy == "stack") {
        if (cfg.model_in.empty())
            throw Error(Errc::invalid_config, "--strategy stack needs --model_in (trained meta-learner)");
        stack_model = load_model(cfg.model_in);
    }
    BaggingConfig bag = cfg.bagging;
    bag.mode = cfg.strategy == "simple" ? BaggingMode::simple : BaggingMode::weighted;

    std::vector<ImageWork> work;
    work.reserve(images.size());
    for (const auto& [image_id, models] : images) work.push_back({image_id, &models});

    std::vector<std::vector<PersonPose>> fused(work.size());
    std::vector<std::size_t> group_counts(work.size(), 0);
    for_each_image(work, jobs, [&](std::size_t i) {
        const std::vector<MatchedGroup> groups = match_instances(*work[i].models, skeleton, cfg.association);
        group_counts[i] = groups.size();
        for (const MatchedGroup& g : groups) {
            const FusedResult r =
                cfg.strategy == "stack" ? stack_predict(stack_model, g, skeleton) : fuse_keypoints(g, bag);
            fused[i].push_back(r.person());
        }
    });

    std::vector<PersonPose> all_fused;
    std::size_t total_groups = 0;
    for (std::size_t i = 0; i < work.size(); ++i) {
        total_groups += group_counts[i];
        all_fused.insert(all_fused.end(), fused[i].begin(), fused[i].end());
    }
    if (!cfg.results_out.empty()) write_results(all_fused, cfg.results_out);

    std::ostringstream os;
    os << "groups=" << total_groups << " fused=" << all_fused.size() << " strategy=" << cfg.strategy;
    if (!cfg.ground_truth.empty()) {
        const AnnotationSet gt = load_annotations(cfg.ground_truth);
        const EvalReport report = evaluate_map(all_fused, gt.poses, skeleton);
        os << " map=" << std::fixed << std::setprecision(3) << report.map;
    }
    os << "\n";
    std::cout << os.str();
    return 0;
}

int cmd_train_stack(const ConfigFlags& flags) {
    const RunConfig cfg = flags.resolve();
    const SkeletonSpec skeleton = resolve_skeleton(cfg);
    if (cfg.ground_truth.empty()) throw Error(Errc::invalid_config, "train-stack needs --ground_truth");
    const auto by_model = load_all_predictions(cfg, skeleton);
    const auto images = split_by_image(by_model);
    const AnnotationSet gt = load_annotations(cfg.ground_truth);

    std::vector<MatchedGroup> groups;
    for (const auto& [image_id, models] : images) {
        const std::vector<MatchedGroup> g = match_instances(models, skeleton, cfg.association);
        groups.insert(groups.end(), g.begin(), g.end());
    }

    const StackDataset dataset = build_stack_dataset(groups, gt.poses, skeleton, cfg.association);

    TrainConfig train = cfg.train;
    train.seed = cfg.seed;
    const StackTrainResult result = stack_train(dataset, learner_kind_from_name(cfg.learner), train);
    if (!cfg.model_out.empty()) save_model(result.model, cfg.model_out);

    if (!cfg.report_out.empty()) {
        nlohmann::json report;
        report["learner"] = cfg.learner;
        report["rows"] = dataset.features.rows();
        report["train_rows"] = result.train_rows;
        report["validation_rows"] = result.validation_rows;
        report["validation_mse"] = result.validation_mse;
        report["per_keypoint_pixel_error"] = result.per_keypoint_pixel_error;
        if (!result.mlp_report.val_loss_per_epoch.empty()) {
            report["val_loss_per_epoch"] = result.mlp_report.val_loss_per_epoch;
            std::vector<std::pair<int, double>> history;
            for (std::size_t e = 0; e < result.mlp_report.val_loss_per_epoch.size(); ++e)
                history.emplace_back(static_cast<int>(e + 1), result.mlp_report.val_loss_per_epoch[e]);
            nlohmann::json cps = nlohmann::json::array();
            for (const auto& [cp, v] : convergence_report(history).checkpoints) {
                nlohmann::json row;
                row["epoch"] = cp;
                if (v) row["val_loss"] = *v;
                cps.push_back(row);
            }
            report["convergence"] = cps;
        }
        std::ofstream out(cfg.report_out, std::ios::binary);
        if (!out) throw Error(Errc::io_error, "cannot open '" + cfg.report_out + "' for writing");
        out << report.dump(1) << "\n";
    }

    std::ostringstream os;
    os << "rows=" << dataset.features.rows() << " train=" << result.train_rows << " val=" << result.validation_rows
       << " learner=" << cfg.learner << " val_mse=" << std::setprecision(17) << result.validation_mse << "\n";
    std::cout << os.str();
    return 0;
}

int cmd_augment(const ConfigFlags& flags, int budget, int clusters, double rotation_max, double scale_low,
                double scale_high, int attempts_max, double plaus_threshold) {
    const RunConfig cfg = flags.resolve();
    const SkeletonSpec skeleton = resolve_skeleton(cfg);
    if (cfg.ground_truth.empty()) throw Error(Errc::invalid_config, "augment needs --ground_truth");
    if (cfg.results_out.empty()) throw Error(Errc::invalid_config, "augment needs --results_out");
    const AnnotationSet corpus = load_annotations(cfg.ground_truth);
    for (const PersonPose& p : corpus.poses) validate_pose(p, skeleton);

    const PlausibilityModel plausibility = fit_plausibility(corpus.poses, skeleton, plaus_threshold);
    ClusterModel cluster_model = cluster_poses(corpus.poses, skeleton, clusters, cfg.seed);

    TransformParams params;
    params.limb_rotation_max = rotation_max;
    params.limb_scale_range = {scale_low, scale_high};
    params.attempts_max = attempts_max;
    params.seed = cfg.seed;
    const std::vector<PersonPose> accepted =
        augment_dataset(corpus.poses, skeleton, params, plausibility, cluster_model,
                        static_cast<std::size_t>(budget));

    std::vector<PersonPose> combined = corpus.poses;
    combined.insert(combined.end(), accepted.begin(), accepted.end());
    write_annotations(corpus.images, combined, skeleton, cfg.results_out);

    std::cout << "poses=" << corpus.poses.size() << " augmented=" << accepted.size() << " total=" << combined.size()
              << "\n";
    return 0;
}

int cmd_eval(const ConfigFlags& flags, const std::string& results_in, double alpha, double confusion_dist) {
    const RunConfig cfg = flags.resolve();
    const SkeletonSpec skeleton = resolve_skeleton(cfg);
    if (results_in.empty()) throw Error(Errc::invalid_config, "eval needs --results_in");
    if (cfg.ground_truth.empty()) throw Error(Errc::invalid_config, "eval needs --ground_truth");

    const std::vector<PersonPose> predictions = load_predictions(results_in, "fused");
    const AnnotationSet gt = load_annotations(cfg.ground_truth);

    EvalReport report = evaluate_map(predictions, gt.poses, skeleton);
    if (skeleton.head_segment) report.pckh_05 = evaluate_pckh(predictions, gt.poses, skeleton, alpha);
    if (confusion_dist > 0.0) {
        const ConfusionCounts counts = keypoint_confusion(predictions, gt.poses, skeleton, confusion_dist);
        const ConfusionMetrics metrics = confusion_metrics(counts.tp, counts.fp, counts.fn, counts.tn);
        report.precision = metrics.precision;
        report.recall = metrics.recall;
        report.f1 = metrics.f1;
        report.accuracy = metrics.accuracy;
    }

    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "map=" << report.map << "\n";
    os << "map_50=" << report.map_50 << "\n";
    os << "map_75=" << report.map_75 << "\n";
    os << "map_medium=" << report.map_medium << "\n";
    os << "map_large=" << report.map_large << "\n";
    if (report.pckh_05) os << "pckh_05=" << *report.pckh_05 << "\n";
    if (report.precision) os << "precision=" << *report.precision << "\n";
    if (report.recall) os << "recall=" << *report.recall << "\n";
    if (report.f1) os << "f1=" << *report.f1 << "\n";
    if (report.accuracy) os << "accuracy=" << *report.accuracy << "\n";
    std::cout << os.str();

    if (!cfg.report_out.empty()) {
        nlohmann::json j;
        j["map"] = report.map;
        j["map_50"] = report.map_50;
        j["map_75"] = report.map_75;
        j["map_medium"] = report.map_medium;
        j["map_large"] = report.map_large;
        if (report.pckh_05) j["pckh_05"] = *report.pckh_05;
        if (report.precision) j["precision"] = *report.precision;
        if (report.recall) j["recall"] = *report.recall;
        if (report.f1) j["f1"] = *report.f1;
        if (report.accuracy) j["accuracy"] = *report.accuracy;
        std::ofstream out(cfg.report_out, std::ios::binary);
        if (!out) throw Error(Errc::io_error, "cannot open '" + cfg.report_out + "' for writing");
        out << j.dump(1) << "\n";
    }
    return 0;
}

int cmd_bench(const ConfigFlags& flags, const std::string& resolutions_arg, int repeats, int scenes, int people) {
    const RunConfig cfg = flags.resolve();
    const SkeletonSpec skeleton = resolve_skeleton(cfg);

    std::vector<std::pair<int, int>> resolutions;
    std::stringstream ss(resolutions_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::size_t x = item.find('x');
        if (x == std::string::npos)
            throw Error(Errc::invalid_config, "--resolutions expects WxH[,WxH...], got '" + item + "'");
        resolutions.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
    }
    if (resolutions.empty()) throw Error(Errc::invalid_config, "no resolutions given");

    // Workload: synthesize scenes at the resolution, run two noisy detectors,
    // match, weighted-fuse, evaluate.
    const auto workload = [&](std::pair<int, int> res) {
        std::vector<PersonPose> gt_all, fused_all;
        for (int s = 0; s < scenes; ++s) {
            const std::uint64_t scene_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
            auto [gt, info] = generate_scene(people, skeleton, res, scene_seed, s + 1);
            std::map<std::string, std::vector<PersonPose>> by_model;
            for (int d = 0; d < 2; ++d) {
                DetectorNoiseModel noise;
                noise.coordinate_noise_sigma = 3.0 + d;
                noise.seed = derive_seed(scene_seed, 100 + static_cast<std::uint64_t>(d));
                auto preds = simulate_detector(gt, noise, skeleton);
                by_model["det" + std::to_string(d)] = std::move(preds);
            }
            for (const MatchedGroup& g : match_instances(by_model, skeleton, cfg.association))
                fused_all.push_back(fuse_keypoints(g, cfg.bagging).person());
            gt_all.insert(gt_all.end(), gt.begin(), gt.end());
        }
        (void)evaluate_map(fused_all, gt_all, skeleton);
    };

    const std::vector<BenchRow> rows = bench_throughput(workload, resolutions, repeats);
    std::cout << format_bench_table(rows);

    if (!cfg.report_out.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const BenchRow& r : rows) {
            nlohmann::json row;
            row["width"] = r.input_resolution.first;
            row["height"] = r.input_resolution.second;
            row["fps"] = r.fps;
            row["latency_ms"] = r.latency_ms;
            j.push_back(row);
        }
        std::ofstream out(cfg.report_out, std::ios::binary);
        if (!out) throw Error(Errc::io_error, "cannot open '" + cfg.report_out + "' for writing");
        out << j.dump(1) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"detector-agnostic multi-person pose fusion"};
    app.require_subcommand(1);

    ConfigFlags match_flags, fuse_flags, train_flags, augment_flags, eval_flags, bench_flags;

    CLI::App* match_cmd = app.add_subcommand("match", "associate per-model detections into person groups");
    match_flags.attach(match_cmd);

    CLI::App* fuse_cmd = app.add_subcommand("fuse", "match detections and fuse each group");
    fuse_flags.attach(fuse_cmd);
    int jobs = 1;
    fuse_cmd->add_option("--jobs", jobs, "worker threads (output order is canonical regardless)")
        ->check(CLI::PositiveNumber);

    CLI::App* train_cmd = app.add_subcommand("train-stack", "build the stacking dataset and train a meta-learner");
    train_flags.attach(train_cmd);

    CLI::App* augment_cmd = app.add_subcommand("augment", "enlarge an annotation corpus with plausible variants");
    augment_flags.attach(augment_cmd);
    int budget = 0, clusters = 5, attempts_max = 10;
    double rotation_max = 0.52, scale_low = 0.8, scale_high = 1.2, plaus_threshold = 3.0;
    augment_cmd->add_option("--budget", budget, "number of augmented poses to produce")->required();
    augment_cmd->add_option("--clusters", clusters, "pose clusters for rarity targeting");
    augment_cmd->add_option("--rotation_max", rotation_max, "max limb rotation (radians)");
    augment_cmd->add_option("--scale_low", scale_low, "min limb scale");
    augment_cmd->add_option("--scale_high", scale_high, "max limb scale");
    augment_cmd->add_option("--attempts_max", attempts_max, "transform attempts per candidate");
    augment_cmd->add_option("--plaus_threshold", plaus_threshold, "plausibility z-score threshold");

    CLI::App* eval_cmd = app.add_subcommand("eval", "score a results file against ground truth");
    eval_flags.attach(eval_cmd);
    std::string results_in;
    double alpha = 0.5, confusion_dist = 0.0;
    eval_cmd->add_option("--results_in", results_in, "results file to evaluate")->required();
    eval_cmd->add_option("--alpha", alpha, "PCKh head-length fraction");
    eval_cmd->add_option("--confusion_dist", confusion_dist, "pixel threshold enabling confusion metrics");

    CLI::App* bench_cmd = app.add_subcommand("bench", "time the fusion+evaluation pipeline");
    bench_flags.attach(bench_cmd);
    std::string resolutions = "640x480,1280x720";
    int repeats = 5, scenes = 2, people = 2;
    bench_cmd->add_option("--resolutions", resolutions, "comma-separated WxH list");
    bench_cmd->add_option("--repeats", repeats, "timed repetitions per resolution");
    bench_cmd->add_option("--scenes", scenes, "synthetic scenes per run");
    bench_cmd->add_option("--people", people, "people per scene");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n\n" << app.help() << std::flush;
        return 1;
    }

    try {
        if (match_cmd->parsed()) return cmd_match(match_flags);
        if (fuse_cmd->parsed()) return cmd_fuse(fuse_flags, jobs);
        if (train_cmd->parsed()) return cmd_train_stack(train_flags);
        if (augment_cmd->parsed())
            return cmd_augment(augment_flags, budget, clusters, rotation_max, scale_low, scale_high, attempts_max,
                               plaus_threshold);
        if (eval_cmd->parsed()) return cmd_eval(eval_flags, results_in, alpha, confusion_dist);
        if (bench_cmd->parsed()) return cmd_bench(bench_flags, resolutions, repeats, scenes, people);
    } catch (const Error& e) {
        std::cerr << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
