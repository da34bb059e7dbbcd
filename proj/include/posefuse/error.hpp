// Structured errors shared by every posefuse module.
#pragma once

#include <stdexcept>
#include <string>

namespace posefuse {

enum class Errc {
    // core model
    keypoint_count_mismatch,
    score_out_of_range,
    non_finite_coordinate,
    // rotation averaging
    empty_input,
    degenerate_input,
    all_weights_zero,
    not_a_rotation,
    negative_weight,
    non_finite_input,
    // assignment / association
    non_finite_cost,
    skeleton_mismatch,
    no_labeled_keypoints,
    missing_area,
    // bagging
    length_mismatch,
    empty_group,
    non_positive_epsilon,
    // stacking
    singular_system,
    insufficient_rows,
    non_finite_loss,
    no_matched_rows,
    dimension_mismatch,
    // augmentation
    too_few_poses,
    degenerate_torso,
    budget_unreachable,
    // synthetic benchmark
    placement_failure,
    // metrics
    missing_score,
    no_head_segment,
    empty_history,
    // io
    parse_error,
    schema_error,
    io_error,
    invalid_config,
    // generic contract violations
    invalid_argument,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::keypoint_count_mismatch: return "KeypointCountMismatch";
        case Errc::score_out_of_range: return "ScoreOutOfRange";
        case Errc::non_finite_coordinate: return "NonFiniteCoordinate";
        case Errc::empty_input: return "EmptyInput";
        case Errc::degenerate_input: return "DegenerateInput";
        case Errc::all_weights_zero: return "AllWeightsZero";
        case Errc::not_a_rotation: return "NotARotation";
        case Errc::negative_weight: return "NegativeWeight";
        case Errc::non_finite_input: return "NonFiniteInput";
        case Errc::non_finite_cost: return "NonFiniteCost";
        case Errc::skeleton_mismatch: return "SkeletonMismatch";
        case Errc::no_labeled_keypoints: return "NoLabeledKeypoints";
        case Errc::missing_area: return "MissingArea";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::empty_group: return "EmptyGroup";
        case Errc::non_positive_epsilon: return "NonPositiveEpsilon";
        case Errc::singular_system: return "SingularSystem";
        case Errc::insufficient_rows: return "InsufficientRows";
        case Errc::non_finite_loss: return "NonFiniteLoss";
        case Errc::no_matched_rows: return "NoMatchedRows";
        case Errc::dimension_mismatch: return "DimensionMismatch";
        case Errc::too_few_poses: return "TooFewPoses";
        case Errc::degenerate_torso: return "DegenerateTorso";
        case Errc::budget_unreachable: return "BudgetUnreachable";
        case Errc::placement_failure: return "PlacementFailure";
        case Errc::missing_score: return "MissingScore";
        case Errc::no_head_segment: return "NoHeadSegment";
        case Errc::empty_history: return "EmptyHistory";
        case Errc::parse_error: return "ParseError";
        case Errc::schema_error: return "SchemaError";
        case Errc::io_error: return "IoError";
        case Errc::invalid_config: return "InvalidConfig";
        case Errc::invalid_argument: return "InvalidArgument";
    }
    return "UnknownError";
}

// Single exception type carrying a machine-checkable code plus a
// human-readable detail naming the offending field/index/file.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace posefuse
