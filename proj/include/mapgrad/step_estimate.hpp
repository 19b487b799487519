#pragma once

#include <optional>

namespace mapgrad {

/// Local description of a piecewise-constant function around an evaluation
/// point: the plateau value at x and the nearest step on each side, if any.
/// "Beyond" a step means the plateau value on the open interval past it.
struct StepProfile {
    struct Step {
        double position = 0.0;  // x_L < x for left, x_R > x for right
        double value = 0.0;     // f beyond the step
    };
    double x = 0.0;
    double mid_value = 0.0;
    std::optional<Step> left;
    std::optional<Step> right;
};

enum class EstimatorKind { SDE, MEE };

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::MEE;
    /// Lower bound on the perturbation distance where a side has no step
    /// (flat envelope region); keeps the fallback slope bounded.
    double flat_region_delta_min = 0.1;
};

/// Symmetric difference estimate: the mean of the one-sided slopes taken in
/// the limit of crossing just past each step. A missing side contributes
/// slope zero.
double symmetric_difference_estimate(const StepProfile& p, const EstimatorConfig& cfg);

/// Mean envelope estimate. With both steps present this is the mean slope of
/// the local piecewise-linear upper and lower envelopes, which reduces to
/// (f_right - f_left) / (2 (x_R - x_L)). With one side missing it falls back
/// to the symmetric difference estimate with the existing side's distance
/// bounded below by flat_region_delta_min; with no steps it is zero.
double mean_envelope_estimate(const StepProfile& p, const EstimatorConfig& cfg);

double estimate(const StepProfile& p, const EstimatorConfig& cfg);

}  // namespace mapgrad
