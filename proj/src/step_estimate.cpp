#include "mapgrad/step_estimate.hpp"

#include <algorithm>

namespace mapgrad {

double symmetric_difference_estimate(const StepProfile& p, const EstimatorConfig& cfg) {
    (void)cfg;
    double right_slope = 0.0;
    double left_slope = 0.0;
    if (p.right)
        right_slope = (p.right->value - p.mid_value) / (p.right->position - p.x);
    if (p.left)
        left_slope = (p.mid_value - p.left->value) / (p.x - p.left->position);
    return 0.5 * (right_slope + left_slope);
}

double mean_envelope_estimate(const StepProfile& p, const EstimatorConfig& cfg) {
    if (p.left && p.right) {
        const double span = p.right->position - p.left->position;
        return (p.right->value - p.left->value) / (2.0 * span);
    }
    if (!p.left && !p.right) return 0.0;
    // Boundary region: one flat side. Use the difference estimate on the
    // existing side with the distance bounded below.
    double slope = 0.0;
    if (p.right) {
        const double dist = std::max(p.right->position - p.x, cfg.flat_region_delta_min);
        slope = (p.right->value - p.mid_value) / dist;
    } else {
        const double dist = std::max(p.x - p.left->position, cfg.flat_region_delta_min);
        slope = (p.mid_value - p.left->value) / dist;
    }
    return 0.5 * slope;  // mean with the flat side's zero slope
}

double estimate(const StepProfile& p, const EstimatorConfig& cfg) {
    return cfg.kind == EstimatorKind::SDE ? symmetric_difference_estimate(p, cfg)
                                          : mean_envelope_estimate(p, cfg);
}

}  // namespace mapgrad
