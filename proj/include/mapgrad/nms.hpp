#pragma once

#include <vector>

#include "mapgrad/geometry.hpp"

namespace mapgrad {

struct NmsConfig {
    double overlap_threshold = 0.3;  // in (0,1); IoU strictly above suppresses
};

struct NmsWindow {
    int id = -1;
    BoundingBox box;
    double score = 0.0;
};

struct SuppressionRecord {
    int suppressed = -1;
    int suppressor = -1;  // always a retained window
};

/// Retained ids in decreasing-score order plus one suppression record per
/// suppressed window, attributed to the retained window that marked it.
struct NmsOutcome {
    std::vector<int> retained;
    std::vector<SuppressionRecord> suppressions;
};

/// Greedy suppression. Ties in score are broken toward the lower window id,
/// which makes the outcome invariant to input order and to any strictly
/// increasing transform of the scores. IoU exactly equal to the threshold
/// does not suppress.
NmsOutcome run_nms(const std::vector<NmsWindow>& windows, const NmsConfig& cfg);

}  // namespace mapgrad
