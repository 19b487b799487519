#pragma once

#include <functional>

namespace mapgrad {

/// Thread cap from MAPGRAD_THREADS (0 or unset = hardware concurrency).
int max_threads();

/// Runs fn(c) for c in [0, num_classes). Per-class work must be independent;
/// results land in per-class slots so the merge order is deterministic.
void parallel_for_classes(int num_classes, const std::function<void(int)>& fn);

}  // namespace mapgrad
