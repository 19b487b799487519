#include "mapgrad/nms.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "mapgrad/kernels.hpp"

namespace mapgrad {

NmsOutcome run_nms(const std::vector<NmsWindow>& windows, const NmsConfig& cfg) {
    if (!(cfg.overlap_threshold > 0.0 && cfg.overlap_threshold < 1.0))
        throw std::invalid_argument("run_nms: overlap_threshold must be in (0,1)");

    NmsOutcome out;
    const std::size_t n = windows.size();
    if (n == 0) return out;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (windows[a].score != windows[b].score) return windows[a].score > windows[b].score;
        return windows[a].id < windows[b].id;
    });

    kernels::BoxArray boxes;
    boxes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& w = windows[order[i]];
        if (!w.box.valid())
            throw std::invalid_argument("run_nms: degenerate window box");
        boxes.push(w.box);
    }

    const auto& k = kernels::active();
    std::vector<std::uint8_t> marked(n, 0);
    std::vector<std::uint8_t> mask(n, 0);
    out.retained.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        if (marked[i]) continue;
        const int keeper = windows[order[i]].id;
        out.retained.push_back(keeper);
        marked[i] = 1;
        if (i + 1 == n) break;
        k.overlap_mask(windows[order[i]].box, boxes.area[i], boxes, i + 1, n,
                       cfg.overlap_threshold, mask.data());
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!marked[j] && mask[j - i - 1]) {
                marked[j] = 1;
                out.suppressions.push_back({windows[order[j]].id, keeper});
            }
        }
    }
    return out;
}

}  // namespace mapgrad
