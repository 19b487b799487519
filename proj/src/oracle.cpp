#include "mapgrad/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

// Brute-force reference path. Deliberately written against the literal
// definitions, with its own NMS and curve code, so a bug in the fast path
// cannot validate itself. Only the geometry primitives are shared.

namespace mapgrad::oracle {

namespace {

void sort_ranking(std::vector<ScoredBox>& dets) {
    std::sort(dets.begin(), dets.end(), [](const ScoredBox& a, const ScoredBox& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image != b.image) return a.image < b.image;
        return a.window < b.window;
    });
}

struct CurvePoint {
    double recall;
    double precision;
};

double ap_from_points(std::vector<CurvePoint> pts, const EvalConfig& cfg) {
    double run = 0.0;
    for (std::size_t i = pts.size(); i-- > 0;) {
        run = std::max(run, pts[i].precision);
        pts[i].precision = run;
    }
    if (cfg.ap_variant == ApVariant::VOC2012_AREA) {
        double area = 0.0;
        double prev = 0.0;
        for (const auto& p : pts) {
            area += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        return area;
    }
    double sum = 0.0;
    for (int j = 0; j <= 10; ++j) {
        const double t = static_cast<double>(j) / 10.0;
        double p = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (pts[i].recall >= t) {
                p = pts[i].precision;
                break;
            }
        }
        sum += p;
    }
    return sum / 11.0;
}

}  // namespace

double oracle_ap(std::vector<ScoredBox> dets, const std::vector<GtBox>& gts,
                 const EvalConfig& cfg) {
    if (gts.empty())
        throw std::domain_error("oracle_ap: AP undefined with zero ground truths");
    sort_ranking(dets);

    std::vector<int> claimed(gts.size(), 0);
    std::vector<CurvePoint> pts;
    pts.reserve(dets.size());
    std::size_t tp = 0;
    for (std::size_t r = 0; r < dets.size(); ++r) {
        double best = cfg.match_iou;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gts[g].image != dets[r].image) continue;
            const double v = iou(dets[r].box, gts[g].box);
            if (v > best) {
                best = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0 && !claimed[static_cast<std::size_t>(best_gt)]) {
            claimed[static_cast<std::size_t>(best_gt)] = 1;
            ++tp;
        }
        pts.push_back({static_cast<double>(tp) / static_cast<double>(gts.size()),
                       static_cast<double>(tp) / static_cast<double>(r + 1)});
    }
    return ap_from_points(std::move(pts), cfg);
}

namespace {

// Own greedy suppression, quadratic and simple.
std::vector<int> greedy_keep(const std::vector<int>& windows,
                             const std::vector<BoundingBox>& boxes,
                             const std::vector<double>& scores, double threshold) {
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return windows[a] < windows[b];
    });
    std::vector<int> kept;
    std::vector<char> gone(windows.size(), 0);
    for (std::size_t a = 0; a < order.size(); ++a) {
        const std::size_t i = order[a];
        if (gone[i]) continue;
        kept.push_back(windows[i]);
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const std::size_t j = order[b];
            if (!gone[j] && iou(boxes[i], boxes[j]) > threshold) gone[j] = 1;
        }
    }
    return kept;
}

template <typename ScoreAt>
std::optional<double> class_ap_impl(const Dataset& data, int class_id, ScoreAt&& score_at,
                                    const NmsConfig& nms_cfg, const EvalConfig& eval_cfg) {
    std::vector<GtBox> gts;
    for (std::size_t i = 0; i < data.images.size(); ++i)
        for (const auto& g : data.images[i].ground_truths)
            if (g.class_id == class_id) gts.push_back({static_cast<int>(i), g.box});
    if (gts.empty()) return std::nullopt;

    std::vector<ScoredBox> dets;
    std::vector<int> windows;
    std::vector<BoundingBox> boxes;
    std::vector<double> svals;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& im = data.images[i];
        windows.clear();
        boxes.clear();
        svals.clear();
        for (const auto& p : im.proposals) {
            windows.push_back(p.window);
            boxes.push_back(p.box);
            svals.push_back(score_at(static_cast<int>(i), p.window));
        }
        for (int w : greedy_keep(windows, boxes, svals, nms_cfg.overlap_threshold))
            dets.push_back({static_cast<int>(i), w,
                            im.proposals[static_cast<std::size_t>(w)].box,
                            score_at(static_cast<int>(i), w)});
    }
    return oracle_ap(std::move(dets), gts, eval_cfg);
}

}  // namespace

std::optional<double> pipeline_class_ap(const ScoreTable& scores, const Dataset& data,
                                        int class_id, const NmsConfig& nms_cfg,
                                        const EvalConfig& eval_cfg) {
    return class_ap_impl(data, class_id,
                         [&](int i, int w) { return scores.at(i, w, class_id); },
                         nms_cfg, eval_cfg);
}

double pipeline_map(const ScoreTable& scores, const Dataset& data,
                    const NmsConfig& nms_cfg, const EvalConfig& eval_cfg) {
    double sum = 0.0;
    int engaged = 0;
    for (int c = 0; c < data.num_classes; ++c) {
        const auto ap = pipeline_class_ap(scores, data, c, nms_cfg, eval_cfg);
        if (ap) {
            sum += *ap;
            ++engaged;
        }
    }
    if (engaged == 0)
        throw std::domain_error("pipeline_map: no class has any ground truth");
    return sum / static_cast<double>(engaged);
}

OracleStepResult oracle_steps(const ScoreTable& scores, const Dataset& data, int image,
                              int window, int class_id, const NmsConfig& nms_cfg,
                              const EvalConfig& eval_cfg) {
    OracleStepResult res;

    std::vector<double> values;
    for (std::size_t i = 0; i < data.images.size(); ++i)
        for (const auto& p : data.images[i].proposals)
            values.push_back(scores.at(static_cast<int>(i), p.window, class_id));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    const double s = scores.at(image, window, class_id);
    auto eval_at = [&](double probe) {
        const auto ap = class_ap_impl(
            data, class_id,
            [&](int i, int w) {
                if (i == image && w == window) return probe;
                return scores.at(i, w, class_id);
            },
            nms_cfg, eval_cfg);
        if (!ap)
            throw std::domain_error("oracle_steps: class has no ground truth");
        return *ap;
    };
    res.current_ap = eval_at(s);

    // Ascending: probe just past each distinct score above s. A plateau holds
    // between adjacent distinct scores, so the first differing probe pins the
    // step to the score value it crossed.
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > s)) continue;
        const double past = (i + 1 < values.size())
                                ? 0.5 * (values[i] + values[i + 1])
                                : values[i] + 1.0;
        const double ap = eval_at(past);
        if (ap != res.current_ap) {
            res.right = StepSideValue{values[i], ap};
            break;
        }
    }
    // Descending: probe just below each distinct score under s.
    for (std::size_t i = values.size(); i-- > 0;) {
        if (!(values[i] < s)) continue;
        const double past = (i > 0) ? 0.5 * (values[i - 1] + values[i]) : values[i] - 1.0;
        const double ap = eval_at(past);
        if (ap != res.current_ap) {
            res.left = StepSideValue{values[i], ap};
            break;
        }
    }
    return res;
}

ScoreTable reference_scores(const Dataset& data) {
    ScoreTable t(data, -1.0);

    struct Pick {
        double iou_margin;
        int image;
        int gt_index;
        int window;
        int class_id;
    };
    std::vector<Pick> picks;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& im = data.images[i];
        for (std::size_t g = 0; g < im.ground_truths.size(); ++g) {
            const auto& gt = im.ground_truths[g];
            double best = 0.0;
            int best_w = -1;
            for (const auto& p : im.proposals) {
                const double v = iou(p.box, gt.box);
                if (v > best) {
                    best = v;
                    best_w = p.window;
                }
            }
            if (best_w >= 0)
                picks.push_back({best, static_cast<int>(i), static_cast<int>(g), best_w,
                                 gt.class_id});
        }
    }
    std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
        if (a.iou_margin != b.iou_margin) return a.iou_margin > b.iou_margin;
        if (a.image != b.image) return a.image < b.image;
        return a.gt_index < b.gt_index;
    });
    double score = 10.0;
    for (const auto& p : picks) {
        double& slot = t.at(p.image, p.window, p.class_id);
        if (slot < 0.0) {  // first (highest) assignment wins
            slot = score;
            score -= 1e-3;
        }
    }
    return t;
}

double reference_map(const Dataset& data, const NmsConfig& nms_cfg,
                     const EvalConfig& eval_cfg) {
    return pipeline_map(reference_scores(data), data, nms_cfg, eval_cfg);
}

}  // namespace mapgrad::oracle
