#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mapgrad/data_model.hpp"
#include "mapgrad/nms.hpp"
#include "mapgrad/score_table.hpp"

namespace mapgrad {

enum class ApVariant { VOC2007_11POINT, VOC2012_AREA };

struct EvalConfig {
    double match_iou = 0.5;  // strict >
    ApVariant ap_variant = ApVariant::VOC2012_AREA;
};

/// One pooled detection of a class, after per-image NMS.
struct DetectionRef {
    int image = -1;
    int window = -1;
    double score = 0.0;
};

struct DetectionLabel {
    DetectionRef det;
    bool is_tp = false;
    int matched_gt = -1;  // index into the per-class ground-truth list, -1 = none
};

struct PRCurve {
    struct Point {
        double recall = 0.0;
        double precision = 0.0;
    };
    std::vector<Point> points;  // one per detection, decreasing-score order
    std::size_t n_gt = 0;
};

/// Ground truth of one class, flattened over images.
struct ClassGroundTruth {
    int image = -1;
    BoundingBox box;
};

/// Sorts detections by (score desc, image asc, window asc). The same order is
/// used everywhere a ranking is needed, so ties resolve identically across
/// matching, PR construction and the step passes.
void sort_detections(std::vector<DetectionRef>& dets);

/// Maps each detection to its most-overlapping same-image ground truth when
/// IoU exceeds cfg.match_iou; per ground truth only the highest-ranked mapped
/// detection is a true positive. `det_boxes` is parallel to `dets`, which must
/// already be in ranking order (see sort_detections).
std::vector<DetectionLabel> match_detections(const std::vector<DetectionRef>& dets,
                                             const std::vector<BoundingBox>& det_boxes,
                                             const std::vector<ClassGroundTruth>& gts,
                                             const EvalConfig& cfg);

/// Point i (1-indexed): recall = TP_i / n_gt, precision = TP_i / i.
/// Throws std::domain_error when n_gt == 0 (AP undefined).
PRCurve build_pr_curve(const std::vector<DetectionLabel>& labels, std::size_t n_gt);

/// Replaces each precision by the maximum of itself and every precision at a
/// later point (running max from the tail). Recall values are unchanged.
PRCurve interpolate(const PRCurve& pr);

double average_precision(const PRCurve& pr, const EvalConfig& cfg);

/// Everything the loss passes need about one class: per-image NMS outcomes,
/// the pooled labeled ranking, and the curve.
struct ClassEval {
    int class_id = -1;
    std::size_t n_gt = 0;
    std::vector<NmsOutcome> nms_per_image;              // indexed by image
    std::vector<ClassGroundTruth> gts;                  // flattened class GTs
    std::vector<int> gt_tp_count;                       // per gts entry
    std::vector<DetectionLabel> labels;                 // ranked detections
    PRCurve curve;
    std::optional<double> ap;                           // empty when n_gt == 0
};

ClassEval evaluate_class(const ScoreTable& scores, const Dataset& data, int class_id,
                         const NmsConfig& nms_cfg, const EvalConfig& eval_cfg);

struct MeanApResult {
    double map = 0.0;
    std::vector<std::optional<double>> per_class;  // empty optional: no ground truth
};

/// Full pipeline per class (per-image NMS, cross-image pooling, matching, AP),
/// then the mean over classes that have at least one ground truth.
/// Throws std::domain_error if no class has any ground truth.
MeanApResult mean_ap(const ScoreTable& scores, const Dataset& data,
                     const NmsConfig& nms_cfg, const EvalConfig& eval_cfg);

/// PR CSV: rank,score,kind,recall,precision,interp_precision
std::string pr_curve_csv(const std::vector<DetectionLabel>& labels, const PRCurve& curve);

}  // namespace mapgrad
