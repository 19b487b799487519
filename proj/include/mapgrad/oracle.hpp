#pragma once

#include <optional>
#include <vector>

#include "mapgrad/data_model.hpp"
#include "mapgrad/eval.hpp"
#include "mapgrad/score_table.hpp"

namespace mapgrad::oracle {

/// A scored detection for the standalone AP reference.
struct ScoredBox {
    int image = -1;
    int window = -1;
    BoundingBox box;
    double score = 0.0;
};

struct GtBox {
    int image = -1;
    BoundingBox box;
};

/// Literal reimplementation of matching, PR construction, interpolation and
/// both AP variants. Shares only the geometry primitives with the fast path;
/// ordering conventions are identical so results must agree bit-for-bit.
/// Throws std::domain_error when gts is empty.
double oracle_ap(std::vector<ScoredBox> dets, const std::vector<GtBox>& gts,
                 const EvalConfig& cfg);

/// Full pipeline (own NMS, matching, AP) for one class of a dataset.
/// Empty optional when the class has no ground truth.
std::optional<double> pipeline_class_ap(const ScoreTable& scores, const Dataset& data,
                                        int class_id, const NmsConfig& nms_cfg,
                                        const EvalConfig& eval_cfg);

/// mAP over classes with at least one ground truth, through the oracle
/// pipeline. Throws std::domain_error when no class has any.
double pipeline_map(const ScoreTable& scores, const Dataset& data,
                    const NmsConfig& nms_cfg, const EvalConfig& eval_cfg);

struct StepSideValue {
    double position = 0.0;  // the crossed score value
    double ap = 0.0;        // plateau just past it
};

/// Exhaustive perturbation scan of one window's class score: the full
/// pipeline is evaluated at midpoints between adjacent distinct scores of the
/// class (plus points beyond both extremes), and the nearest AP change on
/// each side is reported with its plateau value.
struct OracleStepResult {
    double current_ap = 0.0;
    std::optional<StepSideValue> left, right;
};

OracleStepResult oracle_steps(const ScoreTable& scores, const Dataset& data, int image,
                              int window, int class_id, const NmsConfig& nms_cfg,
                              const EvalConfig& eval_cfg);

/// Greedy achievable-score assignment: each ground truth's highest-IoU
/// proposal receives a unique high score (ordered by IoU margin), everything
/// else a uniform low score.
ScoreTable reference_scores(const Dataset& data);

/// mAP of reference_scores through the oracle pipeline; the training target.
double reference_map(const Dataset& data, const NmsConfig& nms_cfg,
                     const EvalConfig& eval_cfg);

}  // namespace mapgrad::oracle
