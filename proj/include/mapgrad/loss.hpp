#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mapgrad/eval.hpp"
#include "mapgrad/nms.hpp"
#include "mapgrad/score_table.hpp"
#include "mapgrad/step_estimate.hpp"

namespace mapgrad {

/// One side of a score step: the smallest move in that direction that changes
/// AP, and the AP value on the plateau beyond it.
struct StepSide {
    double delta = 0.0;  // > 0
    double ap = 0.0;
};

struct WindowSteps {
    std::optional<StepSide> plus;
    std::optional<StepSide> minus;
};

struct LossConfig {
    double epsilon_log = 0.01;   // epsilon inside -log(mAP + epsilon)
    double lambda_reg = 1e-4;    // L4 weight
    double clip_threshold = 1.0;
    EstimatorConfig estimator;
    NmsConfig nms_cfg;
    EvalConfig eval_cfg;
};

/// Ranking view of one class used by the step passes: detection kinds in rank
/// order plus per-ordinal precision / suffix-max / quadrature-weight arrays.
/// AP == sum_k weight[k] * suffix_max[k] for both variants.
struct ClassRankingContext {
    ApVariant variant = ApVariant::VOC2012_AREA;
    std::size_t n_gt = 0;
    double ap = 0.0;
    std::vector<std::uint8_t> kind;   // per 0-based rank, 1 = TP
    std::vector<double> det_scores;   // per 0-based rank
    std::vector<int> tp_prefix;       // per 0-based rank: #TP among ranks <= r
    // 1-based by TP ordinal, sized T+2 (suffix_max[T+1] = 0 sentinel).
    std::vector<double> prec;       // prec[k] = k / tp_index[k]
    std::vector<int> tp_index;      // 1-based detection rank of the k-th TP
    std::vector<double> suffix_max;
    std::vector<double> weight;     // weight[k] covers ordinals 1..T+1

    int num_dets() const { return static_cast<int>(kind.size()); }
    int num_tp() const { return kind.empty() ? 0 : tp_prefix.back(); }
};

ClassRankingContext build_ranking_context(const ClassEval& ce, ApVariant variant);

/// AP of the ranking after the detection at from_rank (1-based) is moved to
/// to_rank, everything else keeping its relative order. Full recomputation;
/// used as the in-process oracle for the incremental step deltas.
double ap_after_move(const ClassRankingContext& ctx, int from_rank, int to_rank);

/// AP of the ranking with an extra true positive inserted at 1-based rank pos
/// (existing detections at pos and below shift down one).
double ap_with_inserted_tp(const ClassRankingContext& ctx, int pos);

/// Counts step-profile computations; the backward pass performs at most
/// 3 * (window count) of them per class.
struct StepStats {
    std::vector<std::size_t> profiles_per_class;
    std::vector<std::size_t> windows_per_class;
};

/// Two linear passes over the ranked detections (descending then ascending
/// score) yielding each detection's nearest AP-changing step on either side.
/// A candidate crossing only counts when it changes the interpolated curve's
/// area; neutral crossings are skipped.
std::vector<WindowSteps> find_steps(const ClassRankingContext& ctx,
                                    std::size_t* profile_counter = nullptr);

/// Steps over all pre-NMS windows of one class, indexed by flat window index.
struct ClassSteps {
    std::vector<WindowSteps> per_window;
};

/// Extends the post-NMS steps to every window of the class under the NMS
/// transitivity approximations: suppressed windows inherit their suppressor's
/// positive step; suppressed windows covering a ground truth with no true
/// positive gain a rescue step at their suppressor's score (and the suppressor
/// a matching negative step); a retained detection's negative step is dropped
/// when its crossing lies at or below its highest suppressed window's score,
/// where the pipeline output freezes.
ClassSteps nms_aware_steps(const ClassRankingContext& ctx, const ClassEval& ce,
                           const ScoreTable& scores, const Dataset& data,
                           const EvalConfig& eval_cfg,
                           std::size_t* profile_counter = nullptr);

struct LossResult {
    double loss = 0.0;
    double map = 0.0;
    GradientField gradient;  // after clipping
    std::size_t clipped_count = 0;  // entries whose magnitude hit the threshold
    std::vector<std::optional<double>> per_class_ap;
    std::vector<ClassSteps> per_class_steps;
    StepStats stats;
};

/// Forward: per-image per-class NMS, mAP over the batch,
/// loss = -log(mAP + eps) + lambda * sum |s|^4.
/// Backward: per-class step profiles through the configured estimator,
/// chained by d(-log(mAP+eps))/dAP_c = -1/(K * (mAP+eps)), plus the
/// regulariser term 4*lambda*s^3, then clipping.
LossResult loss_and_gradient(const ScoreTable& scores, const Dataset& data,
                             const LossConfig& cfg);

/// Elementwise clamp to [-threshold, threshold].
GradientField clip_gradient(GradientField grad, double threshold);

/// Debug CSV: image,window,class,score,delta_plus,ap_plus,delta_minus,ap_minus,grad
std::string gradient_dump_csv(const Dataset& data, const ScoreTable& scores,
                              const LossResult& result);

}  // namespace mapgrad
