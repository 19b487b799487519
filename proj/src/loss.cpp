#include "mapgrad/loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mapgrad/kernels.hpp"
#include "mapgrad/parallel.hpp"

namespace mapgrad {

namespace {

// Quadrature weights by TP ordinal, covering ordinals 1..max_ordinal.
// VOC2012: every recall increment weighs 1/n_gt. VOC2007: weight of ordinal k
// is (number of sample recalls t in {0, .1, ..., 1} whose smallest qualifying
// ordinal is k) / 11, with the ceil computed in integer arithmetic.
std::vector<double> quadrature_weights(ApVariant variant, std::size_t n_gt,
                                       int max_ordinal) {
    std::vector<double> w(static_cast<std::size_t>(max_ordinal) + 1, 0.0);
    if (variant == ApVariant::VOC2012_AREA) {
        for (int k = 1; k <= max_ordinal; ++k)
            w[static_cast<std::size_t>(k)] = 1.0 / static_cast<double>(n_gt);
        return w;
    }
    for (int j = 0; j <= 10; ++j) {
        const std::size_t k = j == 0 ? 1 : (static_cast<std::size_t>(j) * n_gt + 9) / 10;
        if (k >= 1 && k <= static_cast<std::size_t>(max_ordinal))
            w[k] += 1.0 / 11.0;
    }
    return w;
}

}  // namespace

ClassRankingContext build_ranking_context(const ClassEval& ce, ApVariant variant) {
    ClassRankingContext ctx;
    ctx.variant = variant;
    ctx.n_gt = ce.n_gt;
    ctx.ap = ce.ap.value_or(0.0);

    const int n = static_cast<int>(ce.labels.size());
    ctx.kind.resize(static_cast<std::size_t>(n));
    ctx.det_scores.resize(static_cast<std::size_t>(n));
    ctx.tp_prefix.resize(static_cast<std::size_t>(n));
    int tp = 0;
    for (int r = 0; r < n; ++r) {
        const auto& lab = ce.labels[static_cast<std::size_t>(r)];
        ctx.kind[static_cast<std::size_t>(r)] = lab.is_tp ? 1 : 0;
        ctx.det_scores[static_cast<std::size_t>(r)] = lab.det.score;
        if (lab.is_tp) ++tp;
        ctx.tp_prefix[static_cast<std::size_t>(r)] = tp;
    }
    const int T = tp;
    ctx.prec.assign(static_cast<std::size_t>(T) + 2, 0.0);
    ctx.tp_index.assign(static_cast<std::size_t>(T) + 2, 0);
    ctx.suffix_max.assign(static_cast<std::size_t>(T) + 2, 0.0);
    int k = 0;
    for (int r = 0; r < n; ++r) {
        if (ctx.kind[static_cast<std::size_t>(r)]) {
            ++k;
            ctx.tp_index[static_cast<std::size_t>(k)] = r + 1;
            ctx.prec[static_cast<std::size_t>(k)] =
                static_cast<double>(k) / static_cast<double>(r + 1);
        }
    }
    for (int o = T; o >= 1; --o)
        ctx.suffix_max[static_cast<std::size_t>(o)] =
            std::max(ctx.prec[static_cast<std::size_t>(o)],
                     ctx.suffix_max[static_cast<std::size_t>(o) + 1]);
    if (ctx.n_gt > 0)
        ctx.weight = quadrature_weights(variant, ctx.n_gt, T + 1);
    return ctx;
}

namespace {

// Weighted change of the suffix-max sum when the point at `own_ordinal`
// changes its slot maximum from old_base to new_base. Walks toward ordinal 1
// while the two running maxima still differ; value_at(k) supplies the value
// of ordinal k in the current arrangement.
template <typename ValueAt>
double weighted_walk(const ClassRankingContext& ctx, int own_ordinal, double old_base,
                     double new_base, ValueAt&& value_at) {
    double delta = ctx.weight[static_cast<std::size_t>(own_ordinal)] * (new_base - old_base);
    double om = old_base;
    double nm = new_base;
    for (int k = own_ordinal - 1; k >= 1; --k) {
        if (om == nm) break;
        const double v = value_at(k);
        om = std::max(v, om);
        nm = std::max(v, nm);
        delta += ctx.weight[static_cast<std::size_t>(k)] * (nm - om);
    }
    return delta;
}

// Nearest AP-changing crossing above rank r (0-based) for a false positive:
// each true positive it passes drops one index; the drop matters only when
// the crossed precision strictly tops everything below it in the current
// arrangement.
std::optional<StepSide> plus_step_for_fp(const ClassRankingContext& ctx, int r) {
    const double below =
        ctx.suffix_max[static_cast<std::size_t>(ctx.tp_prefix[static_cast<std::size_t>(r)]) + 1];
    double dropped_run = 0.0;
    auto orig = [&](int k) { return ctx.prec[static_cast<std::size_t>(k)]; };
    for (int j = r - 1; j >= 0; --j) {
        if (!ctx.kind[static_cast<std::size_t>(j)]) continue;
        const int o = ctx.tp_prefix[static_cast<std::size_t>(j)];
        const double p = ctx.prec[static_cast<std::size_t>(o)];
        const double threshold = std::max(dropped_run, below);
        const double dropped = static_cast<double>(o) / static_cast<double>(j + 2);
        if (p > threshold) {
            const double v = std::max(dropped, threshold);
            const double delta = weighted_walk(ctx, o, p, v, orig);
            if (delta != 0.0) {
                const double dist = ctx.det_scores[static_cast<std::size_t>(j)] -
                                    ctx.det_scores[static_cast<std::size_t>(r)];
                if (dist > 0.0) return StepSide{dist, ctx.ap + delta};
                return std::nullopt;
            }
        }
        dropped_run = std::max(dropped_run, dropped);
    }
    return std::nullopt;
}

// Nearest AP-changing crossing above rank r for a true positive: crossing
// another TP swaps quietly (the curve keeps the same point set), crossing a
// false positive lifts this window's own precision point.
std::optional<StepSide> plus_step_for_tp(const ClassRankingContext& ctx, int r) {
    int c = ctx.tp_prefix[static_cast<std::size_t>(r)];
    int i = r + 1;
    double x = ctx.suffix_max[static_cast<std::size_t>(c) + 1];
    auto orig = [&](int k) { return ctx.prec[static_cast<std::size_t>(k)]; };
    for (int j = r - 1; j >= 0; --j) {
        if (ctx.kind[static_cast<std::size_t>(j)]) {
            x = std::max(x, static_cast<double>(c) / static_cast<double>(i));
            --c;
            --i;
            continue;
        }
        const double v = static_cast<double>(c) / static_cast<double>(i);
        const double vp = static_cast<double>(c) / static_cast<double>(i - 1);
        if (vp > x) {
            const double delta = weighted_walk(ctx, c, std::max(v, x), vp, orig);
            if (delta != 0.0) {
                const double dist = ctx.det_scores[static_cast<std::size_t>(j)] -
                                    ctx.det_scores[static_cast<std::size_t>(r)];
                if (dist > 0.0) return StepSide{dist, ctx.ap + delta};
                return std::nullopt;
            }
        }
        --i;
    }
    return std::nullopt;
}

// Nearest AP-changing crossing below rank r for a true positive. True
// positives it passes move above it at one ordinal less; their shifted values
// are needed when a delta walk runs back over them.
std::optional<StepSide> minus_step_for_tp(const ClassRankingContext& ctx, int r,
                                          std::vector<double>& lifted_scratch) {
    const int c0 = ctx.tp_prefix[static_cast<std::size_t>(r)];
    int c = c0;
    int i = r + 1;
    const int n = ctx.num_dets();
    lifted_scratch.clear();
    auto value_at = [&](int k) {
        return k >= c0 ? lifted_scratch[static_cast<std::size_t>(k - c0)]
                       : ctx.prec[static_cast<std::size_t>(k)];
    };
    for (int j = r + 1; j < n; ++j) {
        if (ctx.kind[static_cast<std::size_t>(j)]) {
            const int o = ctx.tp_prefix[static_cast<std::size_t>(j)];
            lifted_scratch.push_back(static_cast<double>(o - 1) / static_cast<double>(j));
            ++c;
            ++i;
            continue;
        }
        const double v = static_cast<double>(c) / static_cast<double>(i);
        const double y = ctx.suffix_max[static_cast<std::size_t>(c) + 1];
        if (v > y) {
            const double vpp = static_cast<double>(c) / static_cast<double>(i + 1);
            const double delta = weighted_walk(ctx, c, v, std::max(vpp, y), value_at);
            if (delta != 0.0) {
                const double dist = ctx.det_scores[static_cast<std::size_t>(r)] -
                                    ctx.det_scores[static_cast<std::size_t>(j)];
                if (dist > 0.0) return StepSide{dist, ctx.ap + delta};
                return std::nullopt;
            }
        }
        ++i;
    }
    return std::nullopt;
}

// Nearest AP-changing crossing below rank r for a false positive: each true
// positive it passes rises one index; the rise matters when the lifted value
// tops everything at or below its slot.
std::optional<StepSide> minus_step_for_fp(const ClassRankingContext& ctx, int r,
                                          std::vector<double>& lifted_scratch) {
    const int n = ctx.num_dets();
    const int first_lifted = ctx.tp_prefix[static_cast<std::size_t>(r)] + 1;
    lifted_scratch.clear();
    auto value_at = [&](int k) {
        return k >= first_lifted ? lifted_scratch[static_cast<std::size_t>(k - first_lifted)]
                                 : ctx.prec[static_cast<std::size_t>(k)];
    };
    for (int j = r + 1; j < n; ++j) {
        if (!ctx.kind[static_cast<std::size_t>(j)]) continue;
        const int o = ctx.tp_prefix[static_cast<std::size_t>(j)];
        const double v = ctx.prec[static_cast<std::size_t>(o)];
        const double vp = static_cast<double>(o) / static_cast<double>(j);  // new index = j
        const double y = ctx.suffix_max[static_cast<std::size_t>(o) + 1];
        const double old_base = std::max(v, y);
        if (vp > old_base) {
            const double delta = weighted_walk(ctx, o, old_base, vp, value_at);
            if (delta != 0.0) {
                const double dist = ctx.det_scores[static_cast<std::size_t>(r)] -
                                    ctx.det_scores[static_cast<std::size_t>(j)];
                if (dist > 0.0) return StepSide{dist, ctx.ap + delta};
                return std::nullopt;
            }
        }
        lifted_scratch.push_back(vp);
    }
    return std::nullopt;
}

// AP of an arbitrary kind sequence under ctx's variant and n_gt.
double functional_ap(const ClassRankingContext& ctx, const std::vector<std::uint8_t>& kinds) {
    const int n = static_cast<int>(kinds.size());
    int T = 0;
    for (int r = 0; r < n; ++r)
        if (kinds[static_cast<std::size_t>(r)]) ++T;
    const auto w = quadrature_weights(ctx.variant, ctx.n_gt, T);
    double ap = 0.0;
    double run = 0.0;
    int k = T;
    for (int r = n - 1; r >= 0; --r) {
        if (!kinds[static_cast<std::size_t>(r)]) continue;
        run = std::max(run, static_cast<double>(k) / static_cast<double>(r + 1));
        ap += w[static_cast<std::size_t>(k)] * run;
        --k;
    }
    return ap;
}

}  // namespace

double ap_after_move(const ClassRankingContext& ctx, int from_rank, int to_rank) {
    const int n = ctx.num_dets();
    if (from_rank < 1 || from_rank > n || to_rank < 1 || to_rank > n)
        throw std::invalid_argument("ap_after_move: rank out of range");
    std::vector<std::uint8_t> kinds;
    kinds.reserve(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r)
        if (r != from_rank - 1) kinds.push_back(ctx.kind[static_cast<std::size_t>(r)]);
    kinds.insert(kinds.begin() + (to_rank - 1), ctx.kind[static_cast<std::size_t>(from_rank - 1)]);
    return functional_ap(ctx, kinds);
}

double ap_with_inserted_tp(const ClassRankingContext& ctx, int pos) {
    const int n = ctx.num_dets();
    if (pos < 1 || pos > n + 1)
        throw std::invalid_argument("ap_with_inserted_tp: position out of range");
    std::vector<std::uint8_t> kinds;
    kinds.reserve(static_cast<std::size_t>(n) + 1);
    for (int r = 0; r < n; ++r) kinds.push_back(ctx.kind[static_cast<std::size_t>(r)]);
    kinds.insert(kinds.begin() + (pos - 1), 1);
    return functional_ap(ctx, kinds);
}

std::vector<WindowSteps> find_steps(const ClassRankingContext& ctx,
                                    std::size_t* profile_counter) {
    const int n = ctx.num_dets();
    std::vector<WindowSteps> steps(static_cast<std::size_t>(n));
    std::vector<double> scratch;
    for (int r = 0; r < n; ++r) {
        if (profile_counter) ++*profile_counter;
        steps[static_cast<std::size_t>(r)].plus = ctx.kind[static_cast<std::size_t>(r)]
                                                      ? plus_step_for_tp(ctx, r)
                                                      : plus_step_for_fp(ctx, r);
    }
    for (int r = n - 1; r >= 0; --r) {
        if (profile_counter) ++*profile_counter;
        steps[static_cast<std::size_t>(r)].minus =
            ctx.kind[static_cast<std::size_t>(r)] ? minus_step_for_tp(ctx, r, scratch)
                                                  : minus_step_for_fp(ctx, r, scratch);
    }
    return steps;
}

namespace {

void keep_nearest(std::optional<StepSide>& slot, const StepSide& candidate) {
    if (!slot || candidate.delta < slot->delta) slot = candidate;
}

}  // namespace

ClassSteps nms_aware_steps(const ClassRankingContext& ctx, const ClassEval& ce,
                           const ScoreTable& scores, const Dataset& data,
                           const EvalConfig& eval_cfg,
                           std::size_t* profile_counter) {
    ClassSteps out;
    out.per_window.resize(scores.num_windows());
    const int class_id = ce.class_id;

    const std::vector<WindowSteps> det_steps = find_steps(ctx, profile_counter);

    std::vector<int> rank_of(scores.num_windows(), -1);
    for (int r = 0; r < ctx.num_dets(); ++r) {
        const auto& lab = ce.labels[static_cast<std::size_t>(r)];
        const std::size_t flat = scores.flat_window(lab.det.image, lab.det.window);
        rank_of[flat] = r;
        out.per_window[flat] = det_steps[static_cast<std::size_t>(r)];
    }

    std::map<int, double> insert_memo;  // 1-based insertion rank -> AP
    auto inserted_ap = [&](int pos) {
        const auto it = insert_memo.find(pos);
        if (it != insert_memo.end()) return it->second;
        const double v = ap_with_inserted_tp(ctx, pos);
        insert_memo.emplace(pos, v);
        return v;
    };

    for (std::size_t img = 0; img < data.images.size(); ++img) {
        const auto& outcome = ce.nms_per_image[img];
        if (outcome.suppressions.empty()) continue;
        const auto& image = data.images[img];

        // Highest suppressed score per suppressor; the pipeline output freezes
        // once the suppressor's score drops past it.
        std::map<int, double> top_suppressed;
        for (const auto& rec : outcome.suppressions) {
            const double s_w = scores.at(static_cast<int>(img), rec.suppressed, class_id);
            auto [it, inserted] = top_suppressed.emplace(rec.suppressor, s_w);
            if (!inserted && s_w > it->second) it->second = s_w;
        }

        // Does a window cover a ground truth of this class that no detection
        // matched?
        auto covers_missed_gt = [&](int window) {
            const BoundingBox& box = image.proposals[static_cast<std::size_t>(window)].box;
            for (std::size_t g = 0; g < ce.gts.size(); ++g) {
                if (ce.gts[g].image != static_cast<int>(img)) continue;
                if (ce.gt_tp_count[g] != 0) continue;
                if (iou(box, ce.gts[g].box) > eval_cfg.match_iou) return true;
            }
            return false;
        };

        for (const auto& [suppressor, b_d] : top_suppressed) {
            const std::size_t d_flat = scores.flat_window(static_cast<int>(img), suppressor);
            const double s_d = scores.at(static_cast<int>(img), suppressor, class_id);
            auto& d_steps = out.per_window[d_flat];
            if (d_steps.minus && d_steps.minus->delta >= s_d - b_d)
                d_steps.minus.reset();
        }

        for (const auto& rec : outcome.suppressions) {
            const std::size_t w_flat = scores.flat_window(static_cast<int>(img), rec.suppressed);
            const std::size_t d_flat = scores.flat_window(static_cast<int>(img), rec.suppressor);
            const double s_w = scores.at(static_cast<int>(img), rec.suppressed, class_id);
            const double s_d = scores.at(static_cast<int>(img), rec.suppressor, class_id);
            const int d_rank = rank_of[d_flat];

            if (profile_counter) ++*profile_counter;
            auto& w_steps = out.per_window[w_flat];

            // (i): inherit the suppressor's positive step; the suppressed
            // window must rise to the same crossing point.
            if (det_steps[static_cast<std::size_t>(d_rank)].plus) {
                const auto& dp = *det_steps[static_cast<std::size_t>(d_rank)].plus;
                const double dist = s_d + dp.delta - s_w;
                if (dist > 0.0) keep_nearest(w_steps.plus, StepSide{dist, dp.ap});
            }

            if (covers_missed_gt(rec.suppressed)) {
                // (ii): the window becomes a new true positive at its
                // suppressor's rank once it clears the suppressor's score.
                const double ap2 = inserted_ap(d_rank + 1);
                const double dist2 = s_d - s_w;
                if (ap2 != ctx.ap && dist2 > 0.0)
                    keep_nearest(w_steps.plus, StepSide{dist2, ap2});

                // (iii): dropping the suppressor below this window frees it;
                // the freed window enters as a TP just below the suppressor.
                if (profile_counter) ++*profile_counter;
                const double ap3 = inserted_ap(d_rank + 2);
                if (ap3 != ctx.ap && dist2 > 0.0)
                    keep_nearest(out.per_window[d_flat].minus, StepSide{dist2, ap3});
            }
        }
    }
    return out;
}

LossResult loss_and_gradient(const ScoreTable& scores, const Dataset& data,
                             const LossConfig& cfg) {
    const int K = data.num_classes;
    LossResult res;
    res.gradient = GradientField(data, 0.0);
    res.per_class_ap.resize(static_cast<std::size_t>(K));
    res.per_class_steps.resize(static_cast<std::size_t>(K));
    res.stats.profiles_per_class.assign(static_cast<std::size_t>(K), 0);
    res.stats.windows_per_class.assign(static_cast<std::size_t>(K), scores.num_windows());

    std::vector<ClassEval> evals(static_cast<std::size_t>(K));
    parallel_for_classes(K, [&](int c) {
        evals[static_cast<std::size_t>(c)] =
            evaluate_class(scores, data, c, cfg.nms_cfg, cfg.eval_cfg);
    });

    double ap_sum = 0.0;
    int engaged = 0;
    for (int c = 0; c < K; ++c) {
        res.per_class_ap[static_cast<std::size_t>(c)] = evals[static_cast<std::size_t>(c)].ap;
        if (evals[static_cast<std::size_t>(c)].ap) {
            ap_sum += *evals[static_cast<std::size_t>(c)].ap;
            ++engaged;
        }
    }
    if (engaged == 0)
        throw std::domain_error("loss_and_gradient: no class has any ground truth");
    res.map = ap_sum / static_cast<double>(engaged);

    double reg = 0.0;
    for (const double s : scores.values()) {
        const double s2 = s * s;
        reg += s2 * s2;
    }
    res.loss = -std::log(res.map + cfg.epsilon_log) + cfg.lambda_reg * reg;

    const double chain = -1.0 / (static_cast<double>(engaged) * (res.map + cfg.epsilon_log));
    auto& grad = res.gradient.values();
    const std::size_t n_windows = scores.num_windows();

    parallel_for_classes(K, [&](int c) {
        const auto& ce = evals[static_cast<std::size_t>(c)];
        if (!ce.ap) return;  // class excluded from the loss; regulariser only
        const ClassRankingContext ctx = build_ranking_context(ce, cfg.eval_cfg.ap_variant);
        std::size_t counter = 0;
        res.per_class_steps[static_cast<std::size_t>(c)] =
            nms_aware_steps(ctx, ce, scores, data, cfg.eval_cfg, &counter);
        res.stats.profiles_per_class[static_cast<std::size_t>(c)] = counter;

        const auto& steps = res.per_class_steps[static_cast<std::size_t>(c)].per_window;
        for (std::size_t f = 0; f < n_windows; ++f) {
            const auto& ws = steps[f];
            if (!ws.plus && !ws.minus) continue;
            const double s = scores.values()[f * static_cast<std::size_t>(K) +
                                             static_cast<std::size_t>(c)];
            StepProfile p;
            p.x = s;
            p.mid_value = ctx.ap;
            if (ws.plus) p.right = StepProfile::Step{s + ws.plus->delta, ws.plus->ap};
            if (ws.minus) p.left = StepProfile::Step{s - ws.minus->delta, ws.minus->ap};
            grad[f * static_cast<std::size_t>(K) + static_cast<std::size_t>(c)] =
                chain * estimate(p, cfg.estimator);
        }
    });

    const auto& k = kernels::active();
    k.cube_accum(grad.data(), scores.values().data(), grad.size(), 4.0 * cfg.lambda_reg);
    for (const double g : grad)
        if (std::fabs(g) > cfg.clip_threshold) ++res.clipped_count;
    k.clip(grad.data(), grad.size(), cfg.clip_threshold);
    return res;
}

GradientField clip_gradient(GradientField grad, double threshold) {
    if (!(threshold > 0.0))
        throw std::invalid_argument("clip_gradient: threshold must be positive");
    auto& v = grad.values();
    kernels::active().clip(v.data(), v.size(), threshold);
    return grad;
}

std::string gradient_dump_csv(const Dataset& data, const ScoreTable& scores,
                              const LossResult& result) {
    std::ostringstream os;
    os.precision(17);
    os << "image,window,class,score,delta_plus,ap_plus,delta_minus,ap_minus,grad\n";
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& im = data.images[i];
        for (std::size_t w = 0; w < im.proposals.size(); ++w) {
            for (int c = 0; c < data.num_classes; ++c) {
                const auto& steps = result.per_class_steps[static_cast<std::size_t>(c)];
                os << im.id << ',' << im.proposal_ids[w] << ',' << c << ','
                   << scores.at(static_cast<int>(i), static_cast<int>(w), c) << ',';
                const WindowSteps* ws = nullptr;
                if (!steps.per_window.empty())
                    ws = &steps.per_window[scores.flat_window(static_cast<int>(i),
                                                              static_cast<int>(w))];
                if (ws && ws->plus) os << ws->plus->delta << ',' << ws->plus->ap << ',';
                else os << ",,";
                if (ws && ws->minus) os << ws->minus->delta << ',' << ws->minus->ap << ',';
                else os << ",,";
                os << result.gradient.at(static_cast<int>(i), static_cast<int>(w), c) << '\n';
            }
        }
    }
    return os.str();
}

}  // namespace mapgrad
