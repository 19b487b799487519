#include <doctest.h>

#include <cmath>
#include <random>

#include "mapgrad/loss.hpp"
#include "support.hpp"

using namespace mapgrad;
using testsup::make_class_eval;

namespace {

ClassRankingContext tft_context(ApVariant v) {
    return build_ranking_context(make_class_eval("TFT", {0.9, 0.8, 0.7}, 2, v), v);
}

// Brute-force nearest step: try every crossing position via ap_after_move and
// take the first AP-changing one.
WindowSteps brute_force_steps(const ClassRankingContext& ctx, int rank0) {
    WindowSteps out;
    const int n = ctx.num_dets();
    const int from = rank0 + 1;
    for (int to = from - 1; to >= 1; --to) {
        const double ap = ap_after_move(ctx, from, to);
        if (ap != ctx.ap) {
            const double dist = ctx.det_scores[static_cast<std::size_t>(to - 1)] -
                                ctx.det_scores[static_cast<std::size_t>(rank0)];
            out.plus = StepSide{dist, ap};
            break;
        }
    }
    for (int to = from + 1; to <= n; ++to) {
        const double ap = ap_after_move(ctx, from, to);
        if (ap != ctx.ap) {
            const double dist = ctx.det_scores[static_cast<std::size_t>(rank0)] -
                                ctx.det_scores[static_cast<std::size_t>(to - 1)];
            out.minus = StepSide{dist, ap};
            break;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("ranking context arrays for the worked fixture") {
    const auto ctx = tft_context(ApVariant::VOC2012_AREA);
    CHECK(ctx.num_dets() == 3);
    CHECK(ctx.num_tp() == 2);
    CHECK(ctx.prec[1] == 1.0);
    CHECK(ctx.prec[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(ctx.tp_index[1] == 1);
    CHECK(ctx.tp_index[2] == 3);
    CHECK(ctx.suffix_max[1] == 1.0);
    CHECK(ctx.suffix_max[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(ctx.suffix_max[3] == 0.0);
    CHECK(ctx.ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    // weight-based functional reproduces the AP
    double ap = 0.0;
    for (int k = 1; k <= 2; ++k)
        ap += ctx.weight[static_cast<std::size_t>(k)] * ctx.suffix_max[static_cast<std::size_t>(k)];
    CHECK(ap == doctest::Approx(ctx.ap).epsilon(1e-12));
}

TEST_CASE("ap_after_move worked values") {
    const auto ctx = tft_context(ApVariant::VOC2012_AREA);
    CHECK(ap_after_move(ctx, 2, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(ap_after_move(ctx, 2, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(ap_after_move(ctx, 2, 3) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("find_steps on the worked fixture, area variant") {
    const auto ctx = tft_context(ApVariant::VOC2012_AREA);
    const auto steps = find_steps(ctx);

    // the FP at rank 2
    REQUIRE(steps[1].plus.has_value());
    CHECK(steps[1].plus->delta == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(steps[1].plus->ap == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    REQUIRE(steps[1].minus.has_value());
    CHECK(steps[1].minus->delta == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(steps[1].minus->ap == doctest::Approx(1.0).epsilon(1e-12));

    // top TP: only a downward step
    CHECK(!steps[0].plus.has_value());
    REQUIRE(steps[0].minus.has_value());
    CHECK(steps[0].minus->delta == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(steps[0].minus->ap == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    // bottom TP: only an upward step
    REQUIRE(steps[2].plus.has_value());
    CHECK(steps[2].plus->delta == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(steps[2].plus->ap == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!steps[2].minus.has_value());
}

TEST_CASE("find_steps on the worked fixture, 11-point variant") {
    const auto ctx = tft_context(ApVariant::VOC2007_11POINT);
    CHECK(ctx.ap == doctest::Approx(28.0 / 33.0).epsilon(1e-12));
    const auto steps = find_steps(ctx);
    REQUIRE(steps[1].plus.has_value());
    CHECK(steps[1].plus->ap == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    REQUIRE(steps[1].minus.has_value());
    CHECK(steps[1].minus->ap == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single true positive with one ground truth has no steps") {
    const auto ctx = build_ranking_context(
        make_class_eval("T", {0.5}, 1, ApVariant::VOC2012_AREA), ApVariant::VOC2012_AREA);
    const auto steps = find_steps(ctx);
    CHECK(!steps[0].plus.has_value());
    CHECK(!steps[0].minus.has_value());
}

TEST_CASE("an FP crossing only FPs has no step") {
    const auto ctx = build_ranking_context(
        make_class_eval("FFT", {0.9, 0.8, 0.7}, 1, ApVariant::VOC2012_AREA),
        ApVariant::VOC2012_AREA);
    const auto steps = find_steps(ctx);
    CHECK(!steps[1].plus.has_value());  // only an FP above
}

TEST_CASE("dominated TP crossings are skipped") {
    // The FP at rank 4 crossing the TP at rank 3 leaves the filled-in curve
    // unchanged (a later TP dominates it); its true step crosses the top TP.
    const auto ctx = build_ranking_context(
        make_class_eval("TFTFTTT", {0.9, 0.8, 0.7, 0.6, 0.5, 0.45, 0.4}, 7,
                        ApVariant::VOC2012_AREA),
        ApVariant::VOC2012_AREA);
    const auto steps = find_steps(ctx);
    REQUIRE(steps[3].plus.has_value());
    CHECK(steps[3].plus->delta == doctest::Approx(0.3).epsilon(1e-12));  // up to 0.9
    CHECK(steps[3].plus->ap < ctx.ap);
    // and the brute force agrees
    const auto bf = brute_force_steps(ctx, 3);
    REQUIRE(bf.plus.has_value());
    CHECK(bf.plus->delta == doctest::Approx(steps[3].plus->delta).epsilon(1e-12));
    CHECK(bf.plus->ap == doctest::Approx(steps[3].plus->ap).epsilon(1e-12));
}

TEST_CASE("find_steps matches the move oracle on random rankings") {
    std::mt19937_64 rng(47);
    std::uniform_int_distribution<int> len(1, 14);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> extra(0, 3);
    for (int trial = 0; trial < 400; ++trial) {
        const int n = len(rng);
        std::string kinds;
        for (int i = 0; i < n; ++i) kinds.push_back(u01(rng) < 0.45 ? 'T' : 'F');
        const int t = static_cast<int>(std::count(kinds.begin(), kinds.end(), 'T'));
        const std::size_t n_gt = static_cast<std::size_t>(std::max(t, 1) + extra(rng));
        std::vector<double> scores(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            scores[static_cast<std::size_t>(i)] = 1.0 - 0.01 * static_cast<double>(i);
        const ApVariant v =
            trial % 2 == 0 ? ApVariant::VOC2012_AREA : ApVariant::VOC2007_11POINT;
        const auto ctx = build_ranking_context(make_class_eval(kinds, scores, n_gt, v), v);
        const auto steps = find_steps(ctx);
        for (int r = 0; r < n; ++r) {
            const auto bf = brute_force_steps(ctx, r);
            const auto& fast = steps[static_cast<std::size_t>(r)];
            REQUIRE(fast.plus.has_value() == bf.plus.has_value());
            REQUIRE(fast.minus.has_value() == bf.minus.has_value());
            if (fast.plus) {
                CHECK(fast.plus->delta == doctest::Approx(bf.plus->delta).epsilon(1e-12));
                CHECK(fast.plus->ap == doctest::Approx(bf.plus->ap).epsilon(1e-12));
            }
            if (fast.minus) {
                CHECK(fast.minus->delta == doctest::Approx(bf.minus->delta).epsilon(1e-12));
                CHECK(fast.minus->ap == doctest::Approx(bf.minus->ap).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("suppressed windows inherit their suppressor's positive step") {
    // far FP at 0.9, then a matched pair: d1 (TP, 0.8) suppressing d2 (0.6)
    Dataset d;
    d.num_classes = 1;
    ImageRecord im;
    im.id = "img0";
    auto add = [&](const BoundingBox& b) {
        ProposalWindow p;
        p.image = 0;
        p.window = static_cast<int>(im.proposals.size());
        p.box = b;
        im.proposal_ids.push_back("w" + std::to_string(p.window));
        im.proposals.push_back(p);
    };
    add(testsup::box_at(500, 0));                 // w0: FP far away
    add(testsup::box_at(0, 0, 100, 100));         // w1: d1 on the gt
    add(testsup::box_at(2, 2, 100, 100));         // w2: d2, overlapping both
    im.ground_truths.push_back({0, 0, testsup::box_at(0, 0, 100, 100)});
    d.images.push_back(im);

    ScoreTable t(d, 0.0);
    t.at(0, 0, 0) = 0.9;
    t.at(0, 1, 0) = 0.8;
    t.at(0, 2, 0) = 0.6;

    LossConfig cfg;
    const auto ce = evaluate_class(t, d, 0, cfg.nms_cfg, cfg.eval_cfg);
    REQUIRE(ce.labels.size() == 2);  // d2 suppressed
    const auto ctx = build_ranking_context(ce, cfg.eval_cfg.ap_variant);
    CHECK(ctx.ap == doctest::Approx(0.5).epsilon(1e-12));

    const auto cs = nms_aware_steps(ctx, ce, t, d, cfg.eval_cfg);
    const auto& d1 = cs.per_window[1];
    REQUIRE(d1.plus.has_value());
    CHECK(d1.plus->delta == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(d1.plus->ap == doctest::Approx(1.0).epsilon(1e-12));

    const auto& d2 = cs.per_window[2];
    REQUIRE(d2.plus.has_value());
    CHECK(d2.plus->delta == doctest::Approx(0.3).epsilon(1e-12));  // 0.8 + 0.1 - 0.6
    CHECK(d2.plus->ap == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!d2.minus.has_value());
}

TEST_CASE("missed ground truth rescue steps") {
    // d (FP, 0.9) suppresses w (0.5), the only window covering gt g;
    // a TP t (0.3) covers a second gt in another image.
    ImageRecord im0;
    im0.id = "img0";
    ProposalWindow p0{0, 0, testsup::box_at(50, 0, 100, 100)};  // d: beside g
    ProposalWindow p1{0, 1, testsup::box_at(5, 0, 100, 100)};   // w: on g, overlaps d
    im0.proposal_ids = {"d", "w"};
    im0.proposals = {p0, p1};
    im0.ground_truths.push_back({0, 0, testsup::box_at(0, 0, 100, 100)});  // g
    Dataset dd;
    dd.num_classes = 1;
    dd.images.push_back(im0);
    ImageRecord im1;
    im1.id = "img1";
    im1.proposals = {ProposalWindow{1, 0, testsup::box_at(0, 0, 100, 100)}};
    im1.proposal_ids = {"t"};
    im1.ground_truths.push_back({1, 0, testsup::box_at(0, 0, 100, 100)});  // g2
    dd.images.push_back(im1);

    REQUIRE(iou(p0.box, p1.box) > 0.3);
    REQUIRE(iou(p1.box, dd.images[0].ground_truths[0].box) > 0.5);
    REQUIRE(iou(p0.box, dd.images[0].ground_truths[0].box) <= 0.5);

    ScoreTable t(dd, 0.0);
    t.at(0, 0, 0) = 0.9;  // d
    t.at(0, 1, 0) = 0.5;  // w
    t.at(1, 0, 0) = 0.3;  // t

    LossConfig cfg;
    const auto ce = evaluate_class(t, dd, 0, cfg.nms_cfg, cfg.eval_cfg);
    REQUIRE(ce.labels.size() == 2);  // d and t
    const auto ctx = build_ranking_context(ce, cfg.eval_cfg.ap_variant);
    CHECK(ctx.ap == doctest::Approx(0.25).epsilon(1e-12));

    const auto cs = nms_aware_steps(ctx, ce, t, dd, cfg.eval_cfg);

    // w gains the rescue step at its suppressor's score
    const auto& w_steps = cs.per_window[1];
    REQUIRE(w_steps.plus.has_value());
    CHECK(w_steps.plus->delta == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(w_steps.plus->ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(w_steps.plus->ap > ctx.ap);

    // d's intrinsic downward step (crossing t at 0.3) is frozen out by w at
    // 0.5; the rescue contribution replaces it.
    const auto& d_steps = cs.per_window[0];
    REQUIRE(d_steps.minus.has_value());
    CHECK(d_steps.minus->delta == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(d_steps.minus->ap == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(d_steps.minus->ap > ctx.ap);
}

TEST_CASE("clip_gradient saturates") {
    auto fx = testsup::make_ranking_dataset("TF", {0.9, 0.8});
    GradientField g(fx.data, 0.0);
    g.at(0, 0, 0) = 10.0;
    g.at(0, 1, 0) = -3.5;
    const GradientField c1 = clip_gradient(g, 1.0);
    CHECK(c1.at(0, 0, 0) == 1.0);
    CHECK(c1.at(0, 1, 0) == -1.0);
    const GradientField c2 = clip_gradient(g, 2.0);
    CHECK(c2.at(0, 1, 0) == -2.0);
    GradientField small(fx.data, 0.25);
    const GradientField c3 = clip_gradient(small, 1.0);
    CHECK(c3.at(0, 0, 0) == 0.25);
    CHECK_THROWS_AS(clip_gradient(g, 0.0), std::invalid_argument);
}

TEST_CASE("loss_and_gradient on the worked fixture") {
    auto fx = testsup::make_ranking_dataset("TFT", {0.9, 0.8, 0.7});
    LossConfig cfg;
    cfg.lambda_reg = 0.0;
    cfg.estimator.kind = EstimatorKind::SDE;
    cfg.clip_threshold = 100.0;

    const LossResult res = loss_and_gradient(fx.scores, fx.data, cfg);
    CHECK(res.map == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(res.map == mean_ap(fx.scores, fx.data, cfg.nms_cfg, cfg.eval_cfg).map);
    CHECK(res.loss == doctest::Approx(-std::log(5.0 / 6.0 + 0.01)).epsilon(1e-12));

    // FP window: estimator -5/3, chain -1/(1*(5/6+0.01))
    const double chain = -1.0 / (5.0 / 6.0 + 0.01);
    CHECK(res.gradient.at(0, 1, 0) == doctest::Approx(chain * (-5.0 / 3.0)).epsilon(1e-12));
    CHECK(res.gradient.at(0, 1, 0) > 0.0);  // pushing the FP down reduces the loss

    // profile-computation budget
    CHECK(res.stats.profiles_per_class[0] <= 3 * fx.data.total_windows());
}

TEST_CASE("zero scores leave no regulariser gradient") {
    auto fx = testsup::make_ranking_dataset("TFT", {0.9, 0.8, 0.7});
    for (auto& s : fx.scores.values()) s = 0.0;
    LossConfig with_reg;
    with_reg.lambda_reg = 10.0;
    LossConfig no_reg = with_reg;
    no_reg.lambda_reg = 0.0;
    const LossResult a = loss_and_gradient(fx.scores, fx.data, with_reg);
    const LossResult b = loss_and_gradient(fx.scores, fx.data, no_reg);
    for (std::size_t i = 0; i < a.gradient.size(); ++i)
        CHECK(a.gradient.values()[i] == b.gradient.values()[i]);
}

TEST_CASE("perfect ranking with no false positives has only regulariser gradient") {
    auto fx = testsup::make_ranking_dataset("TTT", {0.9, 0.8, 0.7});
    LossConfig cfg;
    cfg.lambda_reg = 1e-3;
    const LossResult res = loss_and_gradient(fx.scores, fx.data, cfg);
    CHECK(res.map == 1.0);
    for (std::size_t i = 0; i < fx.data.total_windows(); ++i) {
        const double s = fx.scores.values()[i];
        CHECK(res.gradient.values()[i] ==
              doctest::Approx(4.0 * cfg.lambda_reg * s * s * s).epsilon(1e-12));
    }
}

TEST_CASE("gradient dump csv shape") {
    auto fx = testsup::make_ranking_dataset("TF", {0.9, 0.8});
    const LossResult res = loss_and_gradient(fx.scores, fx.data, LossConfig{});
    const std::string csv = gradient_dump_csv(fx.data, fx.scores, res);
    CHECK(csv.find("image,window,class,score,delta_plus,ap_plus,delta_minus,ap_minus,grad\n") == 0);
    CHECK(csv.find("img000,w0,0,") != std::string::npos);
}
