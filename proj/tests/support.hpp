#pragma once

// Shared fixtures and instance generators for the unit and acceptance suites.

#include <random>
#include <string>
#include <vector>

#include "mapgrad/data_model.hpp"
#include "mapgrad/eval.hpp"
#include "mapgrad/loss.hpp"
#include "mapgrad/oracle.hpp"
#include "mapgrad/score_table.hpp"

namespace testsup {

using namespace mapgrad;

inline BoundingBox box_at(double x0, double y0, double w = 10.0, double h = 10.0) {
    return {x0, y0, x0 + w, y0 + h};
}

/// Pairwise-disjoint unit boxes along the x axis.
inline BoundingBox disjoint_box(int i) { return box_at(30.0 * i, 0.0); }

struct RankingFixture {
    Dataset data;
    ScoreTable scores;
};

/// Single-image, single-class dataset whose post-NMS ranking realises exactly
/// the given TP/FP sequence: window i sits at disjoint_box(i); every 'T'
/// window gets its own coincident ground truth. n_gt == count of 'T'.
inline RankingFixture make_ranking_dataset(const std::string& kinds,
                                           const std::vector<double>& det_scores) {
    RankingFixture fx;
    fx.data.num_classes = 1;
    ImageRecord im;
    im.id = "img000";
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        ProposalWindow p;
        p.image = 0;
        p.window = static_cast<int>(i);
        p.box = disjoint_box(static_cast<int>(i));
        im.proposal_ids.push_back("w" + std::to_string(i));
        im.proposals.push_back(p);
        if (kinds[i] == 'T') {
            GroundTruthObject g;
            g.image = 0;
            g.class_id = 0;
            g.box = p.box;
            im.ground_truths.push_back(g);
        }
    }
    fx.data.images.push_back(std::move(im));
    fx.scores = ScoreTable(fx.data, 0.0);
    for (std::size_t i = 0; i < kinds.size(); ++i)
        fx.scores.at(0, static_cast<int>(i), 0) = det_scores[i];
    return fx;
}

/// ClassEval straight from a kind string, for ranking-only tests.
inline ClassEval make_class_eval(const std::string& kinds,
                                 const std::vector<double>& det_scores, std::size_t n_gt,
                                 ApVariant variant) {
    ClassEval ce;
    ce.class_id = 0;
    ce.n_gt = n_gt;
    ce.gt_tp_count.assign(n_gt, 0);
    int next_gt = 0;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        DetectionLabel lab;
        lab.det = {0, static_cast<int>(i), det_scores[i]};
        lab.is_tp = kinds[i] == 'T';
        if (lab.is_tp) {
            lab.matched_gt = next_gt;
            ce.gt_tp_count[static_cast<std::size_t>(next_gt)] = 1;
            ++next_gt;
        }
        ce.labels.push_back(lab);
    }
    if (n_gt > 0) {
        ce.curve = build_pr_curve(ce.labels, n_gt);
        EvalConfig cfg;
        cfg.ap_variant = variant;
        ce.ap = average_precision(ce.curve, cfg);
    }
    return ce;
}

/// Scores with a guaranteed minimum gap and no ties: distinct integers k give
/// (k + u)/m with u in (0.25, 0.75).
inline std::vector<double> gapped_scores(std::mt19937_64& rng, std::size_t n) {
    const std::size_t m = 4 * n + 8;
    std::vector<std::size_t> slots(m);
    for (std::size_t i = 0; i < m; ++i) slots[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, m - 1);
        std::swap(slots[i], slots[pick(rng)]);
    }
    std::uniform_real_distribution<double> u(0.25, 0.75);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = (static_cast<double>(slots[i]) + u(rng)) / static_cast<double>(m);
    return out;
}

struct ApInstance {
    std::vector<oracle::ScoredBox> dets;
    std::vector<oracle::GtBox> gts;
};

/// Random geometric AP instance: up to 10 ground truths over 1-2 images and
/// up to 50 detections, half of them jittered copies of ground truths.
inline ApInstance random_ap_instance(std::mt19937_64& rng) {
    ApInstance inst;
    std::uniform_int_distribution<int> img_count(1, 2);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int n_images = img_count(rng);
    std::uniform_int_distribution<int> gt_count(1, 10);
    const int n_gt = gt_count(rng);
    auto rand_box = [&](std::mt19937_64& r) {
        std::uniform_real_distribution<double> pos(0.0, 800.0);
        std::uniform_real_distribution<double> size(20.0, 200.0);
        const double x0 = pos(r), y0 = pos(r);
        return BoundingBox{x0, y0, x0 + size(r), y0 + size(r)};
    };
    for (int g = 0; g < n_gt; ++g) {
        std::uniform_int_distribution<int> img(0, n_images - 1);
        inst.gts.push_back({img(rng), rand_box(rng)});
    }
    std::uniform_int_distribution<int> det_count(0, 50);
    const int n_det = det_count(rng);
    for (int d = 0; d < n_det; ++d) {
        oracle::ScoredBox sb;
        sb.window = d;
        if (u01(rng) < 0.5 && !inst.gts.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, inst.gts.size() - 1);
            const auto& gt = inst.gts[pick(rng)];
            sb.image = gt.image;
            const double w = gt.box.width(), h = gt.box.height();
            std::uniform_real_distribution<double> j(-0.3, 0.3);
            sb.box = {gt.box.x_min + j(rng) * w, gt.box.y_min + j(rng) * h,
                      gt.box.x_max + j(rng) * w, gt.box.y_max + j(rng) * h};
        } else {
            std::uniform_int_distribution<int> img(0, n_images - 1);
            sb.image = img(rng);
            sb.box = rand_box(rng);
        }
        sb.score = u01(rng);
        inst.dets.push_back(sb);
    }
    return inst;
}

/// Fast-path AP of an ApInstance via match + curve + average_precision.
inline double fast_ap(const ApInstance& inst, const EvalConfig& cfg) {
    std::vector<DetectionRef> dets;
    for (const auto& d : inst.dets) dets.push_back({d.image, d.window, d.score});
    sort_detections(dets);
    std::vector<BoundingBox> boxes;
    for (const auto& d : dets)
        for (const auto& s : inst.dets)
            if (s.image == d.image && s.window == d.window) {
                boxes.push_back(s.box);
                break;
            }
    std::vector<ClassGroundTruth> gts;
    for (const auto& g : inst.gts) gts.push_back({g.image, g.box});
    const auto labels = match_detections(dets, boxes, gts, cfg);
    const PRCurve curve = build_pr_curve(labels, gts.size());
    return average_precision(curve, cfg);
}

/// Random overlapping window set for NMS property tests.
inline std::vector<NmsWindow> random_window_set(std::mt19937_64& rng, int max_n = 60) {
    std::uniform_int_distribution<int> count(1, max_n);
    std::uniform_real_distribution<double> pos(0.0, 300.0);
    std::uniform_real_distribution<double> size(20.0, 120.0);
    const int n = count(rng);
    std::vector<NmsWindow> out;
    const auto scores = gapped_scores(rng, static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x0 = pos(rng), y0 = pos(rng);
        out.push_back({i, {x0, y0, x0 + size(rng), y0 + size(rng)}, scores[static_cast<std::size_t>(i)]});
    }
    return out;
}

struct ChainFreeInstance {
    Dataset data;
    ScoreTable scores;
};

/// Chain-free instances: per image, clusters of one or two near-identical
/// windows (each around its own ground truth or a phantom location) plus
/// isolated singletons. No window overlaps more than one other window, so no
/// suppression chain can form, and cluster mates cover identical ground-truth
/// sets, so the transitivity approximations are exact.
inline ChainFreeInstance random_chain_free(std::mt19937_64& rng, int num_classes = 1) {
    ChainFreeInstance inst;
    inst.data.num_classes = num_classes;
    std::uniform_int_distribution<int> img_count(1, 2);
    const int n_images = img_count(rng);
    std::size_t total_windows = 0;

    for (int i = 0; i < n_images; ++i) {
        ImageRecord im;
        im.id = "img" + std::to_string(i);
        std::uniform_int_distribution<int> gt_clusters(1, 4);
        std::uniform_int_distribution<int> phantom_clusters(0, 2);
        std::uniform_int_distribution<int> singles(0, 5);
        std::uniform_int_distribution<int> cluster_size(1, 2);
        std::uniform_int_distribution<int> cls(0, num_classes - 1);
        std::uniform_real_distribution<double> shift(-3.0, 3.0);
        std::uniform_real_distribution<double> scale(0.95, 1.05);

        int slot = 0;
        auto add_window = [&](const BoundingBox& b) {
            ProposalWindow p;
            p.image = i;
            p.window = static_cast<int>(im.proposals.size());
            p.box = b;
            im.proposal_ids.push_back("w" + std::to_string(p.window));
            im.proposals.push_back(p);
            ++total_windows;
        };
        auto cluster_at = [&](double x0, bool with_gt) {
            const BoundingBox base = box_at(x0, 0.0, 100.0, 100.0);
            if (with_gt) {
                GroundTruthObject g;
                g.image = i;
                g.class_id = cls(rng);
                g.box = base;
                im.ground_truths.push_back(g);
            }
            const int members = cluster_size(rng);
            for (int m = 0; m < members; ++m) {
                const double dx = shift(rng), dy = shift(rng);
                const double sw = 100.0 * scale(rng), sh = 100.0 * scale(rng);
                add_window({x0 + dx, dy, x0 + dx + sw, dy + sh});
            }
        };
        const int n_gt_clusters = gt_clusters(rng);
        for (int c = 0; c < n_gt_clusters; ++c) cluster_at(1000.0 * slot++, true);
        const int n_phantom = phantom_clusters(rng);
        for (int c = 0; c < n_phantom; ++c) cluster_at(1000.0 * slot++, false);
        const int n_single = singles(rng);
        for (int c = 0; c < n_single; ++c)
            add_window(box_at(1000.0 * slot++, 500.0, 100.0, 100.0));
        inst.data.images.push_back(std::move(im));
    }

    inst.scores = ScoreTable(inst.data, 0.0);
    const auto scores = gapped_scores(rng, total_windows * static_cast<std::size_t>(num_classes));
    for (std::size_t v = 0; v < scores.size(); ++v) inst.scores.values()[v] = scores[v];
    return inst;
}

}  // namespace testsup
