#include "mapgrad/eval.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "mapgrad/parallel.hpp"

namespace mapgrad {

void sort_detections(std::vector<DetectionRef>& dets) {
    std::sort(dets.begin(), dets.end(), [](const DetectionRef& a, const DetectionRef& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image != b.image) return a.image < b.image;
        return a.window < b.window;
    });
}

std::vector<DetectionLabel> match_detections(const std::vector<DetectionRef>& dets,
                                             const std::vector<BoundingBox>& det_boxes,
                                             const std::vector<ClassGroundTruth>& gts,
                                             const EvalConfig& cfg) {
    std::vector<DetectionLabel> labels(dets.size());
    std::vector<int> gt_claimed(gts.size(), -1);  // rank of the TP detection per gt

    for (std::size_t r = 0; r < dets.size(); ++r) {
        labels[r].det = dets[r];
        double best_iou = cfg.match_iou;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gts[g].image != dets[r].image) continue;
            const double v = iou(det_boxes[r], gts[g].box);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            }
        }
        labels[r].matched_gt = best_gt;
        if (best_gt >= 0 && gt_claimed[best_gt] < 0) {
            gt_claimed[best_gt] = static_cast<int>(r);
            labels[r].is_tp = true;
        }
    }
    return labels;
}

PRCurve build_pr_curve(const std::vector<DetectionLabel>& labels, std::size_t n_gt) {
    if (n_gt == 0)
        throw std::domain_error("build_pr_curve: AP undefined with zero ground truths");
    PRCurve pr;
    pr.n_gt = n_gt;
    pr.points.reserve(labels.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].is_tp) ++tp;
        PRCurve::Point p;
        p.recall = static_cast<double>(tp) / static_cast<double>(n_gt);
        p.precision = static_cast<double>(tp) / static_cast<double>(i + 1);
        pr.points.push_back(p);
    }
    return pr;
}

PRCurve interpolate(const PRCurve& pr) {
    PRCurve out = pr;
    double run = 0.0;
    for (std::size_t i = out.points.size(); i-- > 0;) {
        run = std::max(run, out.points[i].precision);
        out.points[i].precision = run;
    }
    return out;
}

double average_precision(const PRCurve& pr, const EvalConfig& cfg) {
    if (pr.n_gt == 0)
        throw std::domain_error("average_precision: AP undefined with zero ground truths");
    const PRCurve interp = interpolate(pr);
    if (cfg.ap_variant == ApVariant::VOC2012_AREA) {
        double area = 0.0;
        double prev_recall = 0.0;
        for (const auto& p : interp.points) {
            area += (p.recall - prev_recall) * p.precision;
            prev_recall = p.recall;
        }
        return area;
    }
    // 11-point: mean over t in {0, 0.1, ..., 1.0} of the max precision among
    // points with recall >= t; the interpolated precision at the first such
    // point is exactly that max.
    double sum = 0.0;
    for (int j = 0; j <= 10; ++j) {
        const double t = static_cast<double>(j) / 10.0;
        double p = 0.0;
        for (std::size_t i = 0; i < interp.points.size(); ++i) {
            if (interp.points[i].recall >= t) {
                p = interp.points[i].precision;
                break;
            }
        }
        sum += p;
    }
    return sum / 11.0;
}

ClassEval evaluate_class(const ScoreTable& scores, const Dataset& data, int class_id,
                         const NmsConfig& nms_cfg, const EvalConfig& eval_cfg) {
    ClassEval ce;
    ce.class_id = class_id;
    ce.nms_per_image.resize(data.images.size());

    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& im = data.images[i];
        for (const auto& g : im.ground_truths)
            if (g.class_id == class_id)
                ce.gts.push_back({static_cast<int>(i), g.box});
    }
    ce.n_gt = ce.gts.size();
    ce.gt_tp_count.assign(ce.gts.size(), 0);

    std::vector<DetectionRef> dets;
    std::vector<NmsWindow> windows;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& im = data.images[i];
        windows.clear();
        windows.reserve(im.proposals.size());
        for (const auto& p : im.proposals)
            windows.push_back({p.window, p.box, scores.at(static_cast<int>(i), p.window, class_id)});
        ce.nms_per_image[i] = run_nms(windows, nms_cfg);
        for (int w : ce.nms_per_image[i].retained)
            dets.push_back({static_cast<int>(i), w,
                            scores.at(static_cast<int>(i), w, class_id)});
    }
    sort_detections(dets);

    std::vector<BoundingBox> det_boxes;
    det_boxes.reserve(dets.size());
    for (const auto& d : dets)
        det_boxes.push_back(data.images[static_cast<std::size_t>(d.image)]
                                .proposals[static_cast<std::size_t>(d.window)].box);

    ce.labels = match_detections(dets, det_boxes, ce.gts, eval_cfg);
    for (const auto& lab : ce.labels)
        if (lab.is_tp) ++ce.gt_tp_count[static_cast<std::size_t>(lab.matched_gt)];

    if (ce.n_gt > 0) {
        ce.curve = build_pr_curve(ce.labels, ce.n_gt);
        ce.ap = average_precision(ce.curve, eval_cfg);
    }
    return ce;
}

MeanApResult mean_ap(const ScoreTable& scores, const Dataset& data,
                     const NmsConfig& nms_cfg, const EvalConfig& eval_cfg) {
    MeanApResult res;
    res.per_class.resize(static_cast<std::size_t>(data.num_classes));
    parallel_for_classes(data.num_classes, [&](int c) {
        ClassEval ce = evaluate_class(scores, data, c, nms_cfg, eval_cfg);
        res.per_class[static_cast<std::size_t>(c)] = ce.ap;
    });
    double sum = 0.0;
    int engaged = 0;
    for (const auto& ap : res.per_class) {
        if (ap.has_value()) {
            sum += *ap;
            ++engaged;
        }
    }
    if (engaged == 0)
        throw std::domain_error("mean_ap: no class has any ground truth");
    res.map = sum / static_cast<double>(engaged);
    return res;
}

std::string pr_curve_csv(const std::vector<DetectionLabel>& labels, const PRCurve& curve) {
    std::ostringstream os;
    os.precision(17);
    os << "rank,score,kind,recall,precision,interp_precision\n";
    const PRCurve interp = interpolate(curve);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        os << (i + 1) << ',' << labels[i].det.score << ','
           << (labels[i].is_tp ? "TP" : "FP") << ','
           << curve.points[i].recall << ',' << curve.points[i].precision << ','
           << interp.points[i].precision << '\n';
    }
    return os.str();
}

}  // namespace mapgrad
