#include "mapgrad/synth.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mapgrad {

namespace {

std::string padded(const char* prefix, int value) {
    std::ostringstream os;
    os << prefix;
    if (value < 10) os << "00";
    else if (value < 100) os << '0';
    os << value;
    return os.str();
}

}  // namespace

Dataset generate(const SynthConfig& cfg) {
    if (cfg.n_images < 0 || cfg.num_classes < 1 || cfg.min_gts_per_image < 0 ||
        cfg.max_gts_per_image < cfg.min_gts_per_image || cfg.jittered_per_gt < 0 ||
        cfg.background_per_image < 0 || cfg.jitter < 0.0)
        throw std::invalid_argument("generate: bad synth config");

    // Ground truths stay far enough from the border that every jittered copy
    // fits on the canvas.
    const double max_w = cfg.max_box_frac * cfg.canvas_width;
    const double max_h = cfg.max_box_frac * cfg.canvas_height;
    const double margin_x = max_w * (0.5 * (1.0 + cfg.jitter) + cfg.jitter);
    const double margin_y = max_h * (0.5 * (1.0 + cfg.jitter) + cfg.jitter);
    if (cfg.canvas_width <= 2.0 * margin_x || cfg.canvas_height <= 2.0 * margin_y)
        throw std::invalid_argument("generate: canvas too small for requested boxes");

    std::mt19937_64 rng(cfg.seed);
    auto uniform = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };

    Dataset d;
    d.num_classes = cfg.num_classes;
    d.images.reserve(static_cast<std::size_t>(cfg.n_images));

    for (int i = 0; i < cfg.n_images; ++i) {
        ImageRecord im;
        im.id = padded("img", i);
        const int image_index = i;

        std::uniform_int_distribution<int> gt_count_dist(cfg.min_gts_per_image,
                                                         cfg.max_gts_per_image);
        const int n_gts = gt_count_dist(rng);
        std::uniform_int_distribution<int> class_dist(0, cfg.num_classes - 1);

        auto add_window = [&](const BoundingBox& box) {
            ProposalWindow p;
            p.image = image_index;
            p.window = static_cast<int>(im.proposals.size());
            p.box = box;
            im.proposal_ids.push_back(padded("w", p.window));
            im.proposals.push_back(p);
        };

        for (int g = 0; g < n_gts; ++g) {
            const double w = uniform(cfg.min_box_frac, cfg.max_box_frac) * cfg.canvas_width;
            const double h = uniform(cfg.min_box_frac, cfg.max_box_frac) * cfg.canvas_height;
            const double cx = uniform(margin_x, cfg.canvas_width - margin_x);
            const double cy = uniform(margin_y, cfg.canvas_height - margin_y);
            GroundTruthObject gt;
            gt.image = image_index;
            gt.class_id = class_dist(rng);
            gt.box = {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
            im.ground_truths.push_back(gt);

            for (int j = 0; j < cfg.jittered_per_gt; ++j) {
                const double jcx = cx + uniform(-cfg.jitter, cfg.jitter) * w;
                const double jcy = cy + uniform(-cfg.jitter, cfg.jitter) * h;
                const double jw = w * (1.0 + uniform(-cfg.jitter, cfg.jitter));
                const double jh = h * (1.0 + uniform(-cfg.jitter, cfg.jitter));
                add_window({jcx - 0.5 * jw, jcy - 0.5 * jh, jcx + 0.5 * jw, jcy + 0.5 * jh});
            }
        }
        for (int b = 0; b < cfg.background_per_image; ++b) {
            const double w = uniform(cfg.min_box_frac, cfg.max_box_frac) * cfg.canvas_width;
            const double h = uniform(cfg.min_box_frac, cfg.max_box_frac) * cfg.canvas_height;
            const double x0 = uniform(0.0, cfg.canvas_width - w);
            const double y0 = uniform(0.0, cfg.canvas_height - h);
            add_window({x0, y0, x0 + w, y0 + h});
        }
        d.images.push_back(std::move(im));
    }
    return d;
}

double foreground_fraction(const Dataset& d) {
    std::size_t fg = 0;
    std::size_t total = 0;
    for (const auto& im : d.images) {
        for (const auto& p : im.proposals) {
            ++total;
            for (const auto& g : im.ground_truths) {
                if (iou(p.box, g.box) > 0.5) {
                    ++fg;
                    break;
                }
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(fg) / static_cast<double>(total);
}

}  // namespace mapgrad
