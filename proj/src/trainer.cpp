#include "mapgrad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mapgrad/eval.hpp"
#include "mapgrad/kernels.hpp"

namespace mapgrad {

std::vector<std::uint8_t> foreground_flags(const Dataset& d) {
    std::vector<std::uint8_t> flags(d.total_windows(), 0);
    const auto offsets = d.window_offsets();
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        const auto& im = d.images[i];
        for (std::size_t w = 0; w < im.proposals.size(); ++w) {
            for (const auto& g : im.ground_truths) {
                if (iou(im.proposals[w].box, g.box) > 0.5) {
                    flags[offsets[i] + w] = 1;
                    break;
                }
            }
        }
    }
    return flags;
}

Minibatch sample_minibatch(const Dataset& d, const std::vector<std::uint8_t>& is_foreground,
                           const TrainConfig& cfg, std::mt19937_64& rng) {
    if (d.images.empty())
        throw std::invalid_argument("sample_minibatch: empty dataset");
    const auto offsets = d.window_offsets();

    // Partial Fisher-Yates for the image subset.
    std::vector<int> image_order(d.images.size());
    std::iota(image_order.begin(), image_order.end(), 0);
    const std::size_t n_pick =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.minibatch_images, 1)),
                              d.images.size());
    for (std::size_t i = 0; i < n_pick; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, image_order.size() - 1);
        std::swap(image_order[i], image_order[pick(rng)]);
    }
    std::vector<int> chosen(image_order.begin(),
                            image_order.begin() + static_cast<std::ptrdiff_t>(n_pick));
    std::sort(chosen.begin(), chosen.end());

    struct Ref {
        int image;
        int window;
    };
    std::vector<Ref> fg, bg;
    for (int img : chosen) {
        const auto& im = d.images[static_cast<std::size_t>(img)];
        for (std::size_t w = 0; w < im.proposals.size(); ++w) {
            const bool f = is_foreground[offsets[static_cast<std::size_t>(img)] + w] != 0;
            (f ? fg : bg).push_back({img, static_cast<int>(w)});
        }
    }

    // Keep all foreground, then as many background windows as the target
    // fraction allows (best effort when the supply runs short).
    std::size_t n_bg = bg.size();
    if (cfg.fg_fraction >= 1.0) {
        n_bg = 0;
    } else if (cfg.fg_fraction > 0.0) {
        const double want =
            static_cast<double>(fg.size()) * (1.0 - cfg.fg_fraction) / cfg.fg_fraction;
        n_bg = std::min<std::size_t>(bg.size(),
                                     static_cast<std::size_t>(std::llround(want)));
        if (fg.empty()) n_bg = bg.size();
    }
    for (std::size_t i = 0; i < n_bg && i < bg.size(); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, bg.size() - 1);
        std::swap(bg[i], bg[pick(rng)]);
    }
    bg.resize(n_bg);
    if (cfg.fg_fraction <= 0.0) fg.clear();

    std::vector<Ref> keep = fg;
    keep.insert(keep.end(), bg.begin(), bg.end());
    std::sort(keep.begin(), keep.end(), [](const Ref& a, const Ref& b) {
        if (a.image != b.image) return a.image < b.image;
        return a.window < b.window;
    });

    Minibatch mb;
    mb.subset.num_classes = d.num_classes;
    std::size_t cursor = 0;
    for (int img : chosen) {
        const auto& im = d.images[static_cast<std::size_t>(img)];
        ImageRecord sub;
        sub.id = im.id;
        const int sub_index = static_cast<int>(mb.subset.images.size());
        for (const auto& g : im.ground_truths) {
            GroundTruthObject gt = g;
            gt.image = sub_index;
            sub.ground_truths.push_back(gt);
        }
        while (cursor < keep.size() && keep[cursor].image == img) {
            const auto& src = im.proposals[static_cast<std::size_t>(keep[cursor].window)];
            ProposalWindow p;
            p.image = sub_index;
            p.window = static_cast<int>(sub.proposals.size());
            p.box = src.box;
            sub.proposal_ids.push_back(im.proposal_ids[static_cast<std::size_t>(keep[cursor].window)]);
            sub.proposals.push_back(p);
            mb.parent_flat.push_back(offsets[static_cast<std::size_t>(img)] +
                                     static_cast<std::size_t>(keep[cursor].window));
            ++cursor;
        }
        mb.subset.images.push_back(std::move(sub));
    }
    return mb;
}

void sgd_step(ScoreTable& params, const GradientField& grad, ScoreTable& velocity,
              double learning_rate, double momentum) {
    if (!params.same_layout(grad) || !params.same_layout(velocity))
        throw std::invalid_argument("sgd_step: mismatched table layouts");
    auto& s = params.values();
    auto& v = velocity.values();
    const auto& g = grad.values();
    for (std::size_t i = 0; i < s.size(); ++i) {
        v[i] = momentum * v[i] - learning_rate * g[i];
        s[i] += v[i];
    }
}

TrainResult train(const Dataset& d, const TrainConfig& cfg) {
    TrainResult res;
    res.scores = ScoreTable(d, 0.0);
    ScoreTable velocity(d, 0.0);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> init(-0.01, 0.01);
    for (auto& s : res.scores.values()) s = init(rng);

    const auto fg = foreground_flags(d);
    const int K = d.num_classes;
    const auto& kset = kernels::active();

    for (int it = 1; it <= cfg.iterations; ++it) {
        const Minibatch mb = sample_minibatch(d, fg, cfg, rng);

        ScoreTable sub_scores(mb.subset, 0.0);
        for (std::size_t f = 0; f < mb.parent_flat.size(); ++f)
            for (int c = 0; c < K; ++c)
                sub_scores.values()[f * static_cast<std::size_t>(K) + static_cast<std::size_t>(c)] =
                    res.scores.values()[mb.parent_flat[f] * static_cast<std::size_t>(K) +
                                        static_cast<std::size_t>(c)];

        const LossResult lr = loss_and_gradient(sub_scores, mb.subset, cfg.loss_cfg);

        GradientField master_grad(d, 0.0);
        for (std::size_t f = 0; f < mb.parent_flat.size(); ++f)
            for (int c = 0; c < K; ++c)
                master_grad.values()[mb.parent_flat[f] * static_cast<std::size_t>(K) +
                                     static_cast<std::size_t>(c)] =
                    lr.gradient.values()[f * static_cast<std::size_t>(K) +
                                         static_cast<std::size_t>(c)];

        sgd_step(res.scores, master_grad, velocity, cfg.learning_rate, cfg.momentum);

        TrainHistoryRow row;
        row.iteration = it;
        row.loss = lr.loss;
        row.batch_map = lr.map;
        double norm2 = 0.0;
        for (const double g : lr.gradient.values()) norm2 += g * g;
        row.grad_norm = std::sqrt(norm2);
        row.clipped_fraction =
            lr.gradient.size() == 0
                ? 0.0
                : static_cast<double>(lr.clipped_count) / static_cast<double>(lr.gradient.size());

        const double score_mag = kset.max_abs(res.scores.values().data(), res.scores.size());
        if (!std::isfinite(lr.loss) || score_mag > 1e6) {
            res.health_ok = false;
            res.history.rows.push_back(row);
            break;
        }

        if (cfg.full_eval_every > 0 &&
            (it % cfg.full_eval_every == 0 || it == cfg.iterations)) {
            row.full_map =
                mean_ap(res.scores, d, cfg.loss_cfg.nms_cfg, cfg.loss_cfg.eval_cfg).map;
        }
        res.history.rows.push_back(row);
    }

    if (res.health_ok)
        res.final_full_map =
            mean_ap(res.scores, d, cfg.loss_cfg.nms_cfg, cfg.loss_cfg.eval_cfg).map;
    return res;
}

std::string history_csv(const TrainHistory& h) {
    std::ostringstream os;
    os.precision(17);
    os << "iteration,loss,batch_map,full_map,grad_norm,clipped_fraction\n";
    for (const auto& r : h.rows) {
        os << r.iteration << ',' << r.loss << ',' << r.batch_map << ',';
        if (r.full_map) os << *r.full_map;
        os << ',' << r.grad_norm << ',' << r.clipped_fraction << '\n';
    }
    return os.str();
}

}  // namespace mapgrad
