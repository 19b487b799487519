#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mapgrad/eval.hpp"
#include "mapgrad/io_json.hpp"
#include "mapgrad/loss.hpp"
#include "mapgrad/oracle.hpp"
#include "mapgrad/step_estimate.hpp"
#include "mapgrad/synth.hpp"
#include "mapgrad/trainer.hpp"

namespace {

using namespace mapgrad;

ApVariant parse_variant(const std::string& s) {
    if (s == "voc2007") return ApVariant::VOC2007_11POINT;
    if (s == "voc2012") return ApVariant::VOC2012_AREA;
    throw CLI::ValidationError("--ap-variant must be voc2007 or voc2012");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

void write_pr_csvs(const ScoreTable& scores, const Dataset& data, const NmsConfig& nms_cfg,
                   const EvalConfig& eval_cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (int c = 0; c < data.num_classes; ++c) {
        const ClassEval ce = evaluate_class(scores, data, c, nms_cfg, eval_cfg);
        if (!ce.ap) continue;
        write_text(dir + "/pr_class" + std::to_string(c) + ".csv",
                   pr_curve_csv(ce.labels, ce.curve));
    }
}

int run_gen(const SynthConfig& cfg, const std::string& out_path) {
    const Dataset d = generate(cfg);
    const auto violations = validate_dataset(d);
    if (!violations.empty()) {
        std::cerr << "generated dataset failed validation\n";
        return 1;
    }
    save_dataset_json(d, out_path);
    std::cout << std::fixed << std::setprecision(6)
              << "images " << d.images.size() << ", windows " << d.total_windows()
              << ", foreground fraction " << foreground_fraction(d) << '\n';
    return 0;
}

int run_eval(const std::string& dataset_path, const std::string& scores_path,
             const NmsConfig& nms_cfg, const EvalConfig& eval_cfg,
             const std::optional<std::string>& pr_dir) {
    const Dataset d = load_dataset_json(dataset_path);
    const auto violations = validate_dataset(d);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "invalid dataset: " << v.message << '\n';
        return 1;
    }
    const ScoreTable t = load_scores_json(scores_path, d);
    const MeanApResult res = mean_ap(t, d, nms_cfg, eval_cfg);
    std::cout << std::fixed << std::setprecision(6);
    for (int c = 0; c < d.num_classes; ++c) {
        std::cout << "class " << c << " AP ";
        if (res.per_class[static_cast<std::size_t>(c)])
            std::cout << *res.per_class[static_cast<std::size_t>(c)];
        else
            std::cout << "undefined";
        std::cout << '\n';
    }
    std::cout << "mAP " << res.map << '\n';
    if (pr_dir) write_pr_csvs(t, d, nms_cfg, eval_cfg, *pr_dir);
    return 0;
}

// Windows where the transitivity approximations can bite: a window bridging a
// non-clique overlap triple, or a suppression pair whose members match
// different ground-truth sets. These are reported but not hard-compared.
std::vector<std::uint8_t> approximation_flags(const Dataset& data, const ScoreTable& scores,
                                              int class_id, const NmsConfig& nms_cfg,
                                              const EvalConfig& eval_cfg) {
    std::vector<std::uint8_t> flagged(scores.num_windows(), 0);
    const auto offsets = data.window_offsets();
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& im = data.images[i];
        const std::size_t n = im.proposals.size();
        std::vector<std::vector<int>> neighbors(n);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                if (iou(im.proposals[a].box, im.proposals[b].box) > nms_cfg.overlap_threshold) {
                    neighbors[a].push_back(static_cast<int>(b));
                    neighbors[b].push_back(static_cast<int>(a));
                }
        auto gt_cover = [&](std::size_t w) {
            std::vector<int> cover;
            for (std::size_t g = 0; g < im.ground_truths.size(); ++g)
                if (im.ground_truths[g].class_id == class_id &&
                    iou(im.proposals[w].box, im.ground_truths[g].box) > eval_cfg.match_iou)
                    cover.push_back(static_cast<int>(g));
            return cover;
        };
        for (std::size_t w = 0; w < n; ++w) {
            // bridge of a non-clique triple
            for (std::size_t x = 0; x < neighbors[w].size() && !flagged[offsets[i] + w]; ++x)
                for (std::size_t y = x + 1; y < neighbors[w].size(); ++y) {
                    const auto& u = im.proposals[static_cast<std::size_t>(neighbors[w][x])].box;
                    const auto& v = im.proposals[static_cast<std::size_t>(neighbors[w][y])].box;
                    if (!(iou(u, v) > nms_cfg.overlap_threshold)) {
                        flagged[offsets[i] + w] = 1;
                        break;
                    }
                }
            // mismatched ground-truth coverage along overlap edges
            if (!flagged[offsets[i] + w]) {
                const auto mine = gt_cover(w);
                for (int nb : neighbors[w]) {
                    if (gt_cover(static_cast<std::size_t>(nb)) != mine) {
                        flagged[offsets[i] + w] = 1;
                        break;
                    }
                }
            }
        }
    }
    return flagged;
}

int run_gradcheck(const std::string& dataset_path, const std::string& scores_path,
                  LossConfig cfg, double tolerance, const std::optional<std::string>& dump_path) {
    const Dataset d = load_dataset_json(dataset_path);
    const auto violations = validate_dataset(d);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "invalid dataset: " << v.message << '\n';
        return 1;
    }
    const ScoreTable t = load_scores_json(scores_path, d);
    const LossResult lr = loss_and_gradient(t, d, cfg);
    if (dump_path) write_text(*dump_path, gradient_dump_csv(d, t, lr));

    const auto offsets = d.window_offsets();
    std::size_t compared = 0, mismatched = 0, skipped = 0;
    double worst = 0.0;

    for (int c = 0; c < d.num_classes; ++c) {
        if (!lr.per_class_ap[static_cast<std::size_t>(c)]) continue;
        const auto flags = approximation_flags(d, t, c, cfg.nms_cfg, cfg.eval_cfg);
        const auto& steps = lr.per_class_steps[static_cast<std::size_t>(c)].per_window;
        for (std::size_t i = 0; i < d.images.size(); ++i) {
            for (std::size_t w = 0; w < d.images[i].proposals.size(); ++w) {
                const std::size_t flat = offsets[i] + w;
                if (flags[flat]) {
                    ++skipped;
                    continue;
                }
                ++compared;
                const auto o = oracle::oracle_steps(t, d, static_cast<int>(i),
                                                    static_cast<int>(w), c,
                                                    cfg.nms_cfg, cfg.eval_cfg);
                const double s = t.at(static_cast<int>(i), static_cast<int>(w), c);
                const auto& fast = steps[flat];
                auto side_error = [&](const std::optional<StepSide>& f,
                                      const std::optional<oracle::StepSideValue>& ref,
                                      bool plus_side) {
                    if (!f && !ref) return 0.0;
                    if (!f || !ref) return 1.0;
                    const double fast_pos = plus_side ? s + f->delta : s - f->delta;
                    return std::max(std::fabs(fast_pos - ref->position),
                                    std::fabs(f->ap - ref->ap));
                };
                const double err = std::max(side_error(fast.plus, o.right, true),
                                            side_error(fast.minus, o.left, false));
                worst = std::max(worst, err);
                if (err > tolerance) {
                    ++mismatched;
                    std::cerr << "mismatch: image " << d.images[i].id << " window "
                              << d.images[i].proposal_ids[w] << " class " << c
                              << " err " << err << '\n';
                }
            }
        }
    }
    std::cout << "compared " << compared << " windows, skipped " << skipped
              << " (approximation cases), mismatches " << mismatched
              << ", worst error " << worst << '\n';
    return mismatched == 0 ? 0 : 2;
}

int run_train(const std::string& dataset_path, const TrainConfig& cfg,
              const std::string& scores_out, const std::string& history_out,
              const std::optional<std::string>& pr_dir) {
    const Dataset d = load_dataset_json(dataset_path);
    const auto violations = validate_dataset(d);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "invalid dataset: " << v.message << '\n';
        return 1;
    }
    const TrainResult res = train(d, cfg);
    save_scores_json(res.scores, d, scores_out);
    write_text(history_out, history_csv(res.history));
    if (pr_dir) write_pr_csvs(res.scores, d, cfg.loss_cfg.nms_cfg, cfg.loss_cfg.eval_cfg, *pr_dir);
    std::cout << std::fixed << std::setprecision(6);
    if (!res.health_ok) {
        std::cout << "training health check failed after " << res.history.rows.size()
                  << " iterations\n";
        return 0;
    }
    std::cout << "final mAP " << res.final_full_map << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mAP-after-NMS training loss toolkit"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    SynthConfig synth_cfg;
    std::string gen_out;
    gen->add_option("--out", gen_out, "output dataset JSON")->required();
    gen->add_option("--seed", synth_cfg.seed, "rng seed");
    gen->add_option("--images", synth_cfg.n_images, "image count");
    gen->add_option("--classes", synth_cfg.num_classes, "class count");
    gen->add_option("--min-gts", synth_cfg.min_gts_per_image, "min ground truths per image");
    gen->add_option("--max-gts", synth_cfg.max_gts_per_image, "max ground truths per image");
    gen->add_option("--jitter-per-gt", synth_cfg.jittered_per_gt, "jittered proposals per gt");
    gen->add_option("--background", synth_cfg.background_per_image, "background boxes per image");
    gen->add_option("--canvas-w", synth_cfg.canvas_width, "canvas width");
    gen->add_option("--canvas-h", synth_cfg.canvas_height, "canvas height");
    gen->add_option("--jitter", synth_cfg.jitter, "jitter magnitude");

    // shared eval-ish flags
    std::string dataset_path, scores_path;
    std::string variant_name = "voc2012";
    NmsConfig nms_cfg;
    EvalConfig eval_cfg;

    auto add_pipeline_flags = [&](CLI::App* cmd) {
        cmd->add_option("--dataset", dataset_path, "dataset JSON")->required();
        cmd->add_option("--ap-variant", variant_name, "voc2007|voc2012");
        cmd->add_option("--nms-threshold", nms_cfg.overlap_threshold, "NMS IoU threshold");
        cmd->add_option("--match-iou", eval_cfg.match_iou, "matching IoU threshold");
    };

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate scores against a dataset");
    add_pipeline_flags(eval_cmd);
    eval_cmd->add_option("--scores", scores_path, "scores JSON")->required();
    std::string pr_dir;
    eval_cmd->add_option("--pr-out", pr_dir, "directory for per-class PR CSVs");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "compare fast steps against the oracle");
    add_pipeline_flags(gc);
    gc->add_option("--scores", scores_path, "scores JSON")->required();
    double tolerance = 1e-9;
    std::string estimator_name = "mee";
    double flat_delta_min = 0.1;
    std::string dump_csv;
    gc->add_option("--tolerance", tolerance, "mismatch tolerance");
    gc->add_option("--estimator", estimator_name, "sde|mee");
    gc->add_option("--flat-delta-min", flat_delta_min, "flat-region delta lower bound");
    gc->add_option("--dump-csv", dump_csv, "write a gradient dump CSV");

    // train
    auto* tr = app.add_subcommand("train", "optimise a score table by SGD");
    add_pipeline_flags(tr);
    TrainConfig train_cfg;
    std::string scores_out = "scores_final.json";
    std::string history_out = "history.csv";
    std::string train_pr_dir;
    tr->add_option("--out-scores", scores_out, "final scores JSON");
    tr->add_option("--history", history_out, "history CSV");
    tr->add_option("--pr-out", train_pr_dir, "directory for final PR CSVs");
    tr->add_option("--iterations", train_cfg.iterations, "SGD iterations");
    tr->add_option("--lr", train_cfg.learning_rate, "learning rate");
    tr->add_option("--momentum", train_cfg.momentum, "momentum");
    tr->add_option("--batch-images", train_cfg.minibatch_images, "images per minibatch");
    tr->add_option("--fg-fraction", train_cfg.fg_fraction, "foreground window fraction");
    tr->add_option("--seed", train_cfg.seed, "rng seed");
    tr->add_option("--estimator", estimator_name, "sde|mee");
    tr->add_option("--flat-delta-min", flat_delta_min, "flat-region delta lower bound");
    tr->add_option("--lambda", train_cfg.loss_cfg.lambda_reg, "L4 regulariser weight");
    tr->add_option("--epsilon", train_cfg.loss_cfg.epsilon_log, "log-space epsilon");
    tr->add_option("--clip", train_cfg.loss_cfg.clip_threshold, "gradient clip threshold");
    tr->add_option("--full-eval-every", train_cfg.full_eval_every,
                   "iterations between full-dataset mAP evaluations");

    CLI11_PARSE(app, argc, argv);

    try {
        eval_cfg.ap_variant = parse_variant(variant_name);
        EstimatorConfig est;
        est.kind = estimator_name == "sde" ? EstimatorKind::SDE : EstimatorKind::MEE;
        est.flat_region_delta_min = flat_delta_min;

        if (gen->parsed()) return run_gen(synth_cfg, gen_out);
        if (eval_cmd->parsed())
            return run_eval(dataset_path, scores_path, nms_cfg, eval_cfg,
                            pr_dir.empty() ? std::nullopt : std::optional<std::string>(pr_dir));
        if (gc->parsed()) {
            LossConfig cfg;
            cfg.estimator = est;
            cfg.nms_cfg = nms_cfg;
            cfg.eval_cfg = eval_cfg;
            return run_gradcheck(dataset_path, scores_path, cfg, tolerance,
                                 dump_csv.empty() ? std::nullopt
                                                  : std::optional<std::string>(dump_csv));
        }
        if (tr->parsed()) {
            train_cfg.loss_cfg.estimator = est;
            train_cfg.loss_cfg.nms_cfg = nms_cfg;
            train_cfg.loss_cfg.eval_cfg = eval_cfg;
            return run_train(dataset_path, train_cfg, scores_out, history_out,
                             train_pr_dir.empty() ? std::nullopt
                                                  : std::optional<std::string>(train_pr_dir));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
