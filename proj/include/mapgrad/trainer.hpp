#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mapgrad/data_model.hpp"
#include "mapgrad/loss.hpp"
#include "mapgrad/score_table.hpp"

namespace mapgrad {

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    int iterations = 500;
    int minibatch_images = 8;
    double fg_fraction = 0.05;
    int full_eval_every = 25;  // periodic full-dataset mAP; final always sampled
    LossConfig loss_cfg;
    std::uint64_t seed = 42;
};

struct TrainHistoryRow {
    int iteration = 0;
    double loss = 0.0;
    double batch_map = 0.0;
    std::optional<double> full_map;
    double grad_norm = 0.0;
    double clipped_fraction = 0.0;
};

struct TrainHistory {
    std::vector<TrainHistoryRow> rows;
};

/// Minibatch: a sub-dataset (chosen images with all their ground truths and a
/// window subset) plus the mapping back to the parent table's flat indexes.
struct Minibatch {
    Dataset subset;
    std::vector<std::size_t> parent_flat;  // per subset flat window index
};

/// Selects cfg.minibatch_images images, keeps all their ground truths, and
/// subsamples background windows so foreground windows (IoU > 0.5 with any
/// ground truth) land as close as achievable to cfg.fg_fraction of the kept
/// windows. Deterministic in the rng state.
Minibatch sample_minibatch(const Dataset& d, const std::vector<std::uint8_t>& is_foreground,
                           const TrainConfig& cfg, std::mt19937_64& rng);

/// Per-window foreground flags by flat index (IoU > 0.5 with any ground truth).
std::vector<std::uint8_t> foreground_flags(const Dataset& d);

/// v' = momentum * v - lr * g; s' = s + v'. Tables must share one layout;
/// a zero gradient entry leaves only the velocity decay.
void sgd_step(ScoreTable& params, const GradientField& grad, ScoreTable& velocity,
              double learning_rate, double momentum);

struct TrainResult {
    ScoreTable scores;
    TrainHistory history;
    bool health_ok = true;  // false once loss goes non-finite or |s| > 1e6
    double final_full_map = 0.0;
};

/// SGD with momentum over the raw score table: sample, loss_and_gradient
/// (clipping inside), sgd_step. Deterministic under the seed. Stops early
/// when the health check fails.
TrainResult train(const Dataset& d, const TrainConfig& cfg);

/// History CSV: iteration,loss,batch_map,full_map,grad_norm,clipped_fraction
/// with full_map blank when not sampled.
std::string history_csv(const TrainHistory& h);

}  // namespace mapgrad
