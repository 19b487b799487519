#pragma once

#include <cstdint>

#include "mapgrad/data_model.hpp"

namespace mapgrad {

/// Seeded synthetic detection problems: per ground truth a handful of
/// jittered copies whose IoU straddles the matching threshold, plus uniform
/// background boxes.
struct SynthConfig {
    int n_images = 20;
    int num_classes = 3;
    int min_gts_per_image = 2;
    int max_gts_per_image = 4;
    int jittered_per_gt = 3;
    int background_per_image = 51;
    double canvas_width = 640.0;
    double canvas_height = 480.0;
    double jitter = 0.25;        // offset/scale magnitude as a fraction of box size
    double min_box_frac = 0.10;  // ground-truth size as a fraction of the canvas
    double max_box_frac = 0.30;
    std::uint64_t seed = 1;
};

/// Deterministic in the seed. Throws std::invalid_argument when the canvas
/// cannot hold the requested boxes with their jitter margin.
Dataset generate(const SynthConfig& cfg);

/// Fraction of proposals overlapping any ground truth with IoU > 0.5.
double foreground_fraction(const Dataset& d);

}  // namespace mapgrad
