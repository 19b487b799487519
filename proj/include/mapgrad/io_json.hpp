#pragma once

#include <string>

#include "mapgrad/data_model.hpp"
#include "mapgrad/score_table.hpp"

namespace mapgrad {

/// Dataset file:
/// {"classes": K, "images": [{"id": str,
///   "proposals": [{"id": str, "box": [x_min,y_min,x_max,y_max]}],
///   "ground_truth": [{"class": int, "box": [...]}]}]}
Dataset load_dataset_json(const std::string& path);
void save_dataset_json(const Dataset& d, const std::string& path);

/// Scores file:
/// {"scores": [{"image": str, "window": str, "class": int, "score": float}]}
/// Every (window, class) pair must appear exactly once with a finite score.
ScoreTable load_scores_json(const std::string& path, const Dataset& d);
void save_scores_json(const ScoreTable& t, const Dataset& d, const std::string& path);

}  // namespace mapgrad
