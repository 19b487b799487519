#pragma once

#include <cstddef>
#include <vector>

#include "mapgrad/data_model.hpp"

namespace mapgrad {

/// Dense per-(image, window, class) score storage tied to a dataset's layout.
/// Entry index = (window_offset(image) + window) * K + class.
class ScoreTable {
public:
    ScoreTable() = default;
    ScoreTable(const Dataset& d, double fill = 0.0)
        : k_(d.num_classes), offsets_(d.window_offsets()),
          values_(d.total_windows() * static_cast<std::size_t>(d.num_classes), fill) {}

    int num_classes() const { return k_; }
    std::size_t num_windows() const { return offsets_.empty() ? 0 : offsets_.back(); }
    std::size_t size() const { return values_.size(); }

    std::size_t flat_window(int image, int window) const {
        return offsets_[static_cast<std::size_t>(image)] + static_cast<std::size_t>(window);
    }
    std::size_t index(int image, int window, int class_id) const {
        return flat_window(image, window) * static_cast<std::size_t>(k_) +
               static_cast<std::size_t>(class_id);
    }

    double at(int image, int window, int class_id) const { return values_[index(image, window, class_id)]; }
    double& at(int image, int window, int class_id) { return values_[index(image, window, class_id)]; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool same_layout(const ScoreTable& o) const { return k_ == o.k_ && offsets_ == o.offsets_; }

private:
    int k_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<double> values_;
};

/// Same layout as ScoreTable; holds the loss gradient w.r.t. each score.
using GradientField = ScoreTable;

}  // namespace mapgrad
