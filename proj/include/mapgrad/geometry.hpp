#pragma once

#include <cmath>
#include <stdexcept>

namespace mapgrad {

/// Axis-aligned box with continuous pixel coordinates.
/// Area uses the plain (x_max-x_min)*(y_max-y_min) convention, no +1.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }

    bool valid() const {
        return std::isfinite(x_min) && std::isfinite(y_min) &&
               std::isfinite(x_max) && std::isfinite(y_max) &&
               x_max > x_min && y_max > y_min;
    }
};

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

/// Intersection-over-union of two valid boxes, in [0,1].
/// Throws std::invalid_argument for degenerate (zero-area or non-finite) boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
    if (!a.valid() || !b.valid())
        throw std::invalid_argument("iou: degenerate bounding box");
    const double inter = intersection_area(a, b);
    if (inter == 0.0) return 0.0;
    return inter / (a.area() + b.area() - inter);
}

}  // namespace mapgrad
