#include "mapgrad/kernels.hpp"

#include <algorithm>
#include <cmath>

// Reference kernels. The AVX2 variants must match these bit-for-bit, so the
// arithmetic here is written in the exact per-element order the vector code
// uses: inter = max(0, dx) * max(0, dy); iou = inter / (area_q + area_i - inter).

namespace mapgrad::kernels {

namespace {

inline double iou_one(const BoundingBox& q, double q_area, const BoxArray& b, std::size_t i) {
    const double dx = std::min(q.x_max, b.x1[i]) - std::max(q.x_min, b.x0[i]);
    const double dy = std::min(q.y_max, b.y1[i]) - std::max(q.y_min, b.y0[i]);
    const double inter = std::max(0.0, dx) * std::max(0.0, dy);
    if (inter == 0.0) return 0.0;
    return inter / (q_area + b.area[i] - inter);
}

void iou_many_scalar(const BoundingBox& q, double q_area, const BoxArray& boxes,
                     std::size_t begin, std::size_t end, double* out) {
    for (std::size_t i = begin; i < end; ++i)
        out[i - begin] = iou_one(q, q_area, boxes, i);
}

void overlap_mask_scalar(const BoundingBox& q, double q_area, const BoxArray& boxes,
                         std::size_t begin, std::size_t end, double threshold,
                         std::uint8_t* out) {
    for (std::size_t i = begin; i < end; ++i)
        out[i - begin] = iou_one(q, q_area, boxes, i) > threshold ? 1 : 0;
}

void clip_scalar(double* v, std::size_t n, double threshold) {
    for (std::size_t i = 0; i < n; ++i)
        v[i] = std::max(-threshold, std::min(threshold, v[i]));
}

void cube_accum_scalar(double* g, const double* s, std::size_t n, double coeff) {
    for (std::size_t i = 0; i < n; ++i)
        g[i] += coeff * (s[i] * s[i] * s[i]);
}

double max_abs_scalar(const double* v, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        m = std::max(m, std::fabs(v[i]));
    return m;
}

}  // namespace

const KernelSet scalar_kernels = {
    iou_many_scalar, overlap_mask_scalar, clip_scalar, cube_accum_scalar,
    max_abs_scalar, "scalar",
};

}  // namespace mapgrad::kernels
