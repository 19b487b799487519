#if defined(__x86_64__) || defined(_M_X64)

#include "mapgrad/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>

// AVX2 variants of the scalar reference kernels. Same per-element operation
// order as kernels_scalar.cpp (mul+add, no FMA contraction) so results are
// bit-identical; the equivalence suite asserts exact equality.

namespace mapgrad::kernels {

namespace {

inline double iou_one(const BoundingBox& q, double q_area, const BoxArray& b, std::size_t i) {
    const double dx = std::min(q.x_max, b.x1[i]) - std::max(q.x_min, b.x0[i]);
    const double dy = std::min(q.y_max, b.y1[i]) - std::max(q.y_min, b.y0[i]);
    const double inter = std::max(0.0, dx) * std::max(0.0, dy);
    if (inter == 0.0) return 0.0;
    return inter / (q_area + b.area[i] - inter);
}

inline __m256d iou_vec(const BoundingBox& q, __m256d q_area, const BoxArray& b, std::size_t i) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d qx0 = _mm256_set1_pd(q.x_min);
    const __m256d qy0 = _mm256_set1_pd(q.y_min);
    const __m256d qx1 = _mm256_set1_pd(q.x_max);
    const __m256d qy1 = _mm256_set1_pd(q.y_max);

    const __m256d dx = _mm256_sub_pd(_mm256_min_pd(qx1, _mm256_loadu_pd(&b.x1[i])),
                                     _mm256_max_pd(qx0, _mm256_loadu_pd(&b.x0[i])));
    const __m256d dy = _mm256_sub_pd(_mm256_min_pd(qy1, _mm256_loadu_pd(&b.y1[i])),
                                     _mm256_max_pd(qy0, _mm256_loadu_pd(&b.y0[i])));
    // max(x, 0) returns +0 for x = +-0, matching std::max(0.0, x).
    const __m256d w = _mm256_max_pd(dx, zero);
    const __m256d h = _mm256_max_pd(dy, zero);
    const __m256d inter = _mm256_mul_pd(w, h);
    const __m256d uni =
        _mm256_sub_pd(_mm256_add_pd(q_area, _mm256_loadu_pd(&b.area[i])), inter);
    return _mm256_div_pd(inter, uni);
}

void iou_many_avx2(const BoundingBox& q, double q_area, const BoxArray& boxes,
                   std::size_t begin, std::size_t end, double* out) {
    const __m256d qa = _mm256_set1_pd(q_area);
    std::size_t i = begin;
    for (; i + 4 <= end; i += 4)
        _mm256_storeu_pd(out + (i - begin), iou_vec(q, qa, boxes, i));
    for (; i < end; ++i)
        out[i - begin] = iou_one(q, q_area, boxes, i);
}

void overlap_mask_avx2(const BoundingBox& q, double q_area, const BoxArray& boxes,
                       std::size_t begin, std::size_t end, double threshold,
                       std::uint8_t* out) {
    const __m256d qa = _mm256_set1_pd(q_area);
    const __m256d thr = _mm256_set1_pd(threshold);
    std::size_t i = begin;
    for (; i + 4 <= end; i += 4) {
        const __m256d v = iou_vec(q, qa, boxes, i);
        const int m = _mm256_movemask_pd(_mm256_cmp_pd(v, thr, _CMP_GT_OQ));
        std::uint8_t* o = out + (i - begin);
        o[0] = static_cast<std::uint8_t>(m & 1);
        o[1] = static_cast<std::uint8_t>((m >> 1) & 1);
        o[2] = static_cast<std::uint8_t>((m >> 2) & 1);
        o[3] = static_cast<std::uint8_t>((m >> 3) & 1);
    }
    for (; i < end; ++i)
        out[i - begin] = iou_one(q, q_area, boxes, i) > threshold ? 1 : 0;
}

void clip_avx2(double* v, std::size_t n, double threshold) {
    const __m256d hi = _mm256_set1_pd(threshold);
    const __m256d lo = _mm256_set1_pd(-threshold);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d x = _mm256_loadu_pd(v + i);
        x = _mm256_max_pd(_mm256_min_pd(x, hi), lo);
        _mm256_storeu_pd(v + i, x);
    }
    for (; i < n; ++i)
        v[i] = std::max(-threshold, std::min(threshold, v[i]));
}

void cube_accum_avx2(double* g, const double* s, std::size_t n, double coeff) {
    const __m256d c = _mm256_set1_pd(coeff);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d x = _mm256_loadu_pd(s + i);
        const __m256d cube = _mm256_mul_pd(_mm256_mul_pd(x, x), x);
        const __m256d acc = _mm256_add_pd(_mm256_loadu_pd(g + i), _mm256_mul_pd(c, cube));
        _mm256_storeu_pd(g + i, acc);
    }
    for (; i < n; ++i)
        g[i] += coeff * (s[i] * s[i] * s[i]);
}

double max_abs_avx2(const double* v, std::size_t n) {
    const __m256d signmask = _mm256_set1_pd(-0.0);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_max_pd(acc, _mm256_andnot_pd(signmask, _mm256_loadu_pd(v + i)));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
    for (; i < n; ++i)
        m = std::max(m, std::fabs(v[i]));
    return m;
}

}  // namespace

const KernelSet avx2_kernels = {
    iou_many_avx2, overlap_mask_avx2, clip_avx2, cube_accum_avx2,
    max_abs_avx2, "avx2",
};

}  // namespace mapgrad::kernels

#endif  // x86_64
