#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mapgrad/geometry.hpp"

namespace mapgrad::kernels {

/// Structure-of-arrays box storage for the batched kernels.
struct BoxArray {
    std::vector<double> x0, y0, x1, y1, area;

    void clear() {
        x0.clear(); y0.clear(); x1.clear(); y1.clear(); area.clear();
    }
    void reserve(std::size_t n) {
        x0.reserve(n); y0.reserve(n); x1.reserve(n); y1.reserve(n); area.reserve(n);
    }
    void push(const BoundingBox& b) {
        x0.push_back(b.x_min); y0.push_back(b.y_min);
        x1.push_back(b.x_max); y1.push_back(b.y_max);
        area.push_back(b.area());
    }
    std::size_t size() const { return x0.size(); }
};

/// IoU of one query box against boxes[begin, end).
using IouManyFn = void (*)(const BoundingBox& q, double q_area, const BoxArray& boxes,
                           std::size_t begin, std::size_t end, double* out);

/// out[i-begin] = 1 where iou(query, boxes[i]) > threshold (strict).
using OverlapMaskFn = void (*)(const BoundingBox& q, double q_area, const BoxArray& boxes,
                               std::size_t begin, std::size_t end, double threshold,
                               std::uint8_t* out);

/// v[i] = clamp(v[i], -threshold, threshold).
using ClipFn = void (*)(double* v, std::size_t n, double threshold);

/// g[i] += coeff * s[i]^3  (L4 regulariser gradient with coeff = 4*lambda).
using CubeAccumFn = void (*)(double* g, const double* s, std::size_t n, double coeff);

/// max_i |v[i]|; 0 for empty input.
using MaxAbsFn = double (*)(const double* v, std::size_t n);

struct KernelSet {
    IouManyFn iou_many;
    OverlapMaskFn overlap_mask;
    ClipFn clip;
    CubeAccumFn cube_accum;
    MaxAbsFn max_abs;
    const char* name;
};

extern const KernelSet scalar_kernels;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelSet avx2_kernels;
#endif

bool cpu_has_avx2();

/// Active set: AVX2 when the CPU supports it, scalar otherwise.
/// MAPGRAD_SIMD=scalar|avx2|auto overrides.
const KernelSet& active();

/// For tests: the set named by `which` ("scalar" or "avx2"); nullptr if unavailable.
const KernelSet* by_name(const std::string& which);

}  // namespace mapgrad::kernels
