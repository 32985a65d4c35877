#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Data-parallel inner loops behind the geometry/matching/attention code.
// Every kernel has a scalar reference implementation plus SIMD variants
// (AVX2 on x86-64, NEON on aarch64) selected once at startup from CPU
// features; TRAFFICLOC_KERNELS=scalar|avx2|neon overrides the choice.
//
// Exactness contract, checked by the equivalence tests:
//   - dot_f32, matmul_abt_f32, matmul_ab_f32, normalize_rows_f32 reduce
//     across lanes and may differ from the scalar reference by rounding
//     (tested to a relative tolerance).
//   - min_dist2_update_argmax and count_in_frustum are element-wise with a
//     fixed operation order and must match the scalar reference bit for bit
//     (no FMA contraction; ties resolved toward the lowest index).
namespace trafficloc::kernels {

struct KernelTable {
  // Dot product of two length-n float vectors.
  float (*dot_f32)(const float* a, const float* b, std::size_t n);

  // out[m x n] = A[m x k] * B[n x k]^T, all row-major.
  void (*matmul_abt_f32)(const float* a, std::size_t m, const float* b, std::size_t n,
                         std::size_t k, float* out);

  // out[m x n] = A[m x k] * B[k x n], all row-major.
  void (*matmul_ab_f32)(const float* a, std::size_t m, std::size_t k, const float* b,
                        std::size_t n, float* out);

  // Scales each row to unit L2 norm. Rows with norm below `min_norm` are left
  // untouched; returns how many such rows were seen.
  std::size_t (*normalize_rows_f32)(float* mat, std::size_t rows, std::size_t cols,
                                    float min_norm);

  // dist2[i] = min(dist2[i], |p_i - c|^2); returns the argmax of the updated
  // array (ties -> lowest index). Points given as SoA arrays.
  std::size_t (*min_dist2_update_argmax)(const double* xs, const double* ys, const double* zs,
                                         std::size_t n, double cx, double cy, double cz,
                                         double* dist2);

  // Counts points that project inside [0,w)x[0,h) with positive depth under
  // x_cam = R*x + t (R row-major 3x3).
  std::size_t (*count_in_frustum)(const double* xs, const double* ys, const double* zs,
                                  std::size_t n, const double* rotation, const double* translation,
                                  double fx, double fy, double cx, double cy, double width,
                                  double height);
};

// Active table (dispatch resolved on first use).
const KernelTable& active();

// Reference implementations, always available (used by the equivalence tests).
const KernelTable& scalar_table();

// Name of the selected variant: "scalar", "avx2" or "neon".
std::string_view active_name();

// Convenience wrappers over active().
inline float dot_f32(const float* a, const float* b, std::size_t n) {
  return active().dot_f32(a, b, n);
}
inline void matmul_abt_f32(const float* a, std::size_t m, const float* b, std::size_t n,
                           std::size_t k, float* out) {
  active().matmul_abt_f32(a, m, b, n, k, out);
}
inline void matmul_ab_f32(const float* a, std::size_t m, std::size_t k, const float* b,
                          std::size_t n, float* out) {
  active().matmul_ab_f32(a, m, k, b, n, out);
}
inline std::size_t normalize_rows_f32(float* mat, std::size_t rows, std::size_t cols,
                                      float min_norm = 1e-20f) {
  return active().normalize_rows_f32(mat, rows, cols, min_norm);
}
inline std::size_t min_dist2_update_argmax(const double* xs, const double* ys, const double* zs,
                                           std::size_t n, double cx, double cy, double cz,
                                           double* dist2) {
  return active().min_dist2_update_argmax(xs, ys, zs, n, cx, cy, cz, dist2);
}
inline std::size_t count_in_frustum(const double* xs, const double* ys, const double* zs,
                                    std::size_t n, const double* rotation,
                                    const double* translation, double fx, double fy, double cx,
                                    double cy, double width, double height) {
  return active().count_in_frustum(xs, ys, zs, n, rotation, translation, fx, fy, cx, cy, width,
                                   height);
}

}  // namespace trafficloc::kernels
