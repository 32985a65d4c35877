// NEON kernel variants for aarch64, mirroring the AVX2 file: FMA in the
// reduction kernels, strict scalar operation order in the element-wise ones.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstring>

#include "trafficloc/kernels.hpp"

namespace trafficloc::kernels {
namespace {

float dot_f32_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
  }
  float total = vaddvq_f32(acc);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void matmul_abt_f32_neon(const float* a, std::size_t m, const float* b, std::size_t n,
                         std::size_t k, float* out) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = dot_f32_neon(ai, b + j * k, k);
  }
}

void matmul_ab_f32_neon(const float* a, std::size_t m, std::size_t k, const float* b,
                        std::size_t n, float* out) {
  std::memset(out, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    float* oi = out + i * n;
    const float* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float32x4_t av = vdupq_n_f32(ai[p]);
      const float* bp = b + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        vst1q_f32(oi + j, vfmaq_f32(vld1q_f32(oi + j), av, vld1q_f32(bp + j)));
      }
      for (; j < n; ++j) oi[j] += ai[p] * bp[j];
    }
  }
}

std::size_t normalize_rows_f32_neon(float* mat, std::size_t rows, std::size_t cols,
                                    float min_norm) {
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    float* row = mat + i * cols;
    const float norm = std::sqrt(dot_f32_neon(row, row, cols));
    if (norm < min_norm) {
      ++degenerate;
      continue;
    }
    const float inv = 1.0f / norm;
    const float32x4_t vinv = vdupq_n_f32(inv);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) vst1q_f32(row + j, vmulq_f32(vld1q_f32(row + j), vinv));
    for (; j < cols; ++j) row[j] *= inv;
  }
  return degenerate;
}

std::size_t min_dist2_update_argmax_neon(const double* xs, const double* ys, const double* zs,
                                         std::size_t n, double cx, double cy, double cz,
                                         double* dist2) {
  const float64x2_t vcx = vdupq_n_f64(cx);
  const float64x2_t vcy = vdupq_n_f64(cy);
  const float64x2_t vcz = vdupq_n_f64(cz);
  float64x2_t best_val = vdupq_n_f64(-1.0);
  float64x2_t best_idx = vdupq_n_f64(0.0);

  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t dx = vsubq_f64(vld1q_f64(xs + i), vcx);
    const float64x2_t dy = vsubq_f64(vld1q_f64(ys + i), vcy);
    const float64x2_t dz = vsubq_f64(vld1q_f64(zs + i), vcz);
    const float64x2_t d2 =
        vaddq_f64(vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)), vmulq_f64(dz, dz));
    const float64x2_t old = vld1q_f64(dist2 + i);
    const float64x2_t updated = vminq_f64(d2, old);
    vst1q_f64(dist2 + i, updated);

    const uint64x2_t gt = vcgtq_f64(updated, best_val);
    best_val = vbslq_f64(gt, updated, best_val);
    const double idx_init[2] = {static_cast<double>(i), static_cast<double>(i + 1)};
    best_idx = vbslq_f64(gt, vld1q_f64(idx_init), best_idx);
  }

  double vals[2], idxs[2];
  vst1q_f64(vals, best_val);
  vst1q_f64(idxs, best_idx);
  double bv = -1.0;
  std::size_t bi = 0;
  for (int lane = 0; lane < 2; ++lane) {
    if (vals[lane] > bv || (vals[lane] == bv && static_cast<std::size_t>(idxs[lane]) < bi)) {
      bv = vals[lane];
      bi = static_cast<std::size_t>(idxs[lane]);
    }
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - cx;
    const double dy = ys[i] - cy;
    const double dz = zs[i] - cz;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < dist2[i]) dist2[i] = d2;
    if (dist2[i] > bv) {
      bv = dist2[i];
      bi = i;
    }
  }
  return bi;
}

std::size_t count_in_frustum_neon(const double* xs, const double* ys, const double* zs,
                                  std::size_t n, const double* r, const double* t, double fx,
                                  double fy, double cx, double cy, double width, double height) {
  // 2-lane doubles buy little over scalar here; keep the reference loop.
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = xs[i], y = ys[i], z = zs[i];
    const double zc = r[6] * x + r[7] * y + r[8] * z + t[2];
    if (!(zc > 0.0)) continue;
    const double xc = r[0] * x + r[1] * y + r[2] * z + t[0];
    const double yc = r[3] * x + r[4] * y + r[5] * z + t[1];
    const double u = fx * (xc / zc) + cx;
    const double v = fy * (yc / zc) + cy;
    if (u >= 0.0 && u < width && v >= 0.0 && v < height) ++count;
  }
  return count;
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{
      dot_f32_neon,       matmul_abt_f32_neon,          matmul_ab_f32_neon,
      normalize_rows_f32_neon, min_dist2_update_argmax_neon, count_in_frustum_neon,
  };
  return table;
}

}  // namespace trafficloc::kernels

#endif  // aarch64
