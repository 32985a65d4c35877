// AVX2 kernel variants. Reduction kernels use FMA freely; the element-wise
// kernels (min_dist2_update_argmax, count_in_frustum) keep the scalar
// operation order so their results are bit-identical to the reference.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "trafficloc/kernels.hpp"

namespace trafficloc::kernels {
namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot_f32_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float total = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void matmul_abt_f32_avx2(const float* a, std::size_t m, const float* b, std::size_t n,
                         std::size_t k, float* out) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = dot_f32_avx2(ai, b + j * k, k);
    }
  }
}

void matmul_ab_f32_avx2(const float* a, std::size_t m, std::size_t k, const float* b,
                        std::size_t n, float* out) {
  std::memset(out, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    float* oi = out + i * n;
    const float* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const __m256 av = _mm256_set1_ps(ai[p]);
      const float* bp = b + p * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        const __m256 o = _mm256_loadu_ps(oi + j);
        _mm256_storeu_ps(oi + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(bp + j), o));
      }
      for (; j < n; ++j) oi[j] += ai[p] * bp[j];
    }
  }
}

std::size_t normalize_rows_f32_avx2(float* mat, std::size_t rows, std::size_t cols,
                                    float min_norm) {
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    float* row = mat + i * cols;
    const float norm = std::sqrt(dot_f32_avx2(row, row, cols));
    if (norm < min_norm) {
      ++degenerate;
      continue;
    }
    const float inv = 1.0f / norm;
    const __m256 vinv = _mm256_set1_ps(inv);
    std::size_t j = 0;
    for (; j + 8 <= cols; j += 8) {
      _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), vinv));
    }
    for (; j < cols; ++j) row[j] *= inv;
  }
  return degenerate;
}

std::size_t min_dist2_update_argmax_avx2(const double* xs, const double* ys, const double* zs,
                                         std::size_t n, double cx, double cy, double cz,
                                         double* dist2) {
  const __m256d vcx = _mm256_set1_pd(cx);
  const __m256d vcy = _mm256_set1_pd(cy);
  const __m256d vcz = _mm256_set1_pd(cz);

  // Per-lane running maxima; strict greater-than keeps the earliest block,
  // matching the scalar tie rule.
  __m256d best_val = _mm256_set1_pd(-1.0);
  __m256d best_idx = _mm256_setzero_pd();

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vcx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vcy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vcz);
    // (dx*dx + dy*dy) + dz*dz, no FMA: identical rounding to the scalar path.
    const __m256d d2 =
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                      _mm256_mul_pd(dz, dz));
    const __m256d old = _mm256_loadu_pd(dist2 + i);
    const __m256d updated = _mm256_min_pd(d2, old);
    _mm256_storeu_pd(dist2 + i, updated);

    const __m256d gt = _mm256_cmp_pd(updated, best_val, _CMP_GT_OQ);
    best_val = _mm256_blendv_pd(best_val, updated, gt);
    const __m256d idx = _mm256_set_pd(static_cast<double>(i + 3), static_cast<double>(i + 2),
                                      static_cast<double>(i + 1), static_cast<double>(i));
    best_idx = _mm256_blendv_pd(best_idx, idx, gt);
  }

  double vals[4], idxs[4];
  _mm256_storeu_pd(vals, best_val);
  _mm256_storeu_pd(idxs, best_idx);
  double bv = -1.0;
  std::size_t bi = 0;
  for (int lane = 0; lane < 4; ++lane) {
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

std::size_t count_in_frustum_avx2(const double* xs, const double* ys, const double* zs,
                                  std::size_t n, const double* r, const double* t, double fx,
                                  double fy, double cx, double cy, double width, double height) {
  const __m256d r0 = _mm256_set1_pd(r[0]), r1 = _mm256_set1_pd(r[1]), r2 = _mm256_set1_pd(r[2]);
  const __m256d r3 = _mm256_set1_pd(r[3]), r4 = _mm256_set1_pd(r[4]), r5 = _mm256_set1_pd(r[5]);
  const __m256d r6 = _mm256_set1_pd(r[6]), r7 = _mm256_set1_pd(r[7]), r8 = _mm256_set1_pd(r[8]);
  const __m256d t0 = _mm256_set1_pd(t[0]), t1 = _mm256_set1_pd(t[1]), t2 = _mm256_set1_pd(t[2]);
  const __m256d vfx = _mm256_set1_pd(fx), vfy = _mm256_set1_pd(fy);
  const __m256d vcx = _mm256_set1_pd(cx), vcy = _mm256_set1_pd(cy);
  const __m256d vw = _mm256_set1_pd(width), vh = _mm256_set1_pd(height);
  const __m256d zero = _mm256_setzero_pd();

  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(xs + i);
    const __m256d y = _mm256_loadu_pd(ys + i);
    const __m256d z = _mm256_loadu_pd(zs + i);
    // ((r*x + r*y) + r*z) + t, multiply/add kept separate to mirror scalar.
    const __m256d zc = _mm256_add_pd(
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r6, x), _mm256_mul_pd(r7, y)),
                      _mm256_mul_pd(r8, z)),
        t2);
    const __m256d xc = _mm256_add_pd(
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r0, x), _mm256_mul_pd(r1, y)),
                      _mm256_mul_pd(r2, z)),
        t0);
    const __m256d yc = _mm256_add_pd(
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r3, x), _mm256_mul_pd(r4, y)),
                      _mm256_mul_pd(r5, z)),
        t1);
    const __m256d u = _mm256_add_pd(_mm256_mul_pd(vfx, _mm256_div_pd(xc, zc)), vcx);
    const __m256d v = _mm256_add_pd(_mm256_mul_pd(vfy, _mm256_div_pd(yc, zc)), vcy);

    __m256d ok = _mm256_cmp_pd(zc, zero, _CMP_GT_OQ);
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(u, zero, _CMP_GE_OQ));
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(u, vw, _CMP_LT_OQ));
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(v, zero, _CMP_GE_OQ));
    ok = _mm256_and_pd(ok, _mm256_cmp_pd(v, vh, _CMP_LT_OQ));
    count += static_cast<std::size_t>(_mm_popcnt_u32(
        static_cast<unsigned>(_mm256_movemask_pd(ok))));
  }
  for (; i < n; ++i) {
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

const KernelTable& avx2_table() {
  static const KernelTable table{
      dot_f32_avx2,       matmul_abt_f32_avx2,          matmul_ab_f32_avx2,
      normalize_rows_f32_avx2, min_dist2_update_argmax_avx2, count_in_frustum_avx2,
  };
  return table;
}

}  // namespace trafficloc::kernels

#endif  // x86-64
