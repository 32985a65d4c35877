#include <cmath>
#include <cstring>

#include "trafficloc/kernels.hpp"

namespace trafficloc::kernels {
namespace {

float dot_f32_scalar(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void matmul_abt_f32_scalar(const float* a, std::size_t m, const float* b, std::size_t n,
                           std::size_t k, float* out) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = dot_f32_scalar(ai, b + j * k, k);
    }
  }
}

void matmul_ab_f32_scalar(const float* a, std::size_t m, std::size_t k, const float* b,
                          std::size_t n, float* out) {
  std::memset(out, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    float* oi = out + i * n;
    const float* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = ai[p];
      const float* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += av * bp[j];
    }
  }
}

std::size_t normalize_rows_f32_scalar(float* mat, std::size_t rows, std::size_t cols,
                                      float min_norm) {
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    float* row = mat + i * cols;
    float norm2 = 0.0f;
    for (std::size_t j = 0; j < cols; ++j) norm2 += row[j] * row[j];
    const float norm = std::sqrt(norm2);
    if (norm < min_norm) {
      ++degenerate;
      continue;
    }
    const float inv = 1.0f / norm;
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
  }
  return degenerate;
}

std::size_t min_dist2_update_argmax_scalar(const double* xs, const double* ys, const double* zs,
                                           std::size_t n, double cx, double cy, double cz,
                                           double* dist2) {
  std::size_t best = 0;
  double best_val = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - cx;
    const double dy = ys[i] - cy;
    const double dz = zs[i] - cz;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < dist2[i]) dist2[i] = d2;
    if (dist2[i] > best_val) {
      best_val = dist2[i];
      best = i;
    }
  }
  return best;
}

std::size_t count_in_frustum_scalar(const double* xs, const double* ys, const double* zs,
                                    std::size_t n, const double* r, const double* t, double fx,
                                    double fy, double cx, double cy, double width, double height) {
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

const KernelTable& scalar_table() {
  static const KernelTable table{
      dot_f32_scalar,       matmul_abt_f32_scalar,          matmul_ab_f32_scalar,
      normalize_rows_f32_scalar, min_dist2_update_argmax_scalar, count_in_frustum_scalar,
  };
  return table;
}

}  // namespace trafficloc::kernels
