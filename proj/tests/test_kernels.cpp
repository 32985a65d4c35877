#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "trafficloc/kernels.hpp"
#include "trafficloc/rng.hpp"

using namespace trafficloc;

namespace {

std::vector<float> random_floats(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

std::vector<double> random_doubles(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("dispatch resolves to a known variant") {
  const auto name = kernels::active_name();
  CHECK((name == "scalar" || name == "avx2" || name == "neon"));
}

TEST_CASE("dot equivalence: active vs scalar within tolerance") {
  Rng rng(11);
  for (std::size_t n : {1u, 7u, 8u, 64u, 255u, 256u, 1000u}) {
    const auto a = random_floats(rng, n);
    const auto b = random_floats(rng, n);
    const double ref = kernels::scalar_table().dot_f32(a.data(), b.data(), n);
    const double got = kernels::active().dot_f32(a.data(), b.data(), n);
    CHECK(std::abs(ref - got) <= 1e-4 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("matmul_abt equivalence") {
  Rng rng(12);
  const std::size_t m = 13, n = 9, k = 130;
  const auto a = random_floats(rng, m * k);
  const auto b = random_floats(rng, n * k);
  std::vector<float> ref(m * n), got(m * n);
  kernels::scalar_table().matmul_abt_f32(a.data(), m, b.data(), n, k, ref.data());
  kernels::active().matmul_abt_f32(a.data(), m, b.data(), n, k, got.data());
  for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(ref[i] - got[i]) <= 1e-4f);
}

TEST_CASE("matmul_ab equivalence") {
  Rng rng(13);
  const std::size_t m = 7, k = 33, n = 21;
  const auto a = random_floats(rng, m * k);
  const auto b = random_floats(rng, k * n);
  std::vector<float> ref(m * n), got(m * n);
  kernels::scalar_table().matmul_ab_f32(a.data(), m, k, b.data(), n, ref.data());
  kernels::active().matmul_ab_f32(a.data(), m, k, b.data(), n, got.data());
  for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(ref[i] - got[i]) <= 1e-4f);
}

TEST_CASE("normalize_rows produces unit rows and counts degenerate ones") {
  Rng rng(14);
  const std::size_t rows = 9, cols = 37;
  auto mat = random_floats(rng, rows * cols);
  for (std::size_t c = 0; c < cols; ++c) mat[3 * cols + c] = 0.0f;  // one zero row
  auto ref = mat;
  const std::size_t bad_active = kernels::active().normalize_rows_f32(mat.data(), rows, cols, 1e-20f);
  const std::size_t bad_scalar =
      kernels::scalar_table().normalize_rows_f32(ref.data(), rows, cols, 1e-20f);
  CHECK(bad_active == 1);
  CHECK(bad_scalar == 1);
  for (std::size_t r = 0; r < rows; ++r) {
    if (r == 3) continue;
    double norm2 = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      norm2 += static_cast<double>(mat[r * cols + c]) * mat[r * cols + c];
      CHECK(std::abs(mat[r * cols + c] - ref[r * cols + c]) <= 1e-5f);
    }
    CHECK(std::abs(std::sqrt(norm2) - 1.0) <= 1e-6);
  }
}

TEST_CASE("min_dist2_update_argmax is bit-identical to scalar") {
  Rng rng(15);
  for (std::size_t n : {1u, 3u, 4u, 5u, 127u, 1024u}) {
    const auto xs = random_doubles(rng, n, -50, 50);
    const auto ys = random_doubles(rng, n, -50, 50);
    const auto zs = random_doubles(rng, n, 0, 50);
    auto d_active = random_doubles(rng, n, 0, 100);
    auto d_scalar = d_active;
    const double cx = rng.uniform(-50, 50), cy = rng.uniform(-50, 50), cz = rng.uniform(0, 50);
    const std::size_t ia = kernels::active().min_dist2_update_argmax(xs.data(), ys.data(),
                                                                     zs.data(), n, cx, cy, cz,
                                                                     d_active.data());
    const std::size_t is = kernels::scalar_table().min_dist2_update_argmax(
        xs.data(), ys.data(), zs.data(), n, cx, cy, cz, d_scalar.data());
    CHECK(ia == is);
    for (std::size_t i = 0; i < n; ++i) CHECK(d_active[i] == d_scalar[i]);
  }
}

TEST_CASE("min_dist2_update_argmax ties break to the lowest index") {
  std::vector<double> xs{1.0, -1.0, 1.0, -1.0, 1.0};
  std::vector<double> ys{0, 0, 0, 0, 0};
  std::vector<double> zs{0, 0, 0, 0, 0};
  std::vector<double> d(xs.size(), 1e30);
  const std::size_t idx =
      kernels::min_dist2_update_argmax(xs.data(), ys.data(), zs.data(), xs.size(), 0, 0, 0,
                                       d.data());
  CHECK(idx == 0);
}

TEST_CASE("count_in_frustum is bit-identical to scalar") {
  Rng rng(16);
  const double rot[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const double tr[3] = {0, 0, 0};
  for (std::size_t n : {1u, 4u, 6u, 333u}) {
    const auto xs = random_doubles(rng, n, -30, 30);
    const auto ys = random_doubles(rng, n, -20, 20);
    const auto zs = random_doubles(rng, n, -5, 60);
    const std::size_t a = kernels::active().count_in_frustum(xs.data(), ys.data(), zs.data(), n,
                                                             rot, tr, 256, 256, 256, 144, 512,
                                                             288);
    const std::size_t s = kernels::scalar_table().count_in_frustum(xs.data(), ys.data(), zs.data(),
                                                                    n, rot, tr, 256, 256, 256, 144,
                                                                    512, 288);
    CHECK(a == s);
  }
}

TEST_CASE("count_in_frustum boundary and sign conventions") {
  const double rot[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const double tr[3] = {0, 0, 0};
  // On-axis point, behind-camera point, exactly-on-edge pixel (u = width).
  std::vector<double> xs{0.0, 0.0, 1.0};
  std::vector<double> ys{0.0, 0.0, 0.0};
  std::vector<double> zs{10.0, -1.0, 1.0};
  CHECK(kernels::count_in_frustum(xs.data(), ys.data(), zs.data(), 3, rot, tr, 256, 256, 256, 144,
                                  512, 288) == 1);
}
