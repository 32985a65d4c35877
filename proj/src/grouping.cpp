#include "trafficloc/grouping.hpp"

#include <cmath>
#include <limits>

#include "trafficloc/kernels.hpp"

namespace trafficloc::grouping {

GroupSet farthest_point_sampling(const PointCloud& cloud, int m, int seed_index) {
  const int n = cloud.size();
  if (n < 1) throw std::invalid_argument("farthest_point_sampling: empty cloud");
  if (m < 1 || m > n) throw std::invalid_argument("farthest_point_sampling: m out of range");
  if (seed_index < 0 || seed_index >= n)
    throw std::invalid_argument("farthest_point_sampling: seed index out of range");

  // SoA copy for the distance-update kernel.
  std::vector<double> xs(n), ys(n), zs(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = cloud.points[i].x();
    ys[i] = cloud.points[i].y();
    zs[i] = cloud.points[i].z();
  }

  GroupSet out;
  out.centers.reserve(m);
  out.center_indices.reserve(m);

  std::vector<double> min_dist2(n, std::numeric_limits<double>::infinity());
  int current = seed_index;
  for (int c = 0; c < m; ++c) {
    out.center_indices.push_back(current);
    out.centers.push_back(cloud.points[current]);
    const std::size_t next = kernels::min_dist2_update_argmax(
        xs.data(), ys.data(), zs.data(), static_cast<std::size_t>(n), xs[current], ys[current],
        zs[current], min_dist2.data());
    current = static_cast<int>(next);
  }

  // Nearest-center assignment, ties toward the lowest center id.
  out.assignment.assign(n, 0);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (int c = 0; c < m; ++c) {
    const Vec3& ctr = out.centers[c];
    for (int i = 0; i < n; ++i) {
      const double dx = xs[i] - ctr.x();
      const double dy = ys[i] - ctr.y();
      const double dz = zs[i] - ctr.z();
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < best[i]) {
        best[i] = d2;
        out.assignment[i] = c;
      }
    }
  }
  return out;
}

PatchGrid PatchGrid::create(int image_width, int image_height, int patch_size) {
  if (patch_size < 1) throw std::invalid_argument("PatchGrid: patch size must be >= 1");
  if (image_width % patch_size != 0 || image_height % patch_size != 0)
    throw std::invalid_argument("PatchGrid: patch size must divide image dimensions");
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.rows = image_height / patch_size;
  grid.cols = image_width / patch_size;
  return grid;
}

std::pair<int, int> patch_of_pixel(const PatchGrid& grid, const Vec2& pixel) {
  const double w = static_cast<double>(grid.cols) * grid.patch_size;
  const double h = static_cast<double>(grid.rows) * grid.patch_size;
  if (pixel.x() < 0.0 || pixel.x() >= w || pixel.y() < 0.0 || pixel.y() >= h)
    throw std::invalid_argument("patch_of_pixel: pixel outside image");
  return {static_cast<int>(std::floor(pixel.y() / grid.patch_size)),
          static_cast<int>(std::floor(pixel.x() / grid.patch_size))};
}

}  // namespace trafficloc::grouping
