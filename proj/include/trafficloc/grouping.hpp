#pragma once

#include <stdexcept>
#include <vector>

#include "trafficloc/types.hpp"

namespace trafficloc {

struct PointCloud {
  std::vector<Vec3> points;

  int size() const { return static_cast<int>(points.size()); }
};

}  // namespace trafficloc

namespace trafficloc::grouping {

struct GroupSet {
  std::vector<Vec3> centers;       // M centers
  std::vector<int> center_indices; // M indices into the cloud
  std::vector<int> assignment;     // N group ids (nearest center, ties -> lowest id)

  int group_count() const { return static_cast<int>(centers.size()); }
};

// Farthest point sampling: first center is seed_index, each next center
// maximizes the min distance to the chosen set (ties -> lowest point index).
GroupSet farthest_point_sampling(const PointCloud& cloud, int m, int seed_index = 0);

struct PatchGrid {
  int patch_size = 16;
  int rows = 0;
  int cols = 0;

  int count() const { return rows * cols; }
  int flat(int row, int col) const { return row * cols + col; }

  // Throws unless the patch size divides both image dimensions.
  static PatchGrid create(int image_width, int image_height, int patch_size);
};

// (row, col) of the patch containing a pixel; throws when out of bounds.
std::pair<int, int> patch_of_pixel(const PatchGrid& grid, const Vec2& pixel);

}  // namespace trafficloc::grouping
