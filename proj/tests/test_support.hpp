#pragma once

// Test-only brute-force oracles, kept independent of the library paths they
// check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "trafficloc/geom.hpp"
#include "trafficloc/grouping.hpp"
#include "trafficloc/rng.hpp"
#include "trafficloc/types.hpp"

namespace oracle {

using trafficloc::Mat3;
using trafficloc::Rng;
using trafficloc::Vec2;
using trafficloc::Vec3;

// O(N^2 * m) farthest point sampling, recomputing every min-distance from
// scratch; ties toward the lowest point index.
inline std::vector<int> brute_fps(const std::vector<Vec3>& pts, int m, int seed_index) {
  std::vector<int> centers{seed_index};
  while (static_cast<int>(centers.size()) < m) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
      double min_d = std::numeric_limits<double>::infinity();
      for (int c : centers) {
        const double dx = pts[i].x() - pts[c].x();
        const double dy = pts[i].y() - pts[c].y();
        const double dz = pts[i].z() - pts[c].z();
        const double d = dx * dx + dy * dy + dz * dz;
        min_d = std::min(min_d, d);
      }
      if (min_d > best_d) {
        best_d = min_d;
        best = i;
      }
    }
    centers.push_back(best);
  }
  return centers;
}

// Distinct occupied cells of a hash grid at the given resolution.
inline std::size_t grid_cell_count(const std::vector<Vec3>& pts, double resolution) {
  std::vector<std::tuple<long, long, long>> cells;
  for (const Vec3& p : pts) {
    cells.emplace_back(static_cast<long>(std::floor(p.x() / resolution)),
                       static_cast<long>(std::floor(p.y() / resolution)),
                       static_cast<long>(std::floor(p.z() / resolution)));
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells.size();
}

// Nearest row of `bank` by cosine similarity, computed in long double.
inline int brute_cosine_nn(const float* query, const float* bank, int rows, int dim) {
  int best = -1;
  long double best_sim = -2.0L;
  for (int r = 0; r < rows; ++r) {
    long double dot = 0.0L, qa = 0.0L, qb = 0.0L;
    for (int c = 0; c < dim; ++c) {
      dot += static_cast<long double>(query[c]) * bank[r * dim + c];
      qa += static_cast<long double>(query[c]) * query[c];
      qb += static_cast<long double>(bank[r * dim + c]) * bank[r * dim + c];
    }
    const long double sim = dot / std::sqrt(qa * qb);
    if (sim > best_sim) {
      best_sim = sim;
      best = r;
    }
  }
  return best;
}

// Soft-argmax at extended precision.
inline Vec2 brute_soft_argmax(const std::vector<std::vector<double>>& values, double temperature) {
  long double max_v = -std::numeric_limits<long double>::infinity();
  for (const auto& row : values)
    for (double v : row) max_v = std::max<long double>(max_v, v);
  long double z = 0.0L, ex = 0.0L, ey = 0.0L;
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t c = 0; c < values[r].size(); ++c) {
      const long double w = std::exp((static_cast<long double>(values[r][c]) - max_v) /
                                     static_cast<long double>(temperature));
      z += w;
      ex += w * static_cast<long double>(c);
      ey += w * static_cast<long double>(r);
    }
  }
  return Vec2(static_cast<double>(ex / z), static_cast<double>(ey / z));
}

inline Mat3 random_rotation(Rng& rng) {
  // Random axis-angle; uniform enough for invariance tests.
  Vec3 axis;
  do {
    axis = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  } while (axis.norm() < 1e-3);
  axis.normalize();
  const double angle = rng.uniform(0.0, 2.0 * trafficloc::kPi);
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + s * k + (1 - c) * (k * k);
}

inline trafficloc::geom::Pose random_pose(Rng& rng, double translation_scale = 10.0) {
  trafficloc::geom::Pose pose;
  pose.rotation = random_rotation(rng);
  pose.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) *
                     translation_scale;
  return pose;
}

}  // namespace oracle
