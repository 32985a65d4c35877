#pragma once

#include <Eigen/Core>

namespace trafficloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Row-major float matrix: feature blocks keep each descriptor contiguous so
// the kernels can run straight over the rows.
using MatXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Box3 {
  Vec3 min{0, 0, 0};
  Vec3 max{0, 0, 0};

  // Half-open membership [min, max): boundary ownership is deterministic.
  bool contains(const Vec3& p) const {
    return p.x() >= min.x() && p.x() < max.x() && p.y() >= min.y() && p.y() < max.y() &&
           p.z() >= min.z() && p.z() < max.z();
  }
  Vec3 extent() const { return max - min; }
  Box3 expanded(double margin) const {
    return Box3{min - Vec3::Constant(margin), max + Vec3::Constant(margin)};
  }
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace trafficloc
