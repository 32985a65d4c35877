#pragma once

#include <optional>
#include <stdexcept>

#include "trafficloc/types.hpp"

namespace trafficloc::geom {

// Rigid transform mapping world coordinates to camera coordinates:
// x_cam = rotation * x_world + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p_world) const { return rotation * p_world + translation; }
  Vec3 camera_center() const { return -rotation.transpose() * translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }
  // this ∘ other: applies `other` first.
  Pose compose(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }
  bool is_valid_rotation(double tol = 1e-9) const;
};

struct CameraModel {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw std::invalid_argument("CameraModel: focal lengths must be > 0");
    if (!(cx > 0 && cx < width && cy > 0 && cy < height))
      throw std::invalid_argument("CameraModel: principal point outside image");
  }
};

// Rescales a camera to a new image size keeping the pixel-center convention
// (pixel u maps to (u + 0.5) * scale - 0.5).
CameraModel scale_camera(const CameraModel& cam, int new_width, int new_height);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
};

enum class ProjectionFailure { behind_camera, out_of_bounds };

struct Projection {
  std::optional<Vec2> pixel;
  ProjectionFailure failure = ProjectionFailure::behind_camera;

  explicit operator bool() const { return pixel.has_value(); }
};

// Projects a world point; no-value when the depth is non-positive or the
// pixel falls outside [0,width) x [0,height).
Projection project(const CameraModel& cam, const Pose& pose, const Vec3& point_world);

// Back-projects a pixel at depth z (camera frame) to a world point.
Vec3 unproject(const CameraModel& cam, const Pose& pose, const Vec2& pixel, double depth);

// World-frame ray through the center pixel of patch (row, col) of size s.
// Patch (row, col) covers pixels [col*s, col*s + s) x [row*s, row*s + s); its
// center pixel is ((col + 0.5)*s - 0.5, (row + 0.5)*s - 0.5).
Ray patch_ray(const CameraModel& cam, const Pose& pose, int patch_row, int patch_col,
              int patch_size);

// World-frame ray through an arbitrary pixel.
Ray pixel_ray(const CameraModel& cam, const Pose& pose, const Vec2& pixel);

// Angle in [0, pi] between ray.direction and (point - origin). The cosine is
// clamped to [-1, 1] before arccos. Throws if the point coincides with the
// ray origin.
double angular_radius(const Ray& ray, const Vec3& point);

// Euclidean distance from a point to the infinite line through the ray.
double point_to_ray_distance(const Ray& ray, const Vec3& point);

inline bool in_frustum(const CameraModel& cam, const Pose& pose, const Vec3& point_world) {
  return static_cast<bool>(project(cam, pose, point_world));
}

}  // namespace trafficloc::geom
