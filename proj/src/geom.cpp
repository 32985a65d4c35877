#include "trafficloc/geom.hpp"

#include <Eigen/LU>
#include <cmath>

namespace trafficloc::geom {

bool Pose::is_valid_rotation(double tol) const {
  const Mat3 gram = rotation * rotation.transpose() - Mat3::Identity();
  return gram.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

CameraModel scale_camera(const CameraModel& cam, int new_width, int new_height) {
  const double sx = static_cast<double>(new_width) / cam.width;
  const double sy = static_cast<double>(new_height) / cam.height;
  CameraModel out;
  out.fx = cam.fx * new_width / cam.width;
  out.fy = cam.fy * new_height / cam.height;
  out.cx = (cam.cx + 0.5) * sx - 0.5;
  out.cy = (cam.cy + 0.5) * sy - 0.5;
  out.width = new_width;
  out.height = new_height;
  return out;
}

Projection project(const CameraModel& cam, const Pose& pose, const Vec3& point_world) {
  const Vec3 pc = pose.apply(point_world);
  Projection result;
  if (!(pc.z() > 0.0)) {
    result.failure = ProjectionFailure::behind_camera;
    return result;
  }
  const double u = cam.fx * (pc.x() / pc.z()) + cam.cx;
  const double v = cam.fy * (pc.y() / pc.z()) + cam.cy;
  if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height) {
    result.failure = ProjectionFailure::out_of_bounds;
    return result;
  }
  result.pixel = Vec2(u, v);
  return result;
}

Vec3 unproject(const CameraModel& cam, const Pose& pose, const Vec2& pixel, double depth) {
  const Vec3 pc((pixel.x() - cam.cx) / cam.fx * depth, (pixel.y() - cam.cy) / cam.fy * depth,
                depth);
  return pose.rotation.transpose() * (pc - pose.translation);
}

Ray pixel_ray(const CameraModel& cam, const Pose& pose, const Vec2& pixel) {
  Ray ray;
  ray.origin = pose.camera_center();
  const Vec3 dir_cam((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0);
  ray.direction = (pose.rotation.transpose() * dir_cam).normalized();
  return ray;
}

Ray patch_ray(const CameraModel& cam, const Pose& pose, int patch_row, int patch_col,
              int patch_size) {
  const int rows = cam.height / patch_size;
  const int cols = cam.width / patch_size;
  if (patch_row < 0 || patch_row >= rows || patch_col < 0 || patch_col >= cols)
    throw std::invalid_argument("patch_ray: patch index outside grid");
  const Vec2 center((patch_col + 0.5) * patch_size - 0.5, (patch_row + 0.5) * patch_size - 0.5);
  return pixel_ray(cam, pose, center);
}

double angular_radius(const Ray& ray, const Vec3& point) {
  const Vec3 to_point = point - ray.origin;
  const double norm = to_point.norm();
  if (norm == 0.0) throw std::invalid_argument("angular_radius: point coincides with ray origin");
  double c = ray.direction.dot(to_point) / norm;
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

double point_to_ray_distance(const Ray& ray, const Vec3& point) {
  const Vec3 to_point = point - ray.origin;
  const Vec3 perp = to_point - ray.direction.dot(to_point) * ray.direction;
  return perp.norm();
}

}  // namespace trafficloc::geom
