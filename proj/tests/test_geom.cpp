#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "trafficloc/geom.hpp"

using namespace trafficloc;
using geom::CameraModel;
using geom::Pose;
using geom::Ray;

namespace {

CameraModel protocol_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 960.0;
  cam.cx = 960.0;
  cam.cy = 540.0;
  cam.width = 1920;
  cam.height = 1080;
  return cam;
}

}  // namespace

TEST_CASE("pose inverse composes to identity") {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const Pose p = oracle::random_pose(rng);
    REQUIRE(p.is_valid_rotation(1e-9));
    const Pose id = p.inverse().compose(p);
    CHECK((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(id.translation.norm() <= 1e-9);
  }
}

TEST_CASE("camera validation") {
  CameraModel cam = protocol_camera();
  CHECK_NOTHROW(cam.validate());
  cam.fx = 0.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
  cam = protocol_camera();
  cam.cx = 1920.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
}

TEST_CASE("project: optical axis point hits the principal point") {
  const auto proj = geom::project(protocol_camera(), Pose{}, Vec3(0, 0, 10));
  REQUIRE(proj);
  CHECK(proj.pixel->x() == doctest::Approx(960.0).epsilon(1e-12));
  CHECK(proj.pixel->y() == doctest::Approx(540.0).epsilon(1e-12));
}

TEST_CASE("project: negative depth reports behind-camera") {
  const auto proj = geom::project(protocol_camera(), Pose{}, Vec3(0, 0, -1));
  CHECK(!proj);
  CHECK(proj.failure == geom::ProjectionFailure::behind_camera);
}

TEST_CASE("project: hand-evaluated pixel") {
  const auto proj = geom::project(protocol_camera(), Pose{}, Vec3(5, 0, 10));
  REQUIRE(proj);
  CHECK(proj.pixel->x() == doctest::Approx(1440.0).epsilon(1e-12));
  CHECK(proj.pixel->y() == doctest::Approx(540.0).epsilon(1e-12));
}

TEST_CASE("project: out-of-bounds reason code") {
  const auto proj = geom::project(protocol_camera(), Pose{}, Vec3(50, 0, 10));
  CHECK(!proj);
  CHECK(proj.failure == geom::ProjectionFailure::out_of_bounds);
}

TEST_CASE("project/unproject round trip") {
  Rng rng(22);
  const CameraModel cam = protocol_camera();
  for (int t = 0; t < 50; ++t) {
    const Pose pose = oracle::random_pose(rng);
    const Vec2 pixel(rng.uniform(0.0, 1919.0), rng.uniform(0.0, 1079.0));
    const double depth = rng.uniform(0.5, 80.0);
    const Vec3 world = geom::unproject(cam, pose, pixel, depth);
    const auto proj = geom::project(cam, pose, world);
    REQUIRE(proj);
    CHECK((*proj.pixel - pixel).norm() <= 1e-9);
  }
}

TEST_CASE("patch_ray: principal-point patch points down the optical axis") {
  // 1920x1080 at s = 16: 120 x 67.5 -> use 240 wide / 160 tall toy camera
  // whose center pixel equals (cx, cy).
  CameraModel cam;
  cam.fx = cam.fy = 200.0;
  cam.cx = 119.5;  // center pixel of patch (4, 7) with s = 16 is (119.5, 71.5)
  cam.cy = 71.5;
  cam.width = 240;
  cam.height = 144;
  const Ray ray = geom::patch_ray(cam, Pose{}, 4, 7, 16);
  CHECK((ray.direction - Vec3(0, 0, 1)).norm() <= 1e-12);
}

TEST_CASE("patch_ray: origin is the camera center") {
  Rng rng(23);
  for (int t = 0; t < 10; ++t) {
    const Pose pose = oracle::random_pose(rng);
    const Ray ray = geom::patch_ray(protocol_camera(), pose, 3, 5, 16);
    const Vec3 center = -(pose.rotation.transpose() * pose.translation);
    CHECK((ray.origin - center).norm() <= 1e-12);
    CHECK(std::abs(ray.direction.norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("patch_ray: corner patch direction by hand") {
  const Ray ray = geom::patch_ray(protocol_camera(), Pose{}, 0, 0, 16);
  const Vec3 expect = Vec3(7.5 - 960.0, 7.5 - 540.0, 960.0).normalized();
  CHECK((ray.direction - expect).norm() <= 1e-12);
}

TEST_CASE("patch_ray: out-of-grid index throws") {
  CHECK_THROWS_AS(geom::patch_ray(protocol_camera(), Pose{}, 1080 / 16, 0, 16),
                  std::invalid_argument);
}

TEST_CASE("angular_radius basic cases") {
  Ray ray;
  ray.origin = Vec3(1, 2, 3);
  ray.direction = Vec3(0, 0, 1);
  CHECK(geom::angular_radius(ray, ray.origin + Vec3(0, 0, 5)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(geom::angular_radius(ray, ray.origin + Vec3(2, 0, 0)) ==
        doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(geom::angular_radius(ray, ray.origin + Vec3(1, 0, 1)) ==
        doctest::Approx(std::acos(1.0 / std::sqrt(2.0))).epsilon(1e-12));
  CHECK_THROWS_AS(geom::angular_radius(ray, ray.origin), std::invalid_argument);
}

TEST_CASE("angular_radius is invariant under joint rigid transforms") {
  Rng rng(24);
  for (int t = 0; t < 40; ++t) {
    Ray ray;
    ray.origin = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    ray.direction = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    const Vec3 point(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
    if ((point - ray.origin).norm() < 1e-6) continue;
    const double base = geom::angular_radius(ray, point);

    const Pose xf = oracle::random_pose(rng);
    Ray moved;
    moved.origin = xf.apply(ray.origin);
    moved.direction = xf.rotation * ray.direction;
    const double transformed = geom::angular_radius(moved, xf.apply(point));
    CHECK(std::abs(base - transformed) <= 1e-9);
  }
}

TEST_CASE("point_to_ray_distance basic cases") {
  Ray ray;
  ray.origin = Vec3(0, 0, 0);
  ray.direction = Vec3(0, 0, 1);
  CHECK(geom::point_to_ray_distance(ray, Vec3(0, 0, 17)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(geom::point_to_ray_distance(ray, Vec3(3, 0, 7)) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(geom::point_to_ray_distance(ray, Vec3(3, 4, 10)) == doctest::Approx(5.0).epsilon(1e-12));
  // Infinite line: behind the origin counts the same way.
  CHECK(geom::point_to_ray_distance(ray, Vec3(3, 4, -10)) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("point_to_ray_distance invariant to sliding the origin along the ray") {
  Rng rng(25);
  for (int t = 0; t < 40; ++t) {
    Ray ray;
    ray.origin = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    ray.direction = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    const Vec3 point(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
    const double base = geom::point_to_ray_distance(ray, point);
    Ray slid = ray;
    slid.origin += ray.direction * rng.uniform(-30.0, 30.0);
    CHECK(std::abs(geom::point_to_ray_distance(slid, point) - base) <= 1e-9);
  }
}

TEST_CASE("in_frustum mirrors project") {
  const CameraModel cam = protocol_camera();
  CHECK(geom::in_frustum(cam, Pose{}, Vec3(0, 0, 10)));
  CHECK(geom::in_frustum(cam, Pose{}, Vec3(5, 0, 10)));
  CHECK(!geom::in_frustum(cam, Pose{}, Vec3(0, 0, -1)));
}

TEST_CASE("in_frustum agrees with an independent angular test inside the FOV cone") {
  // For a 90-degree horizontal FOV camera the vertical extent is smaller, so
  // points within the VERTICAL half-FOV cone of the optical axis must be
  // visible whenever z > 0.
  const CameraModel cam = protocol_camera();
  const double fov_half_vertical = std::atan2(540.0, 960.0);
  Rng rng(26);
  int checked = 0;
  for (int t = 0; t < 500; ++t) {
    const Vec3 p(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(0.1, 60));
    Ray axis;
    axis.direction = Vec3(0, 0, 1);
    const double rad = geom::angular_radius(axis, p);
    if (rad < fov_half_vertical) {
      CHECK(geom::in_frustum(cam, Pose{}, p));
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("in_frustum agrees with an independent brute-force pixel test") {
  const CameraModel cam = protocol_camera();
  Rng rng(27);
  for (int t = 0; t < 300; ++t) {
    const Pose pose = oracle::random_pose(rng, 5.0);
    const Vec3 p(rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(-40, 40));
    // Brute force in long double from the raw definitions.
    long double pc[3] = {0, 0, 0};
    for (int r = 0; r < 3; ++r) {
      pc[r] = pose.translation[r];
      for (int c = 0; c < 3; ++c)
        pc[r] += static_cast<long double>(pose.rotation(r, c)) * p[c];
    }
    bool expect = false;
    if (pc[2] > 0) {
      const long double u = cam.fx * (pc[0] / pc[2]) + cam.cx;
      const long double v = cam.fy * (pc[1] / pc[2]) + cam.cy;
      expect = u >= 0 && u < cam.width && v >= 0 && v < cam.height;
    }
    CHECK(geom::in_frustum(cam, pose, p) == expect);
  }
}
