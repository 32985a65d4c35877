#include "trafficloc/viz.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trafficloc::viz {
namespace {

void depth_color(double t, std::uint8_t* rgb) {
  // t in [0,1], near -> warm, far -> cold.
  const double r = std::clamp(1.5 - std::abs(4.0 * t - 0.5), 0.0, 1.0);
  const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
  const double b = std::clamp(1.5 - std::abs(4.0 * t - 3.5), 0.0, 1.0);
  rgb[0] = static_cast<std::uint8_t>(std::lround(r * 255.0));
  rgb[1] = static_cast<std::uint8_t>(std::lround(g * 255.0));
  rgb[2] = static_cast<std::uint8_t>(std::lround(b * 255.0));
}

void draw_line(io::ImageRgb& img, int x0, int y0, int x1, int y1, const std::uint8_t rgb[3]) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (x0 >= 0 && x0 < img.width && y0 >= 0 && y0 < img.height) {
      std::uint8_t* px = img.at(x0, y0);
      px[0] = rgb[0];
      px[1] = rgb[1];
      px[2] = rgb[2];
    }
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

io::ImageRgb render_depth(const PointCloud& cloud, const geom::CameraModel& cam,
                          const geom::Pose& pose) {
  io::ImageRgb img;
  img.width = cam.width;
  img.height = cam.height;
  img.pixels.assign(static_cast<std::size_t>(cam.width) * cam.height * 3, 0);

  std::vector<double> zbuf(static_cast<std::size_t>(cam.width) * cam.height,
                           std::numeric_limits<double>::infinity());
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = 0.0;
  for (const Vec3& p : cloud.points) {
    const geom::Projection proj = geom::project(cam, pose, p);
    if (!proj) continue;
    const double z = pose.apply(p).z();
    const int x = static_cast<int>(proj.pixel->x());
    const int y = static_cast<int>(proj.pixel->y());
    const std::size_t idx = static_cast<std::size_t>(y) * cam.width + x;
    if (z < zbuf[idx]) {
      zbuf[idx] = z;
      zmin = std::min(zmin, z);
      zmax = std::max(zmax, z);
    }
  }
  if (!(zmax > zmin)) zmax = zmin + 1.0;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * cam.width + x;
      if (!std::isfinite(zbuf[idx])) continue;
      const double t = (zbuf[idx] - zmin) / (zmax - zmin);
      depth_color(t, img.at(x, y));
    }
  }
  return img;
}

io::ImageRgb render_correspondences(const PointCloud& cloud, const geom::CameraModel& cam,
                                    const geom::Pose& gt_pose,
                                    const matching::CorrespondenceSet& correspondences,
                                    double error_threshold_px) {
  io::ImageRgb img = render_depth(cloud, cam, gt_pose);
  for (std::uint8_t& v : img.pixels) v = static_cast<std::uint8_t>(v / 3);  // dim background

  const std::uint8_t green[3] = {0, 220, 0};
  const std::uint8_t red[3] = {220, 0, 0};
  for (const matching::Correspondence& c : correspondences) {
    const geom::Projection proj = geom::project(cam, gt_pose, c.point);
    if (!proj) continue;
    const double err = (*proj.pixel - c.pixel).norm();
    const std::uint8_t* color = err < error_threshold_px ? green : red;
    draw_line(img, static_cast<int>(std::lround(c.pixel.x())),
              static_cast<int>(std::lround(c.pixel.y())),
              static_cast<int>(std::lround(proj.pixel->x())),
              static_cast<int>(std::lround(proj.pixel->y())), color);
  }
  return img;
}

}  // namespace trafficloc::viz
