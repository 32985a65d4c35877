#include "trafficloc/scenegen.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <tuple>

#include "trafficloc/rng.hpp"

namespace trafficloc::scenegen {

void PoseSamplingSpec::validate() const {
  if (grid_positions.empty()) throw std::invalid_argument("PoseSamplingSpec: no grid positions");
  if (heights_m.empty()) throw std::invalid_argument("PoseSamplingSpec: no heights");
  if (pitches_deg.empty()) throw std::invalid_argument("PoseSamplingSpec: no pitches");
  if (yaw_count < 1) throw std::invalid_argument("PoseSamplingSpec: yaw_count must be >= 1");
  for (double h : heights_m)
    if (!(h > 0)) throw std::invalid_argument("PoseSamplingSpec: heights must be > 0");
  for (double p : pitches_deg)
    if (!(p > 0 && p < 90))
      throw std::invalid_argument("PoseSamplingSpec: pitches must lie in (0, 90) degrees");
  if (!(fov_deg > 0 && fov_deg < 180))
    throw std::invalid_argument("PoseSamplingSpec: fov must lie in (0, 180) degrees");
  if (image_width < 2 || image_height < 2)
    throw std::invalid_argument("PoseSamplingSpec: degenerate image size");
}

std::vector<Vec2> make_position_grid(int count, const Vec2& center, double spacing) {
  if (count < 1) throw std::invalid_argument("make_position_grid: count must be >= 1");
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  std::vector<Vec2> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int r = i / side;
    const int c = i % side;
    const double rows = std::ceil(static_cast<double>(count) / side);
    out.emplace_back(center.x() + (c - (side - 1) * 0.5) * spacing,
                     center.y() + (r - (rows - 1) * 0.5) * spacing);
  }
  return out;
}

SceneSpec SceneSpec::test_split() {
  SceneSpec spec;
  spec.poses.grid_positions = make_position_grid(9, Vec2(0, 0), 8.0);
  spec.poses.heights_m = {6.5, 7.5};
  spec.poses.pitches_deg = {15.0, 30.0};
  spec.poses.yaw_count = 8;
  return spec;
}

SceneSpec SceneSpec::train_split() {
  SceneSpec spec;
  spec.poses.grid_positions = make_position_grid(16, Vec2(0, 0), 6.0);
  spec.poses.heights_m = {6.0, 7.0, 8.0};
  spec.poses.pitches_deg = {15.0, 30.0};
  spec.poses.yaw_count = 8;
  return spec;
}

std::vector<CameraRecord> generate_cameras(const PoseSamplingSpec& spec) {
  spec.validate();
  // Horizontal FOV fixes fx; square pixels fix fy = fx. Protocol FOVs give
  // integer focals (90 deg at 1920 px -> exactly 960); snap away the tan()
  // rounding residue so those constants hold exactly.
  double fx = (spec.image_width / 2.0) / std::tan(deg2rad(spec.fov_deg) / 2.0);
  fx = std::round(fx * 1e6) / 1e6;
  geom::CameraModel cam;
  cam.fx = fx;
  cam.fy = fx;
  cam.cx = spec.image_width / 2.0;
  cam.cy = spec.image_height / 2.0;
  cam.width = spec.image_width;
  cam.height = spec.image_height;
  cam.validate();

  std::vector<CameraRecord> cameras;
  cameras.reserve(spec.camera_count());
  int id = 0;
  for (const Vec2& xy : spec.grid_positions) {
    for (double height : spec.heights_m) {
      for (double pitch_deg : spec.pitches_deg) {
        for (int k = 0; k < spec.yaw_count; ++k) {
          const double yaw = deg2rad(k * (360.0 / spec.yaw_count));
          const double pitch = deg2rad(pitch_deg);
          // Optical axis: horizontal heading `yaw`, tilted down by `pitch`.
          const Vec3 forward(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch),
                             -std::sin(pitch));
          const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
          const Vec3 down = forward.cross(right).normalized();

          CameraRecord rec;
          rec.id = id++;
          rec.cam = cam;
          rec.pose.rotation.row(0) = right.transpose();
          rec.pose.rotation.row(1) = down.transpose();
          rec.pose.rotation.row(2) = forward.transpose();
          const Vec3 center(xy.x(), xy.y(), height);
          rec.pose.translation = -(rec.pose.rotation * center);
          cameras.push_back(rec);
        }
      }
    }
  }
  return cameras;
}

namespace {

void add_ground(Rng& rng, const Box3& region, double spacing, std::vector<Vec3>& pts) {
  for (double x = region.min.x(); x < region.max.x(); x += spacing) {
    for (double y = region.min.y(); y < region.max.y(); y += spacing) {
      pts.emplace_back(x + rng.uniform(-0.3, 0.3) * spacing, y + rng.uniform(-0.3, 0.3) * spacing,
                       rng.uniform(0.0, 0.03));
    }
  }
}

// Surface samples on the four walls and roof of an axis-aligned box.
void add_box(Rng& rng, const Vec3& corner, const Vec3& size, double spacing,
             std::vector<Vec3>& pts) {
  const auto jitter = [&] { return rng.uniform(-0.2, 0.2) * spacing; };
  for (double z = 0; z < size.z(); z += spacing) {
    for (double x = 0; x < size.x(); x += spacing) {
      pts.emplace_back(corner.x() + x + jitter(), corner.y() + jitter(), corner.z() + z + jitter());
      pts.emplace_back(corner.x() + x + jitter(), corner.y() + size.y() + jitter(),
                       corner.z() + z + jitter());
    }
    for (double y = 0; y < size.y(); y += spacing) {
      pts.emplace_back(corner.x() + jitter(), corner.y() + y + jitter(), corner.z() + z + jitter());
      pts.emplace_back(corner.x() + size.x() + jitter(), corner.y() + y + jitter(),
                       corner.z() + z + jitter());
    }
  }
  for (double x = 0; x < size.x(); x += spacing) {
    for (double y = 0; y < size.y(); y += spacing) {
      pts.emplace_back(corner.x() + x + jitter(), corner.y() + y + jitter(),
                       corner.z() + size.z() + jitter());
    }
  }
}

void add_pole(Rng& rng, const Vec2& base, double height, double spacing, std::vector<Vec3>& pts) {
  for (double z = 0; z < height; z += spacing * 0.5) {
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const double radius = 0.15;
    pts.emplace_back(base.x() + radius * std::cos(angle), base.y() + radius * std::sin(angle), z);
  }
  // Crossarm near the top.
  for (double d = -1.5; d <= 1.5; d += spacing * 0.5) {
    pts.emplace_back(base.x() + d, base.y(), height);
  }
}

}  // namespace

SceneBundle generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.poses.validate();
  if (!(spec.downsample_resolution > 0))
    throw std::invalid_argument("generate_scene: resolution must be > 0");

  Rng rng(derive_seed(seed, 0x5ce0));
  std::vector<Vec3> pts;
  pts.reserve(1 << 20);
  add_ground(rng, spec.region, spec.ground_spacing, pts);

  const Vec3 extent = spec.region.extent();
  for (int b = 0; b < spec.building_count; ++b) {
    // Buildings sit away from the central road cross.
    Vec2 corner;
    do {
      corner = Vec2(rng.uniform(spec.region.min.x() + 2.0, spec.region.max.x() - 32.0),
                    rng.uniform(spec.region.min.y() + 2.0, spec.region.max.y() - 32.0));
    } while (std::abs(corner.x() + 10.0 - (spec.region.min.x() + extent.x() / 2)) < 16.0 ||
             std::abs(corner.y() + 10.0 - (spec.region.min.y() + extent.y() / 2)) < 16.0);
    const Vec3 size(rng.uniform(8.0, 24.0), rng.uniform(8.0, 24.0),
                    rng.uniform(8.0, std::min(30.0, extent.z() - 1.0)));
    add_box(rng, Vec3(corner.x(), corner.y(), 0.0), size, 0.45, pts);
  }
  for (int p = 0; p < spec.pole_count; ++p) {
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const double dist = rng.uniform(6.0, 20.0);
    add_pole(rng,
             Vec2(std::cos(angle) * dist, std::sin(angle) * dist) +
                 Vec2(spec.region.min.x() + extent.x() / 2, spec.region.min.y() + extent.y() / 2),
             rng.uniform(6.0, 10.0), 0.3, pts);
  }

  // Crop to the region, then apply the protocol downsampling.
  PointCloud raw;
  raw.points.reserve(pts.size());
  for (const Vec3& p : pts)
    if (spec.region.contains(p)) raw.points.push_back(p);

  SceneBundle bundle;
  bundle.cloud = voxel_downsample(raw, spec.downsample_resolution);
  bundle.cameras = generate_cameras(spec.poses);
  bundle.region = spec.region;
  const Box3 margin = spec.region.expanded(10.0);
  for (const CameraRecord& rec : bundle.cameras) {
    if (!margin.contains(rec.pose.camera_center()))
      throw std::invalid_argument("generate_scene: camera center outside region + 10 m margin");
  }
  return bundle;
}

namespace {

using CellKey = std::tuple<long, long, long>;

CellKey cell_of(const Vec3& p, double resolution) {
  return {static_cast<long>(std::floor(p.x() / resolution)),
          static_cast<long>(std::floor(p.y() / resolution)),
          static_cast<long>(std::floor(p.z() / resolution))};
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0)) throw std::invalid_argument("voxel_downsample: resolution must be > 0");
  std::map<CellKey, std::pair<Vec3, int>> cells;  // ordered: output is input-order independent
  for (const Vec3& p : cloud.points) {
    auto [it, inserted] = cells.try_emplace(cell_of(p, resolution), std::make_pair(p, 1));
    if (!inserted) {
      it->second.first += p;
      it->second.second += 1;
    }
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [key, acc] : cells) out.points.push_back(acc.first / acc.second);
  return out;
}

VoxelPartition partition_voxels(const PointCloud& cloud, const Box3& region, double voxel_size,
                                double stride) {
  if (!(voxel_size >= stride && stride > 0))
    throw std::invalid_argument("partition_voxels: need voxel_size >= stride > 0");
  VoxelPartition part;
  part.voxel_size = voxel_size;
  part.stride = stride;

  const Vec3 extent = region.extent();
  const auto steps = [&](double e) {
    if (e < voxel_size) return 0;
    return static_cast<int>(std::floor((e - voxel_size) / stride + 1e-9)) + 1;
  };
  const int nx = steps(extent.x());
  const int ny = steps(extent.y());
  const int nz = steps(extent.z());

  for (int iz = 0; iz < nz; ++iz) {
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        VoxelPartition::Voxel vox;
        vox.box.min = region.min + Vec3(ix * stride, iy * stride, iz * stride);
        vox.box.max = vox.box.min + Vec3::Constant(voxel_size);
        for (int i = 0; i < cloud.size(); ++i) {
          if (vox.box.contains(cloud.points[i])) vox.member_indices.push_back(i);
        }
        if (!vox.member_indices.empty()) part.voxels.push_back(std::move(vox));
      }
    }
  }
  return part;
}

std::map<int, std::vector<int>> associate_images(const VoxelPartition& part,
                                                 const PointCloud& cloud,
                                                 const std::vector<CameraRecord>& cameras,
                                                 double min_fraction) {
  std::map<int, std::vector<int>> out;
  for (std::size_t v = 0; v < part.voxels.size(); ++v) {
    const auto& members = part.voxels[v].member_indices;
    if (members.empty()) continue;
    for (const CameraRecord& rec : cameras) {
      int visible = 0;
      for (int idx : members) {
        if (geom::in_frustum(rec.cam, rec.pose, cloud.points[idx])) ++visible;
      }
      const double fraction = static_cast<double>(visible) / members.size();
      if (fraction > min_fraction) out[static_cast<int>(v)].push_back(rec.id);
    }
  }
  return out;
}

OracleFeatures synthesize_oracle_features(const PointCloud& cloud,
                                          const grouping::GroupSet& groups,
                                          const geom::CameraModel& cam, const geom::Pose& pose,
                                          const grouping::PatchGrid& grid, double noise_sigma,
                                          std::uint64_t seed, int coarse_channels,
                                          int fine_channels) {
  const int m = groups.group_count();
  const int n_patches = grid.count();
  if (m < 1) throw std::invalid_argument("synthesize_oracle_features: empty group set");
  if (grid.patch_size * grid.cols != cam.width || grid.patch_size * grid.rows != cam.height)
    throw std::invalid_argument("synthesize_oracle_features: grid does not match the camera");

  Rng group_rng(derive_seed(seed, 1));
  Rng patch_rng(derive_seed(seed, 2));
  Rng fine_pts_rng(derive_seed(seed, 3));
  Rng fine_img_rng(derive_seed(seed, 4));

  OracleFeatures out;
  out.features.coarse_points.resize(m, coarse_channels);
  for (int g = 0; g < m; ++g)
    group_rng.unit_vector(out.features.coarse_points.row(g).data(), coarse_channels);

  // Claim pass: ascending group id, first claim wins the patch.
  out.in_frustum.assign(m, 0);
  std::vector<int> patch_claims(n_patches, -1);
  std::vector<Vec2> exact_pixels(m, Vec2::Zero());
  for (int g = 0; g < m; ++g) {
    const geom::Projection proj = geom::project(cam, pose, groups.centers[g]);
    if (!proj) continue;
    out.in_frustum[g] = 1;
    exact_pixels[g] = *proj.pixel;
    const auto [pr, pc] = grouping::patch_of_pixel(grid, *proj.pixel);
    const int flat = grid.flat(pr, pc);
    if (patch_claims[flat] < 0) {
      patch_claims[flat] = g;
      out.claimed_groups.push_back(g);
      matching::Correspondence corr;
      corr.point_index = groups.center_indices[g];
      corr.point = groups.centers[g];
      corr.pixel = *proj.pixel;
      corr.confidence = 1.0;
      out.ground_truth.push_back(corr);
    }
  }
  if (out.claimed_groups.empty())
    throw std::invalid_argument("synthesize_oracle_features: no group is in frustum");

  // Patch descriptors: claimed patches echo their group's descriptor plus
  // noise; the rest are independent.
  out.features.coarse_image.resize(n_patches, coarse_channels);
  std::vector<float> noise(coarse_channels);
  for (int p = 0; p < n_patches; ++p) {
    float* row = out.features.coarse_image.row(p).data();
    if (patch_claims[p] >= 0) {
      const float* src = out.features.coarse_points.row(patch_claims[p]).data();
      patch_rng.gaussian_fill(noise.data(), noise.size());
      double norm2 = 0.0;
      for (int c = 0; c < coarse_channels; ++c) {
        row[c] = src[c] + static_cast<float>(noise_sigma) * noise[c];
        norm2 += static_cast<double>(row[c]) * row[c];
      }
      const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
      for (int c = 0; c < coarse_channels; ++c) row[c] *= inv;
    } else {
      patch_rng.unit_vector(row, coarse_channels);
    }
  }

  // Fine level, half resolution.
  const int fine_rows = cam.height / 2;
  const int fine_cols = cam.width / 2;
  out.features.fine_rows = fine_rows;
  out.features.fine_cols = fine_cols;
  out.features.fine_points.resize(cloud.size(), fine_channels);
  for (int i = 0; i < cloud.size(); ++i)
    fine_pts_rng.unit_vector(out.features.fine_points.row(i).data(), fine_channels);

  out.features.fine_image.resize(static_cast<Eigen::Index>(fine_rows) * fine_cols, fine_channels);
  for (Eigen::Index i = 0; i < out.features.fine_image.rows(); ++i)
    fine_img_rng.unit_vector(out.features.fine_image.row(i).data(), fine_channels);

  std::vector<float> fine_noise(fine_channels);
  for (int g : out.claimed_groups) {
    const Vec2 px = exact_pixels[g];
    const long fx = std::lround((px.x() + 0.5) / 2.0 - 0.5);
    const long fy = std::lround((px.y() + 0.5) / 2.0 - 0.5);
    const long cfx = std::clamp<long>(fx, 0, fine_cols - 1);
    const long cfy = std::clamp<long>(fy, 0, fine_rows - 1);
    float* row = out.features.fine_image.row(cfy * fine_cols + cfx).data();
    const float* src = out.features.fine_points.row(groups.center_indices[g]).data();
    fine_img_rng.gaussian_fill(fine_noise.data(), fine_noise.size());
    double norm2 = 0.0;
    for (int c = 0; c < fine_channels; ++c) {
      row[c] = src[c] + static_cast<float>(noise_sigma) * fine_noise[c];
      norm2 += static_cast<double>(row[c]) * row[c];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
    for (int c = 0; c < fine_channels; ++c) row[c] *= inv;
  }
  return out;
}

}  // namespace trafficloc::scenegen
