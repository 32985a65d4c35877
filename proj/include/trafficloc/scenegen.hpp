#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "trafficloc/geom.hpp"
#include "trafficloc/grouping.hpp"
#include "trafficloc/matching.hpp"
#include "trafficloc/types.hpp"

namespace trafficloc::scenegen {

struct CameraRecord {
  int id = 0;
  geom::CameraModel cam;
  geom::Pose pose;  // world -> camera, ground truth
};

struct SceneBundle {
  PointCloud cloud;
  std::vector<CameraRecord> cameras;
  Box3 region;
};

struct PoseSamplingSpec {
  std::vector<Vec2> grid_positions;  // xy, meters
  std::vector<double> heights_m;
  std::vector<double> pitches_deg;  // downward positive, in (0, 90)
  int yaw_count = 8;
  double fov_deg = 90.0;  // horizontal
  int image_width = 1920;
  int image_height = 1080;

  int camera_count() const {
    return static_cast<int>(grid_positions.size() * heights_m.size() * pitches_deg.size()) *
           yaw_count;
  }
  void validate() const;
};

// Near-square xy grid of `count` positions centered on `center`, spacing
// `spacing` meters.
std::vector<Vec2> make_position_grid(int count, const Vec2& center, double spacing);

struct SceneSpec {
  PoseSamplingSpec poses;
  Box3 region{Vec3(-50, -50, 0), Vec3(50, 50, 50)};
  double downsample_resolution = 0.2;
  int building_count = 10;
  int pole_count = 12;
  double ground_spacing = 0.35;  // raw ground sample spacing before downsampling

  static SceneSpec test_split();   // 288 images: 9 xy x {6.5, 7.5} m x {15, 30} deg x 8 yaws
  static SceneSpec train_split();  // 768 images: 16 xy x {6, 7, 8} m x {15, 30} deg x 8 yaws
};

// Deterministic intersection-like scene: ground plane, box buildings and
// pole structures, voxel-downsampled, plus cameras from the sampling spec.
SceneBundle generate_scene(std::uint64_t seed, const SceneSpec& spec);

// Cameras only (useful when the cloud comes from elsewhere).
std::vector<CameraRecord> generate_cameras(const PoseSamplingSpec& spec);

// At most one point per resolution cube; the representative is the member
// centroid. Output ordered by cell (ix, iy, iz) lexicographically.
PointCloud voxel_downsample(const PointCloud& cloud, double resolution);

struct VoxelPartition {
  double voxel_size = 50.0;
  double stride = 25.0;
  struct Voxel {
    Box3 box;
    std::vector<int> member_indices;
  };
  std::vector<Voxel> voxels;  // empty voxels dropped
};

// Boxes of `voxel_size` tiled at `stride` across the region (only boxes fully
// inside it); membership is half-open [min, max).
VoxelPartition partition_voxels(const PointCloud& cloud, const Box3& region, double voxel_size,
                                double stride);

// Voxel index -> camera ids whose in-frustum fraction of the voxel's points
// strictly exceeds min_fraction.
std::map<int, std::vector<int>> associate_images(const VoxelPartition& part,
                                                 const PointCloud& cloud,
                                                 const std::vector<CameraRecord>& cameras,
                                                 double min_fraction = 0.30);

struct OracleFeatures {
  matching::FeatureSet features;
  matching::CorrespondenceSet ground_truth;  // exact projections, one per claimed group
  std::vector<int> claimed_groups;           // group ids backing ground_truth entries
  std::vector<std::uint8_t> in_frustum;      // per-group geometric labels
};

// Synthesizes descriptors with known correspondence structure: every
// in-frustum group center claims the patch (and the fine pixel) under its
// exact projection, which receives the group descriptor perturbed by Gaussian
// noise of scale noise_sigma and renormalized. Everything else gets an
// independent random unit descriptor. When several groups project into one
// patch the lowest group id claims it; the rest become distractors with no
// ground-truth entry. Throws when no group is in frustum.
OracleFeatures synthesize_oracle_features(const PointCloud& cloud,
                                          const grouping::GroupSet& groups,
                                          const geom::CameraModel& cam, const geom::Pose& pose,
                                          const grouping::PatchGrid& grid, double noise_sigma,
                                          std::uint64_t seed, int coarse_channels = 256,
                                          int fine_channels = 64);

}  // namespace trafficloc::scenegen
