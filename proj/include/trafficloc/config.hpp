#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "trafficloc/attention.hpp"
#include "trafficloc/matching.hpp"
#include "trafficloc/pose.hpp"

namespace trafficloc::config {

// All tunables in one place. Serialized as flat `key = value` pairs under
// `[section]` headers (a strict subset of INI syntax, no nesting).
struct PipelineConfig {
  // [pipeline]
  int input_width = 512;
  int input_height = 288;
  int point_count = 20480;
  int group_count = 512;
  int patch_size = 16;
  int coarse_channels = 256;
  int fine_channels = 64;
  double coarse_temperature = 0.025;
  double fine_temperature = 0.025;
  int soft_argmax_window = 5;
  double superpoint_threshold = 0.9;
  bool bypass_fusion = false;
  int threads = 1;
  std::uint64_t seed = 0;

  attention::FusionConfig fusion;
  attention::GalConfig gal;
  matching::LossConfig loss;
  pose::RansacConfig ransac;
  pose::EvalConfig eval;

  // [eval] primary_metric: which aggregate the summary headlines (median for
  // the intersection protocol, mean for the in-vehicle benchmarks).
  std::string primary_metric = "median";

  // [scene]
  double region_x = 100.0, region_y = 100.0, region_z = 50.0;
  double downsample_resolution = 0.2;
  double voxel_size = 50.0;
  double voxel_stride = 25.0;

  void validate() const;
};

PipelineConfig parse_config(const std::string& text);
std::string serialize_config(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace trafficloc::config
