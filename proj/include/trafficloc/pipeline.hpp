#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "trafficloc/attention.hpp"
#include "trafficloc/config.hpp"
#include "trafficloc/grouping.hpp"
#include "trafficloc/pose.hpp"
#include "trafficloc/scenegen.hpp"

namespace trafficloc::pipeline {

struct RunOptions {
  double noise_sigma = 0.0;
  double outlier_rate = 0.0;
  bool dump_sim_maps = false;
  std::filesystem::path out_dir;  // empty: no files written
  int max_images = -1;            // cap for quick runs; -1 runs everything
};

// Scene prepared for matching: cloud subsampled to the configured size,
// grouped once, cameras rescaled to the pipeline input resolution.
struct SceneData {
  PointCloud cloud;
  grouping::GroupSet groups;
  grouping::PatchGrid grid;
  std::vector<scenegen::CameraRecord> cameras;
  Box3 region;
};

SceneData prepare_scene(const scenegen::SceneBundle& bundle, const config::PipelineConfig& cfg);

// Reads scene.ply + cameras.jsonl from a gen-scene output directory.
SceneData load_scene_dir(const std::filesystem::path& dir, const config::PipelineConfig& cfg);

struct ImageResult {
  int image_id = -1;
  pose::RegistrationResult registration;
  double attention_loss = 0.0;  // GAL diagnostic, only when fusion runs
  bool fusion_ran = false;
  int correspondences = 0;
  int kept_groups = 0;
  int fine_skipped = 0;
  std::vector<int> injected_outliers;  // corrupted group point indices
  int injected_in_inliers = 0;         // how many of those survived RANSAC
};

struct Summary {
  int images = 0;
  double rr = 0.0;
  double rre_median = 0.0, rre_mean = 0.0;
  double rte_median = 0.0, rte_mean = 0.0;
  std::string primary_metric = "median";

  double primary_rre() const { return primary_metric == "mean" ? rre_mean : rre_median; }
  double primary_rte() const { return primary_metric == "mean" ? rte_mean : rte_median; }
};

ImageResult run_image(const SceneData& scene, int camera_index,
                      const config::PipelineConfig& cfg, const RunOptions& opts,
                      const attention::FusionParams* fusion_params);

struct RunOutput {
  std::vector<ImageResult> results;
  Summary summary;
};

// Runs every camera (subject to max_images) across cfg.threads workers;
// per-image seeds derive from (cfg.seed, image id), so the output is
// identical for any thread count. Writes results.jsonl / summary.json and
// optional similarity-map dumps when out_dir is set.
RunOutput run_pipeline(const SceneData& scene, const config::PipelineConfig& cfg,
                       const RunOptions& opts);

Summary summarize(const std::vector<ImageResult>& results, const config::PipelineConfig& cfg);

void write_results(const std::filesystem::path& path, const std::vector<ImageResult>& results);
void write_summary(const std::filesystem::path& path, const Summary& summary);
std::vector<ImageResult> read_results(const std::filesystem::path& path);

}  // namespace trafficloc::pipeline
