#include "trafficloc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "trafficloc/io.hpp"
#include "trafficloc/rng.hpp"

namespace trafficloc::pipeline {
namespace {

using nlohmann::json;

// Seed stream tags.
constexpr std::uint64_t kTagSubsample = 0x01;
constexpr std::uint64_t kTagOracle = 0x02;
constexpr std::uint64_t kTagOutliers = 0x03;
constexpr std::uint64_t kTagRansac = 0x04;
constexpr std::uint64_t kTagFusion = 0x05;

PointCloud subsample_cloud(const PointCloud& cloud, int target, std::uint64_t seed) {
  if (cloud.size() <= target) return cloud;
  Rng rng(seed);
  const std::vector<int> picks = rng.sample_without_replacement(cloud.size(), target);
  std::vector<int> sorted = picks;
  std::sort(sorted.begin(), sorted.end());
  PointCloud out;
  out.points.reserve(target);
  for (int i : sorted) out.points.push_back(cloud.points[i]);
  return out;
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

SceneData prepare_scene(const scenegen::SceneBundle& bundle, const config::PipelineConfig& cfg) {
  cfg.validate();
  if (bundle.cloud.size() < cfg.group_count)
    throw std::invalid_argument("prepare_scene: cloud smaller than the group count");

  SceneData scene;
  scene.cloud = subsample_cloud(bundle.cloud, cfg.point_count, derive_seed(cfg.seed, kTagSubsample));
  scene.groups = grouping::farthest_point_sampling(scene.cloud, cfg.group_count, 0);
  scene.grid = grouping::PatchGrid::create(cfg.input_width, cfg.input_height, cfg.patch_size);
  scene.region = bundle.region;
  scene.cameras.reserve(bundle.cameras.size());
  for (const scenegen::CameraRecord& rec : bundle.cameras) {
    scenegen::CameraRecord scaled = rec;
    scaled.cam = geom::scale_camera(rec.cam, cfg.input_width, cfg.input_height);
    scene.cameras.push_back(scaled);
  }
  return scene;
}

SceneData load_scene_dir(const std::filesystem::path& dir, const config::PipelineConfig& cfg) {
  scenegen::SceneBundle bundle;
  bundle.cloud = io::read_ply(dir / "scene.ply");
  bundle.cameras = io::read_cameras(dir / "cameras.jsonl");
  bundle.region = Box3{Vec3(-cfg.region_x / 2, -cfg.region_y / 2, 0.0),
                       Vec3(cfg.region_x / 2, cfg.region_y / 2, cfg.region_z)};
  return prepare_scene(bundle, cfg);
}

ImageResult run_image(const SceneData& scene, int camera_index,
                      const config::PipelineConfig& cfg, const RunOptions& opts,
                      const attention::FusionParams* fusion_params) {
  const scenegen::CameraRecord& rec = scene.cameras.at(camera_index);
  ImageResult out;
  out.image_id = rec.id;

  const std::uint64_t image_seed =
      derive_seed(cfg.seed, kTagOracle, static_cast<std::uint64_t>(rec.id));
  scenegen::OracleFeatures oracle;
  try {
    oracle = scenegen::synthesize_oracle_features(scene.cloud, scene.groups, rec.cam, rec.pose,
                                                  scene.grid, opts.noise_sigma, image_seed,
                                                  cfg.coarse_channels, cfg.fine_channels);
  } catch (const std::invalid_argument&) {
    pose::evaluate_result(out.registration, rec.pose, cfg.eval);
    return out;  // nothing visible: solver failure with identity pose
  }

  // Descriptor outlier injection over the claimed groups.
  if (opts.outlier_rate > 0.0 && !oracle.claimed_groups.empty()) {
    Rng rng(derive_seed(cfg.seed, kTagOutliers, static_cast<std::uint64_t>(rec.id)));
    const int k = static_cast<int>(
        std::lround(opts.outlier_rate * static_cast<double>(oracle.claimed_groups.size())));
    const int claimed = static_cast<int>(oracle.claimed_groups.size());
    const std::vector<int> picks = rng.sample_without_replacement(claimed, std::min(k, claimed));
    for (int pick : picks) {
      const int g = oracle.claimed_groups[pick];
      rng.unit_vector(oracle.features.coarse_points.row(g).data(), cfg.coarse_channels);
      rng.unit_vector(oracle.features.fine_points.row(scene.groups.center_indices[g]).data(),
                      cfg.fine_channels);
      out.injected_outliers.push_back(scene.groups.center_indices[g]);
    }
  }

  matching::FeatureSet features = std::move(oracle.features);

  if (fusion_params) {
    // Normalized group coordinates for the positional embedding.
    MatXd unit_cube(scene.groups.group_count(), 3);
    const Vec3 extent = scene.region.extent();
    for (int g = 0; g < scene.groups.group_count(); ++g) {
      const Vec3 rel = scene.groups.centers[g] - scene.region.min;
      unit_cube(g, 0) = rel.x() / extent.x();
      unit_cube(g, 1) = rel.y() / extent.y();
      unit_cube(g, 2) = rel.z() / extent.z();
    }
    attention::FusionResult fused =
        attention::fusion_forward(features.coarse_image, features.coarse_points, scene.grid,
                                  unit_cube, *fusion_params, cfg.fusion);
    const attention::GalMasks masks =
        attention::gal_masks(rec.cam, rec.pose, scene.grid, scene.groups.centers, cfg.gal);
    out.attention_loss = attention::gal_loss(fused.att_i2p, fused.att_p2i, masks).loss;
    out.fusion_ran = true;
    features.coarse_image = std::move(fused.image);
    features.coarse_points = std::move(fused.points);
    matching::normalize_features(features);
  }

  // Oracle detection head: scores equal the geometric labels.
  std::vector<double> scores(scene.groups.group_count(), 0.0);
  for (int g = 0; g < scene.groups.group_count(); ++g)
    scores[g] = oracle.in_frustum[g] ? 1.0 : 0.0;
  const matching::SuperpointFilterResult filter = matching::superpoint_filter(
      scores, cfg.superpoint_threshold, rec.cam, rec.pose, scene.groups.centers);
  out.kept_groups = static_cast<int>(filter.kept.size());
  if (filter.kept.empty()) {
    pose::evaluate_result(out.registration, rec.pose, cfg.eval);
    return out;
  }

  const matching::CorrespondenceSet coarse =
      matching::coarse_match(features, filter.kept, scene.groups, scene.grid,
                             cfg.coarse_temperature, cfg.soft_argmax_window);

  if (opts.dump_sim_maps && !opts.out_dir.empty()) {
    const MatXf sims =
        matching::cosine_similarity_matrix(features.coarse_points, features.coarse_image);
    std::filesystem::create_directories(opts.out_dir / "simmaps");
    const int dump_count = std::min<int>(4, static_cast<int>(filter.kept.size()));
    for (int i = 0; i < dump_count; ++i) {
      const int g = filter.kept[i];
      MatXf map(scene.grid.rows, scene.grid.cols);
      for (int r = 0; r < scene.grid.rows; ++r)
        for (int c = 0; c < scene.grid.cols; ++c) map(r, c) = sims(g, scene.grid.flat(r, c));
      char name[64];
      std::snprintf(name, sizeof(name), "img%04d_group%04d.pgm", rec.id, g);
      io::write_pgm(opts.out_dir / "simmaps" / name, io::similarity_to_gray(map));
    }
  }

  const matching::FineMatchResult fine =
      matching::fine_match(features, coarse, cfg.loss.fine_window, cfg.fine_temperature,
                           cfg.input_width, cfg.input_height);
  out.fine_skipped = fine.skipped;
  out.correspondences = static_cast<int>(fine.correspondences.size());

  if (out.correspondences < 4) {
    pose::evaluate_result(out.registration, rec.pose, cfg.eval);
    return out;
  }

  pose::RansacConfig ransac_cfg = cfg.ransac;
  ransac_cfg.seed = derive_seed(cfg.seed, kTagRansac, static_cast<std::uint64_t>(rec.id));
  out.registration = pose::epnp_ransac(fine.correspondences, rec.cam, ransac_cfg);

  if (cfg.ransac.refine_focal && out.registration.solver_converged) {
    matching::CorrespondenceSet inliers;
    inliers.reserve(out.registration.inlier_ids.size());
    for (int i : out.registration.inlier_ids) inliers.push_back(fine.correspondences[i]);
    const pose::FocalRefineResult refined =
        pose::refine_focal(inliers, rec.cam, out.registration.pose);
    if (refined.improved) out.registration.pose = refined.pose;
  }

  pose::evaluate_result(out.registration, rec.pose, cfg.eval);

  for (int inl : out.registration.inlier_ids) {
    const int pt = fine.correspondences[inl].point_index;
    if (std::find(out.injected_outliers.begin(), out.injected_outliers.end(), pt) !=
        out.injected_outliers.end())
      ++out.injected_in_inliers;
  }
  return out;
}

RunOutput run_pipeline(const SceneData& scene, const config::PipelineConfig& cfg,
                       const RunOptions& opts) {
  cfg.validate();
  const int total = opts.max_images >= 0
                        ? std::min<int>(opts.max_images, static_cast<int>(scene.cameras.size()))
                        : static_cast<int>(scene.cameras.size());

  std::optional<attention::FusionParams> params;
  if (!cfg.bypass_fusion)
    params = attention::random_fusion_params(cfg.fusion, derive_seed(cfg.seed, kTagFusion));
  const attention::FusionParams* params_ptr = params ? &*params : nullptr;

  RunOutput out;
  out.results.resize(total);
  std::atomic<int> next{0};
  const int workers = std::max(1, std::min(cfg.threads, total));
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= total) return;
        try {
          out.results[i] = run_image(scene, i, cfg, opts, params_ptr);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  out.summary = summarize(out.results, cfg);
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    write_results(opts.out_dir / "results.jsonl", out.results);
    write_summary(opts.out_dir / "summary.json", out.summary);
  }
  return out;
}

Summary summarize(const std::vector<ImageResult>& results, const config::PipelineConfig& cfg) {
  Summary s;
  s.images = static_cast<int>(results.size());
  s.primary_metric = cfg.primary_metric;
  if (results.empty()) return s;

  std::vector<double> rre, rte;
  int ok = 0;
  for (const ImageResult& r : results) {
    rre.push_back(r.registration.rre_deg);
    rte.push_back(r.registration.rte_m);
    if (r.registration.success) ++ok;
  }
  s.rr = static_cast<double>(ok) / results.size();
  s.rre_median = median_of(rre);
  s.rte_median = median_of(rte);
  for (double v : rre) s.rre_mean += v;
  for (double v : rte) s.rte_mean += v;
  s.rre_mean /= results.size();
  s.rte_mean /= results.size();
  return s;
}

void write_results(const std::filesystem::path& path, const std::vector<ImageResult>& results) {
  std::ofstream out(path);
  if (!out) throw io::DataError("cannot open for writing: " + path.string());
  for (const ImageResult& r : results) {
    json j;
    j["image_id"] = r.image_id;
    std::vector<double> rot(9);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) rot[a * 3 + b] = r.registration.pose.rotation(a, b);
    j["rotation"] = rot;
    j["translation"] =
        std::vector<double>{r.registration.pose.translation.x(),
                            r.registration.pose.translation.y(),
                            r.registration.pose.translation.z()};
    j["rre"] = r.registration.rre_deg;
    j["rte"] = r.registration.rte_m;
    j["inliers"] = static_cast<int>(r.registration.inlier_ids.size());
    j["success"] = r.registration.success;
    out << j.dump() << '\n';
  }
  if (!out) throw io::DataError("write failed: " + path.string());
}

void write_summary(const std::filesystem::path& path, const Summary& s) {
  json j;
  j["images"] = s.images;
  j["rr"] = s.rr;
  j["rre_median"] = s.rre_median;
  j["rre_mean"] = s.rre_mean;
  j["rte_median"] = s.rte_median;
  j["rte_mean"] = s.rte_mean;
  j["primary_metric"] = s.primary_metric;
  j["rre"] = s.primary_rre();
  j["rte"] = s.primary_rte();
  std::ofstream out(path);
  if (!out) throw io::DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw io::DataError("write failed: " + path.string());
}

std::vector<ImageResult> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io::DataError("cannot open for reading: " + path.string());
  std::vector<ImageResult> results;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw io::DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      ImageResult r;
      r.image_id = j.at("image_id").get<int>();
      const auto rot = j.at("rotation").get<std::vector<double>>();
      const auto tr = j.at("translation").get<std::vector<double>>();
      if (rot.size() != 9 || tr.size() != 3)
        throw io::DataError(path.string() + ":" + std::to_string(line_no) +
                            ": rotation/translation length mismatch");
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r.registration.pose.rotation(a, b) = rot[a * 3 + b];
      r.registration.pose.translation = Vec3(tr[0], tr[1], tr[2]);
      r.registration.rre_deg = j.at("rre").get<double>();
      r.registration.rte_m = j.at("rte").get<double>();
      r.registration.success = j.at("success").get<bool>();
      r.registration.inlier_ids.resize(j.at("inliers").get<int>());
      results.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw io::DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return results;
}

}  // namespace trafficloc::pipeline
