#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>

#include "trafficloc/config.hpp"
#include "trafficloc/gradcheck.hpp"
#include "trafficloc/io.hpp"
#include "trafficloc/kernels.hpp"
#include "trafficloc/pipeline.hpp"
#include "trafficloc/rng.hpp"
#include "trafficloc/scenegen.hpp"
#include "trafficloc/viz.hpp"

namespace fs = std::filesystem;
using namespace trafficloc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheckFailure = 3;

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Config file (key = value sections)");
  cmd->add_option("--seed", flags.seed, "Root seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  cmd->add_option("--out", flags.out_dir, "Output directory");
}

config::PipelineConfig make_config(const CommonFlags& flags) {
  config::PipelineConfig cfg;
  if (!flags.config_path.empty()) cfg = config::load_config(flags.config_path);
  if (flags.seed_set) cfg.seed = flags.seed;
  cfg.validate();
  return cfg;
}

scenegen::SceneSpec split_spec(bool train_split, int positions, const config::PipelineConfig& cfg) {
  scenegen::SceneSpec spec =
      train_split ? scenegen::SceneSpec::train_split() : scenegen::SceneSpec::test_split();
  if (positions > 0) {
    // --positions counts (xy, height) combinations; heights stay as the split
    // defines them, so the xy grid gets positions / heights entries.
    const int heights = static_cast<int>(spec.poses.heights_m.size());
    if (positions % heights != 0)
      throw io::DataError("--positions must be divisible by the split's height count (" +
                          std::to_string(heights) + ")");
    spec.poses.grid_positions =
        scenegen::make_position_grid(positions / heights, Vec2(0, 0), train_split ? 6.0 : 8.0);
  }
  spec.region = Box3{Vec3(-cfg.region_x / 2, -cfg.region_y / 2, 0.0),
                     Vec3(cfg.region_x / 2, cfg.region_y / 2, cfg.region_z)};
  spec.downsample_resolution = cfg.downsample_resolution;
  return spec;
}

int cmd_gen_scene(const CommonFlags& flags, bool train_split, int positions) {
  const config::PipelineConfig cfg = make_config(flags);
  const scenegen::SceneSpec spec = split_spec(train_split, positions, cfg);
  const scenegen::SceneBundle bundle = scenegen::generate_scene(cfg.seed, spec);

  fs::create_directories(flags.out_dir);
  io::write_ply(fs::path(flags.out_dir) / "scene.ply", bundle.cloud);
  io::write_cameras(fs::path(flags.out_dir) / "cameras.jsonl", bundle.cameras);

  const scenegen::VoxelPartition part =
      scenegen::partition_voxels(bundle.cloud, bundle.region, cfg.voxel_size, cfg.voxel_stride);
  std::ofstream meta(fs::path(flags.out_dir) / "meta.json");
  meta << "{\"points\": " << bundle.cloud.size() << ", \"cameras\": " << bundle.cameras.size()
       << ", \"voxels\": " << part.voxels.size() << "}\n";

  std::printf("scene: %d points, %zu cameras, %zu occupied voxels -> %s\n", bundle.cloud.size(),
              bundle.cameras.size(), part.voxels.size(), flags.out_dir.c_str());
  return kExitOk;
}

int cmd_synth_features(const CommonFlags& flags, const std::string& scene_dir, int image_id,
                       double noise) {
  const config::PipelineConfig cfg = make_config(flags);
  const pipeline::SceneData scene = pipeline::load_scene_dir(scene_dir, cfg);
  const scenegen::CameraRecord* rec = nullptr;
  for (const auto& r : scene.cameras)
    if (r.id == image_id) rec = &r;
  if (!rec) throw io::DataError("no camera with id " + std::to_string(image_id));

  const scenegen::OracleFeatures oracle = scenegen::synthesize_oracle_features(
      scene.cloud, scene.groups, rec->cam, rec->pose, scene.grid, noise,
      derive_seed(cfg.seed, 0x02, static_cast<std::uint64_t>(image_id)), cfg.coarse_channels,
      cfg.fine_channels);

  fs::create_directories(flags.out_dir);
  const auto tensor = [](const char* name, const MatXf& m) {
    io::NamedTensor t;
    t.name = name;
    t.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
    t.data.assign(m.data(), m.data() + m.size());
    return t;
  };
  io::write_tensors(fs::path(flags.out_dir) / "features.bin",
                    {tensor("coarse_image", oracle.features.coarse_image),
                     tensor("coarse_points", oracle.features.coarse_points),
                     tensor("fine_image", oracle.features.fine_image),
                     tensor("fine_points", oracle.features.fine_points)});
  io::write_correspondences(fs::path(flags.out_dir) / "gt_correspondences.txt",
                            oracle.ground_truth);
  std::printf("image %d: %zu ground-truth pairs, %zu in-frustum groups -> %s\n", image_id,
              oracle.ground_truth.size(),
              static_cast<std::size_t>(
                  std::count(oracle.in_frustum.begin(), oracle.in_frustum.end(), 1)),
              flags.out_dir.c_str());
  return kExitOk;
}

int cmd_pipeline(const CommonFlags& flags, const std::string& scene_dir, double noise,
                 double outlier_rate, bool bypass_fusion, bool dump_sim_maps, int threads,
                 int max_images) {
  config::PipelineConfig cfg = make_config(flags);
  if (bypass_fusion) cfg.bypass_fusion = true;
  if (threads > 0) cfg.threads = threads;

  const pipeline::SceneData scene = pipeline::load_scene_dir(scene_dir, cfg);
  pipeline::RunOptions opts;
  opts.noise_sigma = noise;
  opts.outlier_rate = outlier_rate;
  opts.dump_sim_maps = dump_sim_maps;
  opts.out_dir = flags.out_dir;
  opts.max_images = max_images;

  const pipeline::RunOutput run = pipeline::run_pipeline(scene, cfg, opts);
  const pipeline::Summary& s = run.summary;
  std::printf("%d images | RR %.2f%% | RRE median %.4f deg mean %.4f deg | "
              "RTE median %.4f m mean %.4f m | primary=%s (kernels: %s)\n",
              s.images, 100.0 * s.rr, s.rre_median, s.rre_mean, s.rte_median, s.rte_mean,
              s.primary_metric.c_str(), std::string(kernels::active_name()).c_str());
  return kExitOk;
}

int cmd_gradcheck(const CommonFlags& flags, const std::string& loss, int trials, double tolerance,
                  bool inject_bug) {
  bool all_pass = true;
  if (loss.empty() || loss == "all") {
    for (const auto& c : gradcheck::check_all(trials, tolerance, flags.seed, inject_bug)) {
      std::printf("%-5s trials=%-4d max_rel_err=%.3e tol=%.0e %s\n", c.name.c_str(), c.trials,
                  c.max_rel_error, c.tolerance, c.pass ? "PASS" : "FAIL");
      all_pass = all_pass && c.pass;
    }
  } else {
    // Single loss: per-trial table.
    std::printf("%-5s %8s  %s\n", "loss", "trial", "max_rel_err");
    for (int t = 0; t < trials; ++t) {
      const auto c = gradcheck::check_loss(loss, 1, tolerance,
                                           derive_seed(flags.seed, static_cast<std::uint64_t>(t)),
                                           inject_bug);
      std::printf("%-5s %8d  %.3e %s\n", c.name.c_str(), t, c.max_rel_error,
                  c.pass ? "PASS" : "FAIL");
      all_pass = all_pass && c.pass;
    }
  }
  return all_pass ? kExitOk : kExitCheckFailure;
}

int cmd_eval(const CommonFlags& flags, const std::string& results_path) {
  const config::PipelineConfig cfg = make_config(flags);
  const std::vector<pipeline::ImageResult> results = pipeline::read_results(results_path);
  if (results.empty()) throw io::DataError("no records in " + results_path);
  const pipeline::Summary s = pipeline::summarize(results, cfg);
  std::printf("%d images | RR %.2f%% | RRE %s %.4f deg | RTE %s %.4f m\n", s.images, 100.0 * s.rr,
              s.primary_metric.c_str(), s.primary_rre(), s.primary_metric.c_str(),
              s.primary_rte());
  return kExitOk;
}

int cmd_viz(const CommonFlags& flags, const std::string& scene_dir,
            const std::string& results_path, int max_images, double threshold) {
  const config::PipelineConfig cfg = make_config(flags);
  const pipeline::SceneData scene = pipeline::load_scene_dir(scene_dir, cfg);

  std::vector<pipeline::ImageResult> results;
  if (!results_path.empty()) results = pipeline::read_results(results_path);

  fs::create_directories(flags.out_dir);
  int rendered = 0;
  for (const scenegen::CameraRecord& rec : scene.cameras) {
    if (max_images >= 0 && rendered >= max_images) break;
    char name[64];
    std::snprintf(name, sizeof(name), "img%04d_depth.ppm", rec.id);
    io::write_ppm(fs::path(flags.out_dir) / name,
                  viz::render_depth(scene.cloud, rec.cam, rec.pose));

    if (!results.empty()) {
      const pipeline::ImageResult* match = nullptr;
      for (const auto& r : results)
        if (r.image_id == rec.id) match = &r;
      if (!match) {
        std::fprintf(stderr, "viz: no result record for image %d, skipping overlay\n", rec.id);
      } else {
        // Overlay reprojections of the predicted pose against ground truth.
        matching::CorrespondenceSet reproj;
        for (int g = 0; g < scene.groups.group_count(); ++g) {
          const geom::Projection p =
              geom::project(rec.cam, match->registration.pose, scene.groups.centers[g]);
          if (!p) continue;
          matching::Correspondence c;
          c.point_index = scene.groups.center_indices[g];
          c.point = scene.groups.centers[g];
          c.pixel = *p.pixel;
          reproj.push_back(c);
        }
        std::snprintf(name, sizeof(name), "img%04d_corr.ppm", rec.id);
        io::write_ppm(fs::path(flags.out_dir) / name,
                      viz::render_correspondences(scene.cloud, rec.cam, rec.pose, reproj,
                                                  threshold));
      }
    }
    ++rendered;
  }
  std::printf("rendered %d image(s) -> %s\n", rendered, flags.out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image-to-point-cloud registration toolkit for traffic-camera localization"};
  app.require_subcommand(1);

  CommonFlags common;

  auto* gen = app.add_subcommand("gen-scene", "Generate a procedural intersection scene");
  add_common(gen, common);
  bool train_split = false, test_split = false;
  int positions = 0;
  gen->add_flag("--train-split", train_split, "768-image training protocol");
  gen->add_flag("--test-split", test_split, "288-image testing protocol (default)");
  gen->add_option("--positions", positions, "Total (xy, height) position count");

  auto* synth = app.add_subcommand("synth-features", "Write oracle features for one image");
  add_common(synth, common);
  std::string scene_dir = "out";
  int image_id = 0;
  double noise = 0.0;
  synth->add_option("--scene", scene_dir, "Scene directory (gen-scene output)");
  synth->add_option("--image", image_id, "Camera id");
  synth->add_option("--noise", noise, "Descriptor noise sigma");

  auto* pipe = app.add_subcommand("pipeline", "Run the full registration chain per image");
  add_common(pipe, common);
  double outlier_rate = 0.0;
  bool bypass_fusion = false, dump_sim_maps = false;
  int threads = 0, max_images = -1;
  pipe->add_option("--scene", scene_dir, "Scene directory (gen-scene output)");
  pipe->add_option("--noise", noise, "Descriptor noise sigma");
  pipe->add_option("--outlier-rate", outlier_rate, "Fraction of corrupted group descriptors");
  pipe->add_flag("--bypass-fusion", bypass_fusion, "Feed oracle features straight to matching");
  pipe->add_flag("--dump-sim-maps", dump_sim_maps, "Write PGM similarity maps");
  pipe->add_option("--threads", threads, "Worker threads");
  pipe->add_option("--max-images", max_images, "Limit processed images");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference checks of the loss gradients");
  add_common(grad, common);
  std::string loss;
  int trials = 20;
  double tolerance = 1e-4;
  bool inject_bug = false;
  grad->add_option("--loss", loss, "gal|det|icl|dta|fine|all");
  grad->add_option("--trials", trials, "Trials per loss");
  grad->add_option("--tolerance", tolerance, "Max relative error");
  grad->add_flag("--inject-bug", inject_bug, "Flip analytic gradients (harness self-test)")
      ->group("");

  auto* ev = app.add_subcommand("eval", "Recompute summary metrics from results.jsonl");
  add_common(ev, common);
  std::string results_path = "out/results.jsonl";
  ev->add_option("--results", results_path, "results.jsonl path");

  auto* vz = app.add_subcommand("viz", "Render projections and correspondence overlays");
  add_common(vz, common);
  double viz_threshold = 4.0;
  int viz_max = 1;
  std::string viz_results;
  vz->add_option("--scene", scene_dir, "Scene directory (gen-scene output)");
  vz->add_option("--results", viz_results, "Optional results.jsonl for overlays");
  vz->add_option("--max-images", viz_max, "Images to render");
  vz->add_option("--threshold", viz_threshold, "Green/red reprojection threshold (px)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (train_split && test_split) {
        std::fprintf(stderr, "error: --train-split and --test-split are exclusive\n");
        return kExitUsage;
      }
      return cmd_gen_scene(common, train_split, positions);
    }
    if (synth->parsed()) return cmd_synth_features(common, scene_dir, image_id, noise);
    if (pipe->parsed())
      return cmd_pipeline(common, scene_dir, noise, outlier_rate, bypass_fusion, dump_sim_maps,
                          threads, max_images);
    if (grad->parsed()) return cmd_gradcheck(common, loss, trials, tolerance, inject_bug);
    if (ev->parsed()) return cmd_eval(common, results_path);
    if (vz->parsed()) return cmd_viz(common, scene_dir, viz_results, viz_max, viz_threshold);
  } catch (const io::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
