#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"
#include "trafficloc/config.hpp"
#include "trafficloc/io.hpp"
#include "trafficloc/scenegen.hpp"

using namespace trafficloc;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("config round trip: parse(serialize(cfg)) reproduces every value") {
  config::PipelineConfig cfg;
  cfg.seed = 424242;
  cfg.coarse_temperature = 0.0375;
  cfg.bypass_fusion = true;
  cfg.loss.m_n = 0.45;
  cfg.loss.circle_mode = true;
  cfg.ransac.max_iterations = 321;
  cfg.eval.tau_t_m = 2.5;
  cfg.primary_metric = "mean";
  cfg.gal.theta_up_deg = 21.5;

  const std::string text = config::serialize_config(cfg);
  const config::PipelineConfig back = config::parse_config(text);
  CHECK(config::serialize_config(back) == text);
  CHECK(back.seed == cfg.seed);
  CHECK(back.coarse_temperature == cfg.coarse_temperature);
  CHECK(back.bypass_fusion == cfg.bypass_fusion);
  CHECK(back.loss.m_n == cfg.loss.m_n);
  CHECK(back.loss.circle_mode == cfg.loss.circle_mode);
  CHECK(back.ransac.max_iterations == cfg.ransac.max_iterations);
  CHECK(back.eval.tau_t_m == cfg.eval.tau_t_m);
  CHECK(back.primary_metric == cfg.primary_metric);
  CHECK(back.gal.theta_up_deg == cfg.gal.theta_up_deg);
}

TEST_CASE("config parser diagnostics carry line numbers") {
  CHECK_THROWS_WITH_AS(config::parse_config("[pipeline]\nbogus_key = 1\n"),
                       doctest::Contains("line 2"), io::DataError);
  CHECK_THROWS_WITH_AS(config::parse_config("[pipeline]\nthreads equals 2\n"),
                       doctest::Contains("line 2"), io::DataError);
  CHECK_THROWS_WITH_AS(config::parse_config("[pipeline\nthreads = 2\n"),
                       doctest::Contains("line 1"), io::DataError);
  CHECK_THROWS_WITH_AS(config::parse_config("[pipeline]\nthreads = banana\n"),
                       doctest::Contains("line 2"), io::DataError);
}

TEST_CASE("config comments and blank lines are ignored") {
  const config::PipelineConfig cfg =
      config::parse_config("# heading\n\n[pipeline]\nthreads = 4  # inline\n");
  CHECK(cfg.threads == 4);
}

TEST_CASE("config validation rejects inconsistent values") {
  config::PipelineConfig cfg;
  cfg.patch_size = 15;  // does not divide 512
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = config::PipelineConfig{};
  cfg.primary_metric = "mode";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("ply round trip preserves double coordinates exactly") {
  Rng rng(101);
  PointCloud cloud;
  for (int i = 0; i < 257; ++i) {
    cloud.points.emplace_back(rng.uniform(-100, 100), rng.uniform(-100, 100),
                              rng.uniform(-5, 55));
  }
  const fs::path path = temp_file("tl_test_cloud.ply");
  io::write_ply(path, cloud);
  const PointCloud back = io::read_ply(path);
  REQUIRE(back.size() == cloud.size());
  for (int i = 0; i < cloud.size(); ++i) CHECK(back.points[i] == cloud.points[i]);
  fs::remove(path);
}

TEST_CASE("ply reader reports malformed vertices with line numbers") {
  const fs::path path = temp_file("tl_bad.ply");
  std::ofstream(path) << "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\n"
                         "property double y\nproperty double z\nend_header\n1 2 3\nnot a vertex\n";
  CHECK_THROWS_WITH_AS(io::read_ply(path), doctest::Contains(":9"), io::DataError);
  fs::remove(path);
  CHECK_THROWS_AS(io::read_ply(temp_file("tl_missing.ply")), io::DataError);
}

TEST_CASE("camera records round trip") {
  Rng rng(102);
  std::vector<scenegen::CameraRecord> cams;
  for (int i = 0; i < 5; ++i) {
    scenegen::CameraRecord rec;
    rec.id = i;
    rec.cam = geom::CameraModel{960, 960, 960, 540, 1920, 1080};
    rec.pose = oracle::random_pose(rng);
    cams.push_back(rec);
  }
  const fs::path path = temp_file("tl_cams.jsonl");
  io::write_cameras(path, cams);
  const auto back = io::read_cameras(path);
  REQUIRE(back.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].id == cams[i].id);
    CHECK(back[i].cam.fx == cams[i].cam.fx);
    CHECK(back[i].pose.rotation == cams[i].pose.rotation);
    CHECK(back[i].pose.translation == cams[i].pose.translation);
  }
  fs::remove(path);
}

TEST_CASE("camera reader reports the offending line") {
  const fs::path path = temp_file("tl_cams_bad.jsonl");
  std::ofstream(path) << R"({"id":0,"fx":960,"fy":960,"cx":960,"cy":540,"width":1920,)"
                      << R"("height":1080,"rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0]})"
                      << "\n{broken\n";
  CHECK_THROWS_WITH_AS(io::read_cameras(path), doctest::Contains(":2"), io::DataError);
  fs::remove(path);
}

TEST_CASE("correspondence files round trip") {
  matching::CorrespondenceSet set;
  set.push_back({7, Vec3::Zero(), Vec2(123.25, 45.5), 0.875});
  set.push_back({9, Vec3::Zero(), Vec2(0.0, 287.0), 1.0});
  const fs::path path = temp_file("tl_corr.txt");
  io::write_correspondences(path, set);
  const auto back = io::read_correspondences(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].point_index == 7);
  CHECK(back[0].pixel == set[0].pixel);
  CHECK(back[0].confidence == set[0].confidence);
  fs::remove(path);
}

TEST_CASE("pgm and ppm writers emit exact binary headers and payloads") {
  io::ImageGray gray;
  gray.width = 3;
  gray.height = 2;
  gray.pixels = {0, 128, 255, 10, 20, 30};
  const fs::path gpath = temp_file("tl_test.pgm");
  io::write_pgm(gpath, gray);
  std::ifstream in(gpath, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content == std::string("P5\n3 2\n255\n") + std::string("\x00\x80\xff\x0a\x14\x1e", 6));
  fs::remove(gpath);

  io::ImageRgb rgb;
  rgb.width = 1;
  rgb.height = 1;
  rgb.pixels = {1, 2, 3};
  const fs::path cpath = temp_file("tl_test.ppm");
  io::write_ppm(cpath, rgb);
  std::ifstream cin2(cpath, std::ios::binary);
  std::string ccontent((std::istreambuf_iterator<char>(cin2)), std::istreambuf_iterator<char>());
  CHECK(ccontent == std::string("P6\n1 1\n255\n") + std::string("\x01\x02\x03", 3));
  fs::remove(cpath);
}

TEST_CASE("similarity-to-gray maps [-1, 1] onto [0, 255]") {
  MatXf values(1, 3);
  values << -1.0f, 0.0f, 1.0f;
  const io::ImageGray img = io::similarity_to_gray(values);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 128, 255});
}

TEST_CASE("tensor blob header mismatch is rejected") {
  io::NamedTensor t;
  t.name = "w";
  t.shape = {2, 3};
  t.data.assign(5, 0.0f);  // wrong size
  CHECK_THROWS_AS(io::write_tensors(temp_file("tl_tensors.bin"), {t}), io::DataError);
}

TEST_CASE("truncated tensor payload is detected") {
  const fs::path path = temp_file("tl_trunc.bin");
  std::ofstream(path) << R"([{"name":"w","shape":[4]}])" << "\nXX";
  CHECK_THROWS_WITH_AS(io::read_tensors(path), doctest::Contains("truncated"), io::DataError);
  fs::remove(path);
}
