#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "trafficloc/grouping.hpp"
#include "trafficloc/matching.hpp"
#include "trafficloc/scenegen.hpp"
#include "trafficloc/types.hpp"

namespace trafficloc::io {

// Malformed or missing input data; the CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ASCII PLY, double-precision x y z vertices.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

// One JSON object per line: id, fx, fy, cx, cy, width, height,
// rotation (9 floats row-major), translation (3 floats).
void write_cameras(const std::filesystem::path& path,
                   const std::vector<scenegen::CameraRecord>& cameras);
std::vector<scenegen::CameraRecord> read_cameras(const std::filesystem::path& path);

// Text lines "point_index u v confidence".
void write_correspondences(const std::filesystem::path& path,
                           const matching::CorrespondenceSet& set);
matching::CorrespondenceSet read_correspondences(const std::filesystem::path& path);

struct ImageGray {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct ImageRgb {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

void write_pgm(const std::filesystem::path& path, const ImageGray& image);
void write_ppm(const std::filesystem::path& path, const ImageRgb& image);

// Similarity map rendered to 8-bit gray, [-1, 1] -> [0, 255] clamped.
ImageGray similarity_to_gray(const MatXf& values);

// Parameter blob: one JSON header line (tensor names + shapes, in file
// order), then the concatenated little-endian float32 payload.
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

}  // namespace trafficloc::io
