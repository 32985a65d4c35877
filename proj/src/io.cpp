#include "trafficloc/io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace trafficloc::io {
namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  return in;
}

// Shortest round-trip decimal formatting keeps files byte-stable.
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char shorter[32];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      std::sscanf(shorter, "%lf", &back);
      if (back == v) return shorter;
    }
  }
  return buf;
}

}  // namespace

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& p : cloud.points) {
    out << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' ' << fmt_double(p.z()) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t vertex_count = 0;
  bool header_done = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("element vertex", 0) == 0) {
      std::istringstream ss(line.substr(14));
      ss >> vertex_count;
    } else if (line == "end_header") {
      header_done = true;
      break;
    } else if (line.rfind("format", 0) == 0 && line.find("ascii") == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": only ascii PLY supported");
    }
  }
  if (!header_done) throw DataError(path.string() + ": missing PLY end_header");

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    ++line_no;
    if (!std::getline(in, line))
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": truncated vertex list");
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p.x() >> p.y() >> p.z()))
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
    cloud.points.push_back(p);
  }
  return cloud;
}

void write_cameras(const std::filesystem::path& path,
                   const std::vector<scenegen::CameraRecord>& cameras) {
  std::ofstream out = open_out(path);
  for (const scenegen::CameraRecord& rec : cameras) {
    json j;
    j["id"] = rec.id;
    j["fx"] = rec.cam.fx;
    j["fy"] = rec.cam.fy;
    j["cx"] = rec.cam.cx;
    j["cy"] = rec.cam.cy;
    j["width"] = rec.cam.width;
    j["height"] = rec.cam.height;
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot[r * 3 + c] = rec.pose.rotation(r, c);
    j["rotation"] = rot;
    j["translation"] = std::vector<double>{rec.pose.translation.x(), rec.pose.translation.y(),
                                           rec.pose.translation.z()};
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<scenegen::CameraRecord> read_cameras(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<scenegen::CameraRecord> cameras;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      scenegen::CameraRecord rec;
      rec.id = j.at("id").get<int>();
      rec.cam.fx = j.at("fx").get<double>();
      rec.cam.fy = j.at("fy").get<double>();
      rec.cam.cx = j.at("cx").get<double>();
      rec.cam.cy = j.at("cy").get<double>();
      rec.cam.width = j.at("width").get<int>();
      rec.cam.height = j.at("height").get<int>();
      const auto rot = j.at("rotation").get<std::vector<double>>();
      const auto tr = j.at("translation").get<std::vector<double>>();
      if (rot.size() != 9 || tr.size() != 3)
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": rotation/translation length mismatch");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rec.pose.rotation(r, c) = rot[r * 3 + c];
      rec.pose.translation = Vec3(tr[0], tr[1], tr[2]);
      cameras.push_back(rec);
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cameras;
}

void write_correspondences(const std::filesystem::path& path,
                           const matching::CorrespondenceSet& set) {
  std::ofstream out = open_out(path);
  for (const matching::Correspondence& c : set) {
    out << c.point_index << ' ' << fmt_double(c.pixel.x()) << ' ' << fmt_double(c.pixel.y()) << ' '
        << fmt_double(c.confidence) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

matching::CorrespondenceSet read_correspondences(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  matching::CorrespondenceSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    matching::Correspondence c;
    if (!(ss >> c.point_index >> c.pixel.x() >> c.pixel.y() >> c.confidence))
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 'point_index u v confidence'");
    set.push_back(c);
  }
  return set;
}

void write_pgm(const std::filesystem::path& path, const ImageGray& image) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

void write_ppm(const std::filesystem::path& path, const ImageRgb& image) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

ImageGray similarity_to_gray(const MatXf& values) {
  ImageGray img;
  img.width = static_cast<int>(values.cols());
  img.height = static_cast<int>(values.rows());
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = std::clamp((static_cast<double>(values(r, c)) + 1.0) / 2.0, 0.0, 1.0);
      img.pixels[static_cast<std::size_t>(r) * img.width + c] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  json header = json::array();
  for (const NamedTensor& t : tensors) {
    std::size_t expect = 1;
    for (int d : t.shape) expect *= static_cast<std::size_t>(d);
    if (expect != t.data.size())
      throw DataError("tensor '" + t.name + "': shape does not match data size");
    header.push_back({{"name", t.name}, {"shape", t.shape}});
  }
  std::ofstream out = open_out(path, std::ios::binary);
  out << header.dump() << '\n';
  for (const NamedTensor& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError(path.string() + ": missing tensor header");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ":1: " + e.what());
  }
  std::vector<NamedTensor> tensors;
  for (const auto& entry : header) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<int>>();
    std::size_t count = 1;
    for (int d : t.shape) count *= static_cast<std::size_t>(d);
    t.data.resize(count);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
      throw DataError(path.string() + ": truncated tensor payload for '" + t.name + "'");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace trafficloc::io
