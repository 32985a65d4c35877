#include "trafficloc/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "trafficloc/io.hpp"

namespace trafficloc::config {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

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

// Typed binding of "section.key" to a config field.
struct Binder {
  std::function<void(PipelineConfig&, const std::string&, int line)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
T parse_value(const std::string& text, int line);

template <typename Convert>
auto convert_or_throw(Convert&& convert, const std::string& text, int line, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = convert(text, &used);
    if (used != text.size())
      throw io::DataError("config line " + std::to_string(line) + ": expected " + what);
    return v;
  } catch (const io::DataError&) {
    throw;
  } catch (const std::exception&) {
    throw io::DataError("config line " + std::to_string(line) + ": expected " + what);
  }
}

template <>
int parse_value<int>(const std::string& text, int line) {
  return convert_or_throw([](const std::string& s, std::size_t* used) { return std::stoi(s, used); },
                          text, line, "integer");
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& text, int line) {
  return convert_or_throw(
      [](const std::string& s, std::size_t* used) { return std::stoull(s, used); }, text, line,
      "unsigned integer");
}

template <>
double parse_value<double>(const std::string& text, int line) {
  return convert_or_throw([](const std::string& s, std::size_t* used) { return std::stod(s, used); },
                          text, line, "number");
}

template <>
bool parse_value<bool>(const std::string& text, int line) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw io::DataError("config line " + std::to_string(line) + ": expected true or false");
}

template <>
std::string parse_value<std::string>(const std::string& text, int) {
  return text;
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
  else if constexpr (std::is_same_v<T, double>) return fmt_double(v);
  else if constexpr (std::is_same_v<T, std::string>) return v;
  else return std::to_string(v);
}

template <typename T>
Binder field(T PipelineConfig::* member) {
  return Binder{
      [member](PipelineConfig& cfg, const std::string& text, int line) {
        cfg.*member = parse_value<T>(text, line);
      },
      [member](const PipelineConfig& cfg) { return format_value(cfg.*member); },
  };
}

template <typename Sub, typename T>
Binder field(Sub PipelineConfig::* sub, T Sub::* member) {
  return Binder{
      [sub, member](PipelineConfig& cfg, const std::string& text, int line) {
        (cfg.*sub).*member = parse_value<T>(text, line);
      },
      [sub, member](const PipelineConfig& cfg) { return format_value((cfg.*sub).*member); },
  };
}

// Ordered schema; serialization follows this order exactly.
const std::vector<std::pair<std::string, Binder>>& schema() {
  static const std::vector<std::pair<std::string, Binder>> entries = {
      {"pipeline.input_width", field(&PipelineConfig::input_width)},
      {"pipeline.input_height", field(&PipelineConfig::input_height)},
      {"pipeline.point_count", field(&PipelineConfig::point_count)},
      {"pipeline.group_count", field(&PipelineConfig::group_count)},
      {"pipeline.patch_size", field(&PipelineConfig::patch_size)},
      {"pipeline.coarse_channels", field(&PipelineConfig::coarse_channels)},
      {"pipeline.fine_channels", field(&PipelineConfig::fine_channels)},
      {"pipeline.coarse_temperature", field(&PipelineConfig::coarse_temperature)},
      {"pipeline.fine_temperature", field(&PipelineConfig::fine_temperature)},
      {"pipeline.soft_argmax_window", field(&PipelineConfig::soft_argmax_window)},
      {"pipeline.superpoint_threshold", field(&PipelineConfig::superpoint_threshold)},
      {"pipeline.bypass_fusion", field(&PipelineConfig::bypass_fusion)},
      {"pipeline.threads", field(&PipelineConfig::threads)},
      {"pipeline.seed", field(&PipelineConfig::seed)},
      {"fusion.blocks", field(&PipelineConfig::fusion, &attention::FusionConfig::n_blocks)},
      {"fusion.heads", field(&PipelineConfig::fusion, &attention::FusionConfig::n_heads)},
      {"fusion.channels", field(&PipelineConfig::fusion, &attention::FusionConfig::channels)},
      {"fusion.latent_dim", field(&PipelineConfig::fusion, &attention::FusionConfig::latent_dim)},
      {"fusion.per_head_gal", field(&PipelineConfig::fusion, &attention::FusionConfig::per_head_gal)},
      {"gal.theta_low_deg", field(&PipelineConfig::gal, &attention::GalConfig::theta_low_deg)},
      {"gal.theta_up_deg", field(&PipelineConfig::gal, &attention::GalConfig::theta_up_deg)},
      {"gal.d_low_m", field(&PipelineConfig::gal, &attention::GalConfig::d_low_m)},
      {"gal.d_up_m", field(&PipelineConfig::gal, &attention::GalConfig::d_up_m)},
      {"loss.gamma", field(&PipelineConfig::loss, &matching::LossConfig::gamma)},
      {"loss.m_p", field(&PipelineConfig::loss, &matching::LossConfig::m_p)},
      {"loss.m_n", field(&PipelineConfig::loss, &matching::LossConfig::m_n)},
      {"loss.safe_radius", field(&PipelineConfig::loss, &matching::LossConfig::safe_radius)},
      {"loss.kappa", field(&PipelineConfig::loss, &matching::LossConfig::kappa)},
      {"loss.fine_window", field(&PipelineConfig::loss, &matching::LossConfig::fine_window)},
      {"loss.lambda_att", field(&PipelineConfig::loss, &matching::LossConfig::lambda_att)},
      {"loss.lambda_det", field(&PipelineConfig::loss, &matching::LossConfig::lambda_det)},
      {"loss.lambda_coarse", field(&PipelineConfig::loss, &matching::LossConfig::lambda_coarse)},
      {"loss.lambda_fine", field(&PipelineConfig::loss, &matching::LossConfig::lambda_fine)},
      {"loss.circle_mode", field(&PipelineConfig::loss, &matching::LossConfig::circle_mode)},
      {"loss.circle_margin", field(&PipelineConfig::loss, &matching::LossConfig::circle_margin)},
      {"ransac.max_iterations", field(&PipelineConfig::ransac, &pose::RansacConfig::max_iterations)},
      {"ransac.reprojection_threshold_px",
       field(&PipelineConfig::ransac, &pose::RansacConfig::reprojection_threshold)},
      {"ransac.min_inliers", field(&PipelineConfig::ransac, &pose::RansacConfig::min_inliers)},
      {"ransac.seed", field(&PipelineConfig::ransac, &pose::RansacConfig::seed)},
      {"ransac.refine_focal", field(&PipelineConfig::ransac, &pose::RansacConfig::refine_focal)},
      {"ransac.confidence", field(&PipelineConfig::ransac, &pose::RansacConfig::confidence)},
      {"eval.tau_r_deg", field(&PipelineConfig::eval, &pose::EvalConfig::tau_r_deg)},
      {"eval.tau_t_m", field(&PipelineConfig::eval, &pose::EvalConfig::tau_t_m)},
      {"eval.primary_metric", field(&PipelineConfig::primary_metric)},
      {"scene.region_x", field(&PipelineConfig::region_x)},
      {"scene.region_y", field(&PipelineConfig::region_y)},
      {"scene.region_z", field(&PipelineConfig::region_z)},
      {"scene.downsample_resolution", field(&PipelineConfig::downsample_resolution)},
      {"scene.voxel_size", field(&PipelineConfig::voxel_size)},
      {"scene.voxel_stride", field(&PipelineConfig::voxel_stride)},
  };
  return entries;
}

}  // namespace

void PipelineConfig::validate() const {
  if (input_width % patch_size != 0 || input_height % patch_size != 0)
    throw std::invalid_argument("PipelineConfig: patch size must divide input size");
  if (point_count < group_count)
    throw std::invalid_argument("PipelineConfig: point_count must be >= group_count");
  if (threads < 1) throw std::invalid_argument("PipelineConfig: threads must be >= 1");
  if (primary_metric != "median" && primary_metric != "mean")
    throw std::invalid_argument("PipelineConfig: primary_metric must be median or mean");
  if (!(coarse_temperature > 0 && fine_temperature > 0))
    throw std::invalid_argument("PipelineConfig: temperatures must be > 0");
  fusion.validate();
  gal.validate();
  loss.validate();
  ransac.validate();
  eval.validate();
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::map<std::string, const Binder*> by_key;
  for (const auto& [key, binder] : schema()) by_key[key] = &binder;

  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw io::DataError("config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw io::DataError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end())
      throw io::DataError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                          "'");
    it->second->set(cfg, value, line_no);
  }
  return cfg;
}

std::string serialize_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, binder] : schema()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << binder.get(cfg) << '\n';
  }
  return out.str();
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io::DataError("cannot open config: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace trafficloc::config
