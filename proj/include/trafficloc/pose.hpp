#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trafficloc/geom.hpp"
#include "trafficloc/matching.hpp"
#include "trafficloc/types.hpp"

namespace trafficloc::pose {

struct RansacConfig {
  int max_iterations = 1000;
  double reprojection_threshold = 4.0;  // pixels
  int min_inliers = 6;
  std::uint64_t seed = 0;
  bool refine_focal = false;
  double confidence = 0.999;  // adaptive early-stop target

  void validate() const {
    if (max_iterations < 1) throw std::invalid_argument("RansacConfig: max_iterations >= 1");
    if (!(reprojection_threshold > 0))
      throw std::invalid_argument("RansacConfig: reprojection threshold must be > 0");
    if (min_inliers < 4) throw std::invalid_argument("RansacConfig: min_inliers >= 4");
    if (!(confidence > 0 && confidence < 1))
      throw std::invalid_argument("RansacConfig: confidence in (0, 1)");
  }
};

struct EvalConfig {
  double tau_r_deg = 10.0;
  double tau_t_m = 5.0;

  void validate() const {
    if (!(tau_r_deg > 0 && tau_t_m > 0))
      throw std::invalid_argument("EvalConfig: thresholds must be > 0");
  }
};

struct RegistrationResult {
  geom::Pose pose;
  std::vector<int> inlier_ids;  // indices into the input correspondence set
  double rre_deg = std::numeric_limits<double>::quiet_NaN();
  double rte_m = std::numeric_limits<double>::quiet_NaN();
  bool success = false;
  bool solver_converged = false;  // enough inliers were found
};

// EPnP: 4 control points (3 for planar configurations), barycentric
// coordinates, nullspace of the 2n x 12 system, beta-case selection with a
// Gauss-Newton polish on the control-point distances, rotation recovered by
// Procrustes alignment. Throws on fewer than 4 pairs or collinear points.
geom::Pose epnp(std::span<const matching::Correspondence> correspondences,
                const geom::CameraModel& cam);

double reprojection_error(const geom::CameraModel& cam, const geom::Pose& pose,
                          const matching::Correspondence& c);

// Hypothesize-and-verify loop over 4-point samples. Per-iteration RNG streams
// derive from (seed, iteration), so the result does not depend on execution
// order. Best hypothesis by inlier count, ties by total inlier error, then by
// iteration index; the final pose is re-estimated on the inlier set until the
// set is a fixed point.
RegistrationResult epnp_ransac(const matching::CorrespondenceSet& correspondences,
                               const geom::CameraModel& cam, const RansacConfig& cfg);

struct FocalRefineResult {
  geom::CameraModel cam;
  geom::Pose pose;
  bool improved = false;
};

// Golden-section search over a shared focal scale in [0.5, 2.0], re-running
// EPnP per candidate; returns the inputs unchanged when nothing improves or
// when fewer than 6 inliers are given.
FocalRefineResult refine_focal(const matching::CorrespondenceSet& inliers,
                               const geom::CameraModel& cam, const geom::Pose& pose);

// (RRE in degrees, RTE in meters). RRE sums the absolute intrinsic-XYZ Euler
// angles of gt_R^-1 * pred_R.
std::pair<double, double> registration_errors(const geom::Pose& pred, const geom::Pose& gt);

// Fills rre/rte/success from the ground truth (strict thresholds).
void evaluate_result(RegistrationResult& result, const geom::Pose& gt, const EvalConfig& cfg);

// Fraction of results with rre < tau_r and rte < tau_t; throws on empty input.
double registration_recall(const std::vector<RegistrationResult>& results,
                           const EvalConfig& cfg);

}  // namespace trafficloc::pose
