#pragma once

#include "trafficloc/geom.hpp"
#include "trafficloc/io.hpp"
#include "trafficloc/matching.hpp"

namespace trafficloc::viz {

// Point cloud projected with a z-buffer, colored by depth (near red, far
// blue). Black where nothing projects.
io::ImageRgb render_depth(const PointCloud& cloud, const geom::CameraModel& cam,
                          const geom::Pose& pose);

// Correspondence overlay on a dimmed depth render: a line from each predicted
// pixel to the ground-truth projection of its 3D point, green when the
// reprojection error is below the threshold, red otherwise.
io::ImageRgb render_correspondences(const PointCloud& cloud, const geom::CameraModel& cam,
                                    const geom::Pose& gt_pose,
                                    const matching::CorrespondenceSet& correspondences,
                                    double error_threshold_px);

}  // namespace trafficloc::viz
