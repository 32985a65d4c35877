#include "trafficloc/pose.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "trafficloc/rng.hpp"

namespace trafficloc::pose {
namespace {

using matching::Correspondence;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Procrustes alignment camera = R * world + t over matched point sets.
geom::Pose horn_alignment(const std::vector<Vec3>& world, const std::vector<Vec3>& camera) {
  const int n = static_cast<int>(world.size());
  Vec3 cw = Vec3::Zero(), cc = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    cw += world[i];
    cc += camera[i];
  }
  cw /= n;
  cc /= n;
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < n; ++i) h += (world[i] - cw) * (camera[i] - cc).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixV() * svd.matrixU().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixV() * flip * svd.matrixU().transpose();
  }
  geom::Pose pose;
  pose.rotation = r;
  pose.translation = cc - r * cw;
  return pose;
}

double mean_reprojection_error(const geom::CameraModel& cam, const geom::Pose& pose,
                               std::span<const Correspondence> corrs) {
  double total = 0.0;
  for (const Correspondence& c : corrs) total += reprojection_error(cam, pose, c);
  return total / static_cast<double>(corrs.size());
}

// Shared machinery for the 4-control-point and planar variants.
struct EpnpProblem {
  int n_ctrl = 4;
  std::vector<Vec3> ctrl_world;
  MatrixXd alphas;  // n x n_ctrl
  MatrixXd kernel;  // (3*n_ctrl) x n_ctrl, ascending-eigenvalue columns
  VectorXd rho;     // squared control distances, pairs in fixed order
  std::vector<std::pair<int, int>> pairs;
};

// Control points in camera frame for a beta combination.
std::vector<Vec3> control_points_for(const EpnpProblem& prob, const VectorXd& betas) {
  std::vector<Vec3> cc(prob.n_ctrl, Vec3::Zero());
  for (int k = 0; k < prob.n_ctrl; ++k) {
    for (int j = 0; j < prob.n_ctrl; ++j) {
      cc[j] += betas[k] * prob.kernel.col(k).segment<3>(3 * j);
    }
  }
  return cc;
}

// Gauss-Newton on the control-point distance residuals.
void refine_betas(const EpnpProblem& prob, VectorXd& betas, int iterations) {
  const int n_pairs = static_cast<int>(prob.pairs.size());
  for (int it = 0; it < iterations; ++it) {
    MatrixXd jac(n_pairs, prob.n_ctrl);
    VectorXd residual(n_pairs);
    const std::vector<Vec3> cc = control_points_for(prob, betas);
    for (int p = 0; p < n_pairs; ++p) {
      const auto [a, b] = prob.pairs[p];
      const Vec3 d = cc[a] - cc[b];
      residual[p] = prob.rho[p] - d.squaredNorm();
      for (int k = 0; k < prob.n_ctrl; ++k) {
        const Vec3 dk = prob.kernel.col(k).segment<3>(3 * a) - prob.kernel.col(k).segment<3>(3 * b);
        jac(p, k) = 2.0 * d.dot(dk);
      }
    }
    const VectorXd step = jac.colPivHouseholderQr().solve(residual);
    if (!step.allFinite()) break;
    betas += step;
  }
}

geom::Pose pose_from_betas(const EpnpProblem& prob, const VectorXd& betas,
                           std::span<const Correspondence> corrs) {
  std::vector<Vec3> cc = control_points_for(prob, betas);
  const int n = static_cast<int>(corrs.size());
  std::vector<Vec3> pcs(n, Vec3::Zero());
  double depth_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < prob.n_ctrl; ++j) pcs[i] += prob.alphas(i, j) * cc[j];
    depth_sum += pcs[i].z();
  }
  if (depth_sum < 0.0) {
    for (Vec3& p : pcs) p = -p;
  }
  std::vector<Vec3> world(n);
  for (int i = 0; i < n; ++i) world[i] = corrs[i].point;
  return horn_alignment(world, pcs);
}

// Row of the quadratic system for a kernel-difference set; the column order
// follows [B11 B12 B22 B13 B23 B33 B14 B24 B34 B44] truncated to n_ctrl.
void fill_l_row(const std::vector<Vec3>& dv, Eigen::RowVectorXd& row) {
  int col = 0;
  for (std::size_t j = 0; j < dv.size(); ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      row[col++] = (i == j ? 1.0 : 2.0) * dv[i].dot(dv[j]);
    }
  }
}

std::vector<VectorXd> beta_case_seeds(const EpnpProblem& prob) {
  const int n_pairs = static_cast<int>(prob.pairs.size());
  const int n_kernel = prob.n_ctrl;
  const int n_cols = n_kernel * (n_kernel + 1) / 2;
  MatrixXd l(n_pairs, n_cols);
  for (int p = 0; p < n_pairs; ++p) {
    const auto [a, b] = prob.pairs[p];
    std::vector<Vec3> dv(n_kernel);
    for (int k = 0; k < n_kernel; ++k) {
      dv[k] = prob.kernel.col(k).segment<3>(3 * a) - prob.kernel.col(k).segment<3>(3 * b);
    }
    Eigen::RowVectorXd row(n_cols);
    fill_l_row(dv, row);
    l.row(p) = row;
  }

  // Column indices of B1k within the packed order.
  const auto b1_col = [](int k) { return k * (k + 1) / 2; };

  std::vector<VectorXd> seeds;
  {
    // Case 1: only B11, B12, B13, ... columns.
    MatrixXd sub(n_pairs, n_kernel);
    for (int k = 0; k < n_kernel; ++k) sub.col(k) = l.col(b1_col(k));
    const VectorXd sol = sub.colPivHouseholderQr().solve(prob.rho);
    VectorXd betas = VectorXd::Zero(n_kernel);
    const double b11 = sol[0];
    const double sign = b11 < 0 ? -1.0 : 1.0;
    betas[0] = std::sqrt(std::abs(b11));
    if (betas[0] > 0) {
      for (int k = 1; k < n_kernel; ++k) betas[k] = sign * sol[k] / betas[0];
    }
    seeds.push_back(betas);
  }
  if (n_cols >= 3) {
    // Case 2: B11, B12, B22.
    MatrixXd sub(n_pairs, 3);
    sub.col(0) = l.col(0);
    sub.col(1) = l.col(1);
    sub.col(2) = l.col(2);
    const VectorXd sol = sub.colPivHouseholderQr().solve(prob.rho);
    VectorXd betas = VectorXd::Zero(n_kernel);
    if (sol[0] < 0) {
      betas[0] = std::sqrt(-sol[0]);
      betas[1] = sol[2] < 0 ? std::sqrt(-sol[2]) : 0.0;
    } else {
      betas[0] = std::sqrt(sol[0]);
      betas[1] = sol[2] > 0 ? std::sqrt(sol[2]) : 0.0;
    }
    if (sol[1] < 0) betas[0] = -betas[0];
    seeds.push_back(betas);
  }
  if (n_kernel >= 3 && n_cols >= 5) {
    // Case 3: B11, B12, B22, B13, B23.
    MatrixXd sub(n_pairs, 5);
    for (int c = 0; c < 5; ++c) sub.col(c) = l.col(c);
    const VectorXd sol = sub.colPivHouseholderQr().solve(prob.rho);
    VectorXd betas = VectorXd::Zero(n_kernel);
    if (sol[0] < 0) {
      betas[0] = std::sqrt(-sol[0]);
      betas[1] = sol[2] < 0 ? std::sqrt(-sol[2]) : 0.0;
    } else {
      betas[0] = std::sqrt(sol[0]);
      betas[1] = sol[2] > 0 ? std::sqrt(sol[2]) : 0.0;
    }
    if (sol[1] < 0) betas[0] = -betas[0];
    if (betas[0] != 0.0) betas[2] = sol[3] / betas[0];
    seeds.push_back(betas);
  }
  return seeds;
}

// Pose-only Gauss-Newton on the reprojection residuals; left-multiplied
// rotation increment, at most `iterations` steps.
void refine_pose_reprojection(std::span<const Correspondence> corrs, const geom::CameraModel& cam,
                              geom::Pose& pose, int iterations) {
  const int n = static_cast<int>(corrs.size());
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    double count = 0;
    for (int i = 0; i < n; ++i) {
      const Vec3 pc = pose.apply(corrs[i].point);
      if (!(pc.z() > 1e-9)) continue;
      const double inv_z = 1.0 / pc.z();
      const Vec2 proj(cam.fx * pc.x() * inv_z + cam.cx, cam.fy * pc.y() * inv_z + cam.cy);
      const Vec2 residual = corrs[i].pixel - proj;

      Eigen::Matrix<double, 2, 3> dproj;
      dproj << cam.fx * inv_z, 0.0, -cam.fx * pc.x() * inv_z * inv_z,
               0.0, cam.fy * inv_z, -cam.fy * pc.y() * inv_z * inv_z;
      Eigen::Matrix<double, 3, 6> dpc;
      dpc.leftCols<3>() = -skew(pc);
      dpc.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> jac = dproj * dpc;
      jtj += jac.transpose() * jac;
      jtr += jac.transpose() * residual;
      count += 1;
    }
    if (count < 3) return;
    const Eigen::Matrix<double, 6, 1> delta = jtj.ldlt().solve(jtr);
    if (!delta.allFinite()) return;
    const Vec3 omega = delta.head<3>();
    const double angle = omega.norm();
    Mat3 dr = Mat3::Identity();
    if (angle > 0.0) dr = Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
    pose.rotation = dr * pose.rotation;
    pose.translation = dr * pose.translation + delta.tail<3>();
    if (delta.norm() < 1e-14) return;
  }
}

}  // namespace

double reprojection_error(const geom::CameraModel& cam, const geom::Pose& pose,
                          const Correspondence& c) {
  const Vec3 pc = pose.apply(c.point);
  if (!(pc.z() > 0.0)) return std::numeric_limits<double>::infinity();
  const double u = cam.fx * (pc.x() / pc.z()) + cam.cx;
  const double v = cam.fy * (pc.y() / pc.z()) + cam.cy;
  return (Vec2(u, v) - c.pixel).norm();
}

geom::Pose epnp(std::span<const Correspondence> corrs, const geom::CameraModel& cam) {
  const int n = static_cast<int>(corrs.size());
  if (n < 4) throw std::invalid_argument("epnp: need at least 4 correspondences");

  Vec3 centroid = Vec3::Zero();
  for (const Correspondence& c : corrs) centroid += c.point;
  centroid /= n;
  Mat3 cov = Mat3::Zero();
  for (const Correspondence& c : corrs) {
    const Vec3 d = c.point - centroid;
    cov += d * d.transpose();
  }
  cov /= n;

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 evals = eig.eigenvalues();  // ascending
  const double scale = std::max(evals[2], 1e-300);
  if (evals[1] <= 1e-10 * scale)
    throw std::invalid_argument("epnp: degenerate correspondence geometry (collinear points)");
  const bool planar = evals[0] <= 1e-8 * scale;

  EpnpProblem prob;
  prob.n_ctrl = planar ? 3 : 4;
  prob.ctrl_world.push_back(centroid);
  for (int k = 0; k < prob.n_ctrl - 1; ++k) {
    const int axis = 2 - k;  // largest spread first
    prob.ctrl_world.push_back(centroid + std::sqrt(evals[axis]) * eig.eigenvectors().col(axis));
  }

  // Barycentric coordinates.
  prob.alphas.resize(n, prob.n_ctrl);
  if (planar) {
    Eigen::Matrix<double, 3, 2> basis;
    basis.col(0) = prob.ctrl_world[1] - prob.ctrl_world[0];
    basis.col(1) = prob.ctrl_world[2] - prob.ctrl_world[0];
    const auto solver = basis.colPivHouseholderQr();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d ab = solver.solve(corrs[i].point - prob.ctrl_world[0]);
      prob.alphas(i, 0) = 1.0 - ab[0] - ab[1];
      prob.alphas(i, 1) = ab[0];
      prob.alphas(i, 2) = ab[1];
    }
  } else {
    Eigen::Matrix4d ctrl;
    for (int j = 0; j < 4; ++j) {
      ctrl.block<3, 1>(0, j) = prob.ctrl_world[j];
      ctrl(3, j) = 1.0;
    }
    const auto solver = ctrl.colPivHouseholderQr();
    for (int i = 0; i < n; ++i) {
      Eigen::Vector4d rhs;
      rhs << corrs[i].point, 1.0;
      prob.alphas.row(i) = solver.solve(rhs).transpose();
    }
  }

  // 2n x 3*n_ctrl projection system.
  const int dim = 3 * prob.n_ctrl;
  MatrixXd m(2 * n, dim);
  for (int i = 0; i < n; ++i) {
    const double u = corrs[i].pixel.x();
    const double v = corrs[i].pixel.y();
    for (int j = 0; j < prob.n_ctrl; ++j) {
      const double a = prob.alphas(i, j);
      m(2 * i, 3 * j + 0) = a * cam.fx;
      m(2 * i, 3 * j + 1) = 0.0;
      m(2 * i, 3 * j + 2) = a * (cam.cx - u);
      m(2 * i + 1, 3 * j + 0) = 0.0;
      m(2 * i + 1, 3 * j + 1) = a * cam.fy;
      m(2 * i + 1, 3 * j + 2) = a * (cam.cy - v);
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> mtm(m.transpose() * m);
  prob.kernel = mtm.eigenvectors().leftCols(prob.n_ctrl);

  for (int j = 0; j < prob.n_ctrl; ++j) {
    for (int i = 0; i < j; ++i) prob.pairs.emplace_back(i, j);
  }
  prob.rho.resize(static_cast<Eigen::Index>(prob.pairs.size()));
  for (std::size_t p = 0; p < prob.pairs.size(); ++p) {
    prob.rho[static_cast<Eigen::Index>(p)] =
        (prob.ctrl_world[prob.pairs[p].first] - prob.ctrl_world[prob.pairs[p].second])
            .squaredNorm();
  }

  geom::Pose best;
  double best_err = std::numeric_limits<double>::infinity();
  for (VectorXd betas : beta_case_seeds(prob)) {
    refine_betas(prob, betas, 10);
    const geom::Pose candidate = pose_from_betas(prob, betas, corrs);
    const double err = mean_reprojection_error(cam, candidate, corrs);
    if (err < best_err) {
      best_err = err;
      best = candidate;
    }
  }
  if (!std::isfinite(best_err)) throw std::invalid_argument("epnp: no valid pose hypothesis");
  refine_pose_reprojection(corrs, cam, best, 10);
  return best;
}

RegistrationResult epnp_ransac(const matching::CorrespondenceSet& corrs,
                               const geom::CameraModel& cam, const RansacConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(corrs.size());
  if (n < 4) throw std::invalid_argument("epnp_ransac: need at least 4 correspondences");

  const auto inliers_of = [&](const geom::Pose& pose, double* total_err) {
    std::vector<int> ids;
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = reprojection_error(cam, pose, corrs[i]);
      if (e < cfg.reprojection_threshold) {
        ids.push_back(i);
        err += e;
      }
    }
    if (total_err) *total_err = err;
    return ids;
  };

  geom::Pose best_pose;
  std::vector<int> best_inliers;
  double best_err = std::numeric_limits<double>::infinity();
  int required = cfg.max_iterations;

  for (int iter = 0; iter < cfg.max_iterations && iter < required; ++iter) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(iter)));
    const std::vector<int> sample = rng.sample_without_replacement(n, 4);
    std::array<Correspondence, 4> minimal;
    for (int k = 0; k < 4; ++k) minimal[k] = corrs[sample[k]];

    geom::Pose hypothesis;
    try {
      hypothesis = epnp(minimal, cam);
    } catch (const std::invalid_argument&) {
      continue;
    }
    double err = 0.0;
    std::vector<int> inl = inliers_of(hypothesis, &err);
    // Strictly-better keeps the earliest iteration on exact ties.
    if (inl.size() > best_inliers.size() ||
        (inl.size() == best_inliers.size() && err < best_err)) {
      best_inliers = std::move(inl);
      best_err = err;
      best_pose = hypothesis;

      const double ratio = static_cast<double>(best_inliers.size()) / n;
      if (ratio >= 1.0) {
        required = iter + 1;
      } else if (ratio > 0.0) {
        const double denom = std::log1p(-std::pow(ratio, 4));
        if (denom < 0.0) {
          const double needed = std::ceil(std::log(1.0 - cfg.confidence) / denom);
          if (needed < static_cast<double>(required)) {
            required = std::max(iter + 1, static_cast<int>(needed));
          }
        }
      }
    }
  }

  RegistrationResult result;
  result.pose = best_pose;
  if (static_cast<int>(best_inliers.size()) < cfg.min_inliers) {
    result.solver_converged = false;
    return result;
  }

  // Re-estimate on all inliers until the inlier set is a fixed point.
  std::vector<int> inl = best_inliers;
  geom::Pose pose = best_pose;
  for (int round = 0; round < 20; ++round) {
    matching::CorrespondenceSet subset;
    subset.reserve(inl.size());
    for (int i : inl) subset.push_back(corrs[i]);
    geom::Pose refined;
    try {
      refined = epnp(subset, cam);
    } catch (const std::invalid_argument&) {
      break;
    }
    std::vector<int> next = inliers_of(refined, nullptr);
    if (static_cast<int>(next.size()) < 4) break;
    pose = refined;
    const bool fixed_point = next == inl;
    inl = std::move(next);
    if (fixed_point) break;
  }

  result.pose = pose;
  result.inlier_ids = inl;
  result.solver_converged = static_cast<int>(inl.size()) >= cfg.min_inliers;
  return result;
}

FocalRefineResult refine_focal(const matching::CorrespondenceSet& inliers,
                               const geom::CameraModel& cam, const geom::Pose& pose) {
  FocalRefineResult out{cam, pose, false};
  if (inliers.size() < 6) return out;

  const auto objective = [&](double s, geom::Pose* pose_out) {
    geom::CameraModel scaled = cam;
    scaled.fx = cam.fx * s;
    scaled.fy = cam.fy * s;
    geom::Pose p;
    try {
      p = epnp(inliers, scaled);
    } catch (const std::invalid_argument&) {
      return std::numeric_limits<double>::infinity();
    }
    if (pose_out) *pose_out = p;
    return mean_reprojection_error(scaled, p, inliers);
  };

  const double base_err = objective(1.0, nullptr);

  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.5, hi = 2.0;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = objective(x1, nullptr);
  double f2 = objective(x2, nullptr);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = objective(x1, nullptr);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = objective(x2, nullptr);
    }
  }
  const double s_best = f1 < f2 ? x1 : x2;
  geom::Pose refined_pose;
  const double refined_err = objective(s_best, &refined_pose);
  if (!(refined_err < base_err)) return out;  // no improvement over the unit scale

  out.cam.fx = cam.fx * s_best;
  out.cam.fy = cam.fy * s_best;
  out.pose = refined_pose;
  out.improved = true;
  return out;
}

std::pair<double, double> registration_errors(const geom::Pose& pred, const geom::Pose& gt) {
  const Mat3 rel = gt.rotation.transpose() * pred.rotation;
  const double sy = std::clamp(rel(0, 2), -1.0, 1.0);
  double r1, r2, r3;
  if (std::abs(sy) >= 1.0 - 1e-12) {
    // Gimbal lock: r3 fixed to zero, remainder folded into r1.
    r2 = sy > 0 ? kPi / 2 : -kPi / 2;
    r3 = 0.0;
    r1 = sy > 0 ? std::atan2(rel(1, 0), rel(1, 1)) : std::atan2(-rel(1, 0), rel(1, 1));
  } else {
    r2 = std::asin(sy);
    r1 = std::atan2(-rel(1, 2), rel(2, 2));
    r3 = std::atan2(-rel(0, 1), rel(0, 0));
  }
  const double rre = rad2deg(std::abs(r1) + std::abs(r2) + std::abs(r3));
  const double rte = (gt.translation - pred.translation).norm();
  return {rre, rte};
}

void evaluate_result(RegistrationResult& result, const geom::Pose& gt, const EvalConfig& cfg) {
  cfg.validate();
  const auto [rre, rte] = registration_errors(result.pose, gt);
  result.rre_deg = rre;
  result.rte_m = rte;
  result.success = rre < cfg.tau_r_deg && rte < cfg.tau_t_m;
}

double registration_recall(const std::vector<RegistrationResult>& results,
                           const EvalConfig& cfg) {
  cfg.validate();
  if (results.empty()) throw std::invalid_argument("registration_recall: empty result list");
  int ok = 0;
  for (const RegistrationResult& r : results) {
    if (r.rre_deg < cfg.tau_r_deg && r.rte_m < cfg.tau_t_m) ++ok;
  }
  return static_cast<double>(ok) / results.size();
}

}  // namespace trafficloc::pose
