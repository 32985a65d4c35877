#include "trafficloc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trafficloc/kernels.hpp"
#include "trafficloc/rng.hpp"

namespace trafficloc::matching {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void normalize_or_throw(MatXf& mat, const char* what) {
  if (mat.rows() == 0) return;
  const std::size_t bad = kernels::normalize_rows_f32(
      mat.data(), static_cast<std::size_t>(mat.rows()), static_cast<std::size_t>(mat.cols()),
      1e-20f);
  if (bad != 0) throw std::invalid_argument(std::string(what) + ": zero-norm descriptor row");
}

}  // namespace

void normalize_features(FeatureSet& features) {
  normalize_or_throw(features.coarse_image, "coarse image features");
  normalize_or_throw(features.coarse_points, "coarse point features");
  normalize_or_throw(features.fine_image, "fine image features");
  normalize_or_throw(features.fine_points, "fine point features");
}

MatXf cosine_similarity_matrix(const MatXf& a, const MatXf& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("cosine_similarity_matrix: dimension mismatch");
  MatXf an = a;
  MatXf bn = b;
  normalize_or_throw(an, "cosine similarity lhs");
  normalize_or_throw(bn, "cosine similarity rhs");
  MatXf out(a.rows(), b.rows());
  if (a.rows() == 0 || b.rows() == 0) return out;
  kernels::matmul_abt_f32(an.data(), static_cast<std::size_t>(an.rows()), bn.data(),
                          static_cast<std::size_t>(bn.rows()),
                          static_cast<std::size_t>(an.cols()), out.data());
  return out;
}

SuperpointFilterResult superpoint_filter(const std::vector<double>& scores, double threshold,
                                         const geom::CameraModel& cam, const geom::Pose& pose,
                                         const std::vector<Vec3>& centers) {
  if (scores.size() != centers.size())
    throw std::invalid_argument("superpoint_filter: scores/centers size mismatch");
  SuperpointFilterResult result;
  result.labels.resize(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    result.labels[i] = geom::in_frustum(cam, pose, centers[i]) ? 1 : 0;
    if (scores[i] > threshold) result.kept.push_back(static_cast<int>(i));
  }
  return result;
}

ScalarLossGrad detection_loss(const std::vector<double>& logits,
                              const std::vector<std::uint8_t>& labels) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("detection_loss: size mismatch");
  ScalarLossGrad out;
  out.grad.assign(logits.size(), 0.0);
  if (logits.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    const double y = labels[i] ? 1.0 : 0.0;
    // max(x,0) - x*y + log(1+exp(-|x|))
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    out.grad[i] = (sigmoid(x) - y) * inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

TrainingPairs sample_training_pairs(const CorrespondenceSet& gt, const grouping::PatchGrid& grid,
                                    int kappa, int safe_radius, std::uint64_t seed) {
  if (gt.empty()) throw std::invalid_argument("sample_training_pairs: empty ground truth");
  if (kappa < 1) throw std::invalid_argument("sample_training_pairs: kappa must be >= 1");

  const int n_gt = static_cast<int>(gt.size());
  std::vector<std::pair<int, int>> gt_patches(n_gt);  // (row, col) per gt entry
  for (int i = 0; i < n_gt; ++i) gt_patches[i] = patch_of_pixel(grid, gt[i].pixel);

  const auto cheb = [](std::pair<int, int> a, std::pair<int, int> b) {
    return std::max(std::abs(a.first - b.first), std::abs(a.second - b.second));
  };

  Rng rng(seed);
  TrainingPairs out;
  out.positives.reserve(kappa);
  // kappa positives; with replacement when fewer gt pairs exist.
  std::vector<int> picks;
  if (n_gt >= kappa) {
    picks = rng.sample_without_replacement(n_gt, kappa);
  } else {
    picks.resize(kappa);
    for (int i = 0; i < kappa; ++i) picks[i] = rng.uniform_int(n_gt);
  }
  for (int idx : picks) {
    out.positives.emplace_back(idx, grid.flat(gt_patches[idx].first, gt_patches[idx].second));
  }

  const int total_patches = grid.count();
  const auto sample_patch_away_from = [&](std::pair<int, int> anchor, int& flat_out) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int p = rng.uniform_int(total_patches);
      const std::pair<int, int> rc{p / grid.cols, p % grid.cols};
      if (cheb(rc, anchor) > safe_radius) {
        flat_out = p;
        return true;
      }
    }
    return false;
  };

  for (int k = 0; k < kappa; ++k) {
    const int g = rng.uniform_int(n_gt);
    int patch = -1;
    if (sample_patch_away_from(gt_patches[g], patch)) out.negatives_cross.emplace_back(g, patch);
  }
  for (int k = 0; k < kappa; ++k) {
    const int anchor = rng.uniform_int(n_gt);
    int patch = -1;
    if (sample_patch_away_from(gt_patches[anchor], patch))
      out.negatives_image.emplace_back(grid.flat(gt_patches[anchor].first,
                                                 gt_patches[anchor].second),
                                       patch);
  }
  for (int k = 0; k < kappa; ++k) {
    const int a = rng.uniform_int(n_gt);
    const int b = rng.uniform_int(n_gt);
    if (a == b) continue;
    if (cheb(gt_patches[a], gt_patches[b]) > safe_radius) out.negatives_point.emplace_back(a, b);
  }
  return out;
}

void icl_weights(const std::vector<double>& s_pos, const std::vector<double>& s_neg,
                 const LossConfig& cfg, std::vector<double>& alpha_p,
                 std::vector<double>& alpha_n) {
  const double m_n = cfg.circle_mode ? -cfg.circle_margin : cfg.m_n;
  const double o_p = 1.0 + cfg.m_p;
  alpha_p.resize(s_pos.size());
  alpha_n.resize(s_neg.size());
  for (std::size_t j = 0; j < s_pos.size(); ++j)
    alpha_p[j] = cfg.gamma * std::max(0.0, o_p - s_pos[j]);
  for (std::size_t k = 0; k < s_neg.size(); ++k)
    alpha_n[k] = cfg.gamma * std::max(0.0, s_neg[k] - m_n);
}

namespace {

// Shared computation of the stable log-sum terms with fixed weights.
struct IclTerms {
  std::vector<double> a, b;
  double a_max = 0, b_max = 0, sum_a = 0, sum_b = 0, log_sum = 0;
};

IclTerms icl_terms(const std::vector<double>& s_pos, const std::vector<double>& s_neg,
                   const std::vector<double>& alpha_p, const std::vector<double>& alpha_n,
                   const LossConfig& cfg) {
  const double m_n = cfg.circle_mode ? -cfg.circle_margin : cfg.m_n;
  const double o_p = 1.0 + cfg.m_p;
  IclTerms t;
  t.a.resize(s_pos.size());
  t.b.resize(s_neg.size());
  t.a_max = -std::numeric_limits<double>::infinity();
  t.b_max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < s_pos.size(); ++j) {
    t.a[j] = alpha_p[j] * (o_p - s_pos[j]);
    t.a_max = std::max(t.a_max, t.a[j]);
  }
  for (std::size_t k = 0; k < s_neg.size(); ++k) {
    t.b[k] = alpha_n[k] * (s_neg[k] - m_n);
    t.b_max = std::max(t.b_max, t.b[k]);
  }
  for (double v : t.a) t.sum_a += std::exp(v - t.a_max);
  for (double v : t.b) t.sum_b += std::exp(v - t.b_max);
  t.log_sum = t.a_max + t.b_max + std::log(t.sum_a) + std::log(t.sum_b);
  return t;
}

}  // namespace

double icl_loss_frozen_weights(const std::vector<double>& s_pos, const std::vector<double>& s_neg,
                               const std::vector<double>& alpha_p,
                               const std::vector<double>& alpha_n, const LossConfig& cfg) {
  if (s_pos.empty() || s_neg.empty()) return 0.0;
  if (alpha_p.size() != s_pos.size() || alpha_n.size() != s_neg.size())
    throw std::invalid_argument("icl_loss_frozen_weights: weight size mismatch");
  return softplus(icl_terms(s_pos, s_neg, alpha_p, alpha_n, cfg).log_sum);
}

IclResult icl_loss(const std::vector<double>& s_pos, const std::vector<double>& s_neg,
                   const LossConfig& cfg) {
  IclResult out;
  out.grad_pos.assign(s_pos.size(), 0.0);
  out.grad_neg.assign(s_neg.size(), 0.0);
  if (s_pos.empty() || s_neg.empty()) return out;  // empty sum annihilates the product

  std::vector<double> alpha_p, alpha_n;
  icl_weights(s_pos, s_neg, cfg, alpha_p, alpha_n);
  const IclTerms t = icl_terms(s_pos, s_neg, alpha_p, alpha_n, cfg);
  out.loss = softplus(t.log_sum);

  // Detached weights: dL/ds_p = -sigmoid(log_sum) * softmax_j(a) * alpha_p,
  // dL/ds_n = +sigmoid(log_sum) * softmax_k(b) * alpha_n.
  const double sig = sigmoid(t.log_sum);
  for (std::size_t j = 0; j < s_pos.size(); ++j)
    out.grad_pos[j] = -sig * (std::exp(t.a[j] - t.a_max) / t.sum_a) * alpha_p[j];
  for (std::size_t k = 0; k < s_neg.size(); ++k)
    out.grad_neg[k] = sig * (std::exp(t.b[k] - t.b_max) / t.sum_b) * alpha_n[k];
  return out;
}

Vec2 soft_argmax(const SimilarityMap& map, double temperature) {
  const auto rows = map.values.rows();
  const auto cols = map.values.cols();
  if (rows == 0 || cols == 0) throw std::invalid_argument("soft_argmax: empty map");
  if (!(temperature > 0.0)) throw std::invalid_argument("soft_argmax: temperature must be > 0");

  double max_v = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      max_v = std::max(max_v, static_cast<double>(map.values(r, c)));

  double z = 0.0, ex = 0.0, ey = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double w = std::exp((static_cast<double>(map.values(r, c)) - max_v) / temperature);
      z += w;
      ex += w * static_cast<double>(c);
      ey += w * static_cast<double>(r);
    }
  }
  return Vec2(ex / z, ey / z) + map.origin;
}

Vec2 window_soft_argmax(const SimilarityMap& map, int window, double temperature) {
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("window_soft_argmax: window must be odd and >= 1");
  const auto rows = map.values.rows();
  const auto cols = map.values.cols();
  if (rows == 0 || cols == 0) throw std::invalid_argument("window_soft_argmax: empty map");

  // Argmax, ties -> lowest linear index (row-major).
  Eigen::Index best_r = 0, best_c = 0;
  float best_v = -std::numeric_limits<float>::infinity();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (map.values(r, c) > best_v) {
        best_v = map.values(r, c);
        best_r = r;
        best_c = c;
      }
    }
  }

  const Eigen::Index wr = std::min<Eigen::Index>(window, rows);
  const Eigen::Index wc = std::min<Eigen::Index>(window, cols);
  const Eigen::Index r0 = std::clamp<Eigen::Index>(best_r - window / 2, 0, rows - wr);
  const Eigen::Index c0 = std::clamp<Eigen::Index>(best_c - window / 2, 0, cols - wc);

  SimilarityMap sub;
  sub.values = map.values.block(r0, c0, wr, wc);
  sub.origin = map.origin + Vec2(static_cast<double>(c0), static_cast<double>(r0));
  return soft_argmax(sub, temperature);
}

DtaResult dta_loss(const std::vector<Vec2>& pred, const std::vector<Vec2>& target) {
  if (pred.size() != target.size()) throw std::invalid_argument("dta_loss: size mismatch");
  DtaResult out;
  out.grad.assign(pred.size(), Vec2::Zero());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec2 d = pred[i] - target[i];
    const double norm = d.norm();
    out.loss += norm;
    if (norm > 0.0) out.grad[i] = d / norm;
  }
  return out;
}

CorrespondenceSet coarse_match(const FeatureSet& features, const std::vector<int>& kept_groups,
                               const grouping::GroupSet& groups, const grouping::PatchGrid& grid,
                               double temperature, int window) {
  if (kept_groups.empty()) throw std::invalid_argument("coarse_match: no kept groups");
  if (features.coarse_image.rows() != grid.count())
    throw std::invalid_argument("coarse_match: image feature rows do not match the patch grid");

  // Similarity rows for the kept groups only.
  MatXf sel(static_cast<Eigen::Index>(kept_groups.size()), features.coarse_points.cols());
  for (std::size_t i = 0; i < kept_groups.size(); ++i)
    sel.row(static_cast<Eigen::Index>(i)) = features.coarse_points.row(kept_groups[i]);
  const MatXf sims = cosine_similarity_matrix(sel, features.coarse_image);

  const double s = grid.patch_size;
  CorrespondenceSet out;
  out.reserve(kept_groups.size());
  for (std::size_t i = 0; i < kept_groups.size(); ++i) {
    SimilarityMap map;
    map.values = Eigen::Map<const MatXf>(sims.data() + i * grid.count(), grid.rows, grid.cols);
    const Vec2 patch_coord = window_soft_argmax(map, window, temperature);
    const float max_sim = map.values.maxCoeff();

    Correspondence c;
    const int g = kept_groups[i];
    c.point_index = groups.center_indices[g];
    c.point = groups.centers[g];
    c.pixel = Vec2((patch_coord.x() + 0.5) * s - 0.5, (patch_coord.y() + 0.5) * s - 0.5);
    c.confidence = (static_cast<double>(max_sim) + 1.0) / 2.0;
    out.push_back(c);
  }
  return out;
}

FineMatchResult fine_match(const FeatureSet& features, const CorrespondenceSet& coarse,
                           int window, double temperature, int image_width, int image_height) {
  if (window < 2 || window % 2 != 0)
    throw std::invalid_argument("fine_match: window must be even and >= 2");
  const int fr = features.fine_rows;
  const int fc = features.fine_cols;
  if (fr * fc != features.fine_image.rows())
    throw std::invalid_argument("fine_match: fine image shape mismatch");
  if (fr < window || fc < window)
    throw std::invalid_argument("fine_match: fine map smaller than the window");

  const int cprime = static_cast<int>(features.fine_image.cols());
  FineMatchResult result;
  result.correspondences.reserve(coarse.size());

  for (const Correspondence& c : coarse) {
    if (c.pixel.x() < 0 || c.pixel.x() >= image_width || c.pixel.y() < 0 ||
        c.pixel.y() >= image_height)
      throw std::invalid_argument("fine_match: coarse pixel outside the image");
    if (c.point_index < 0 || c.point_index >= features.fine_points.rows()) {
      ++result.skipped;
      continue;
    }

    // Full-res pixel -> fine coordinates under the pixel-center convention.
    // The window start comes straight from the continuous coordinate so an
    // even window stays centered (coarse pixels sit at half-integer fine
    // coordinates).
    const double ufx = (c.pixel.x() + 0.5) / 2.0 - 0.5;
    const double ufy = (c.pixel.y() + 0.5) / 2.0 - 0.5;
    const int x0 = std::clamp(static_cast<int>(std::lround(ufx - (window - 1) / 2.0)), 0,
                              fc - window);
    const int y0 = std::clamp(static_cast<int>(std::lround(ufy - (window - 1) / 2.0)), 0,
                              fr - window);

    SimilarityMap map;
    map.values.resize(window, window);
    map.origin = Vec2(x0, y0);
    const float* pf = features.fine_points.row(c.point_index).data();
    for (int r = 0; r < window; ++r) {
      const float* img_row = features.fine_image.data() +
                             (static_cast<std::size_t>(y0 + r) * fc + x0) * cprime;
      for (int col = 0; col < window; ++col) {
        map.values(r, col) = kernels::dot_f32(pf, img_row + static_cast<std::size_t>(col) * cprime,
                                              static_cast<std::size_t>(cprime));
      }
    }

    const Vec2 fine = soft_argmax(map, temperature);
    Correspondence refined = c;
    refined.pixel = Vec2((fine.x() + 0.5) * 2.0 - 0.5, (fine.y() + 0.5) * 2.0 - 0.5);
    result.correspondences.push_back(refined);
  }
  return result;
}

FineLossResult fine_losses(const std::vector<SimilarityMap>& fine_maps,
                           const std::vector<Vec2>& gt_in_window,
                           const std::vector<Vec2>& pred_pixels) {
  if (fine_maps.size() != gt_in_window.size() || fine_maps.size() != pred_pixels.size())
    throw std::invalid_argument("fine_losses: size mismatch");
  FineLossResult out;
  if (fine_maps.empty()) return out;
  const double inv_kappa = 1.0 / static_cast<double>(fine_maps.size());

  out.grad_maps.reserve(fine_maps.size());
  out.grad_pred.assign(fine_maps.size(), Vec2::Zero());
  for (std::size_t x = 0; x < fine_maps.size(); ++x) {
    const MatXf& vals = fine_maps[x].values;
    const auto rows = vals.rows();
    const auto cols = vals.cols();
    const long gr = std::lround(gt_in_window[x].y());
    const long gc = std::lround(gt_in_window[x].x());
    if (gr < 0 || gr >= rows || gc < 0 || gc >= cols)
      throw std::invalid_argument("fine_losses: ground-truth pixel outside the window");

    // Stable log-softmax cross entropy at the gt cell.
    double max_v = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        max_v = std::max(max_v, static_cast<double>(vals(r, c)));
    double z = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        z += std::exp(static_cast<double>(vals(r, c)) - max_v);
    const double log_z = std::log(z) + max_v;
    out.ce += (log_z - static_cast<double>(vals(gr, gc))) * inv_kappa;

    MatXf grad(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double p = std::exp(static_cast<double>(vals(r, c)) - log_z);
        grad(r, c) = static_cast<float>(p * inv_kappa);
      }
    }
    grad(gr, gc) -= static_cast<float>(inv_kappa);
    out.grad_maps.push_back(std::move(grad));

    const Vec2 d = pred_pixels[x] - gt_in_window[x];
    const double norm = d.norm();
    out.l2 += norm;
    if (norm > 0.0) out.grad_pred[x] = d / norm;
  }
  return out;
}

double total_loss(double l_att, double l_det, double l_coarse, double l_fine,
                  const LossConfig& cfg) {
  return cfg.lambda_att * l_att + cfg.lambda_det * l_det + cfg.lambda_coarse * l_coarse +
         cfg.lambda_fine * l_fine;
}

}  // namespace trafficloc::matching
