#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "trafficloc/geom.hpp"
#include "trafficloc/grouping.hpp"
#include "trafficloc/types.hpp"

namespace trafficloc::matching {

// Descriptor blocks at both matching resolutions. Rows fed to cosine
// similarity are unit norm (normalize_features enforces it).
struct FeatureSet {
  MatXf coarse_image;   // (rows*cols) x C, patch-major (row*cols + col)
  MatXf coarse_points;  // M x C
  MatXf fine_image;     // (fine_rows*fine_cols) x C'
  int fine_rows = 0;
  int fine_cols = 0;
  MatXf fine_points;    // N x C'
};

// Renormalizes every descriptor row in place; throws on zero rows.
void normalize_features(FeatureSet& features);

struct LossConfig {
  double gamma = 10.0;  // scale factor
  double m_p = 0.2;     // positive margin
  double m_n = 1.8;     // negative margin
  int safe_radius = 1;  // negative-pair patch distance threshold (Chebyshev)
  int kappa = 128;      // sampled pair count
  int fine_window = 8;  // fine matching window side, even
  double lambda_att = 1.0, lambda_det = 1.0, lambda_coarse = 1.0, lambda_fine = 1.0;
  // Circle-compatibility mode: negative optimum at -circle_margin instead of
  // the literal margins above (with the documented m_n = 1.8 the literal
  // negative weight clamps to zero for all cosine values).
  bool circle_mode = false;
  double circle_margin = 0.25;

  void validate() const {
    if (!(gamma > 0)) throw std::invalid_argument("LossConfig: gamma must be > 0");
    if (kappa < 1) throw std::invalid_argument("LossConfig: kappa must be >= 1");
    if (fine_window < 2 || fine_window % 2 != 0)
      throw std::invalid_argument("LossConfig: fine window must be even and >= 2");
  }
};

// A grid of similarity values; entry (row, col) sits at grid coordinate
// origin + (col, row), x right, y down.
struct SimilarityMap {
  MatXf values;
  Vec2 origin = Vec2::Zero();
};

struct Correspondence {
  int point_index = -1;  // index into the cloud / fine point features
  Vec3 point = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
  double confidence = 1.0;
};
using CorrespondenceSet = std::vector<Correspondence>;

// Entry (i, j) = <a_i, b_j> / (|a_i| |b_j|); throws on zero-norm rows.
MatXf cosine_similarity_matrix(const MatXf& a, const MatXf& b);

struct SuperpointFilterResult {
  std::vector<int> kept;           // group ids with score strictly above threshold
  std::vector<std::uint8_t> labels;  // geometric in-frustum ground truth per group
};

SuperpointFilterResult superpoint_filter(const std::vector<double>& scores, double threshold,
                                         const geom::CameraModel& cam, const geom::Pose& pose,
                                         const std::vector<Vec3>& centers);

struct ScalarLossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean BCE over group logits; grad[i] = (sigmoid(x_i) - label_i) / M.
ScalarLossGrad detection_loss(const std::vector<double>& logits,
                              const std::vector<std::uint8_t>& labels);

// Sampled contrastive pairs. Cross-modal pairs are (gt entry index, patch
// flat id); negatives_image are (patch flat id, patch flat id) and
// negatives_point are (gt entry index, gt entry index). Negative pairs keep
// Chebyshev patch-grid distance strictly greater than the safe radius.
struct TrainingPairs {
  std::vector<std::pair<int, int>> positives;
  std::vector<std::pair<int, int>> negatives_cross;
  std::vector<std::pair<int, int>> negatives_image;
  std::vector<std::pair<int, int>> negatives_point;
};

TrainingPairs sample_training_pairs(const CorrespondenceSet& gt, const grouping::PatchGrid& grid,
                                    int kappa, int safe_radius, std::uint64_t seed);

struct IclResult {
  double loss = 0.0;
  std::vector<double> grad_pos;
  std::vector<double> grad_neg;
};

// log[1 + sum_j exp(a_p(1-s_p+m_p)) * sum_k exp(a_n(s_n-m_n))] with detached
// adaptive weights a_p = gamma*max(0, 1+m_p-s_p), a_n = gamma*max(0, s_n-m_n).
IclResult icl_loss(const std::vector<double>& s_pos, const std::vector<double>& s_neg,
                   const LossConfig& cfg);

// Same loss with externally fixed weights; this is what the detached-weight
// gradient differentiates, so finite-difference checks go through here.
double icl_loss_frozen_weights(const std::vector<double>& s_pos, const std::vector<double>& s_neg,
                               const std::vector<double>& alpha_p,
                               const std::vector<double>& alpha_n, const LossConfig& cfg);

// The weights icl_loss derives from the similarities.
void icl_weights(const std::vector<double>& s_pos, const std::vector<double>& s_neg,
                 const LossConfig& cfg, std::vector<double>& alpha_p,
                 std::vector<double>& alpha_n);

// Expectation of grid coordinates under softmax(values / temperature).
Vec2 soft_argmax(const SimilarityMap& map, double temperature = 1.0);

// Argmax first (ties -> lowest linear index), then soft-argmax over the
// window x window neighborhood clamped inside the map.
Vec2 window_soft_argmax(const SimilarityMap& map, int window = 5, double temperature = 1.0);

struct DtaResult {
  double loss = 0.0;
  std::vector<Vec2> grad;  // d loss / d prediction
};

// Sum of Euclidean distances |pred - target| (not squared).
DtaResult dta_loss(const std::vector<Vec2>& pred, const std::vector<Vec2>& target);

// Coarse matching: one full-grid similarity map per kept group, window
// soft-argmax, patch coordinates mapped to pixels via the patch-center
// convention. Confidence = (max similarity + 1) / 2.
CorrespondenceSet coarse_match(const FeatureSet& features, const std::vector<int>& kept_groups,
                               const grouping::GroupSet& groups, const grouping::PatchGrid& grid,
                               double temperature = 1.0, int window = 5);

// Fine matching: w x w fine-feature window around each coarse pixel (border
// clamped), point-feature dot products, soft-argmax over the whole window,
// mapped back to full-resolution pixels. Groups without a fine point feature
// are skipped and counted.
struct FineMatchResult {
  CorrespondenceSet correspondences;
  int skipped = 0;
};

FineMatchResult fine_match(const FeatureSet& features, const CorrespondenceSet& coarse,
                           int window, double temperature, int image_width, int image_height);

struct FineLossResult {
  double ce = 0.0;  // cross entropy over window cells
  double l2 = 0.0;  // sum of Euclidean errors
  std::vector<MatXf> grad_maps;
  std::vector<Vec2> grad_pred;
};

// gt_in_window holds (x, y) inside each w x w map; throws when the rounded
// ground-truth cell falls outside (violated shift-augmentation contract).
FineLossResult fine_losses(const std::vector<SimilarityMap>& fine_maps,
                           const std::vector<Vec2>& gt_in_window,
                           const std::vector<Vec2>& pred_pixels);

// lambda_att*att + lambda_det*det + lambda_coarse*coarse + lambda_fine*fine.
double total_loss(double l_att, double l_det, double l_coarse, double l_fine,
                  const LossConfig& cfg);

}  // namespace trafficloc::matching
