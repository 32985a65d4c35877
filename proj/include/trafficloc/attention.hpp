#pragma once

#include <cstdint>
#include <vector>

#include "trafficloc/geom.hpp"
#include "trafficloc/grouping.hpp"
#include "trafficloc/types.hpp"

namespace trafficloc::attention {

struct FusionConfig {
  int n_blocks = 4;
  int n_heads = 4;
  int channels = 256;
  int latent_dim = 256;
  bool per_head_gal = false;  // supervise per-head logits instead of the head average

  void validate() const {
    if (n_blocks < 1 || n_heads < 1 || channels < 1 || latent_dim < 1)
      throw std::invalid_argument("FusionConfig: all sizes must be >= 1");
    if (channels % n_heads != 0 || latent_dim % n_heads != 0)
      throw std::invalid_argument("FusionConfig: heads must divide channels and latent dim");
  }
};

enum class Direction { I2P, P2I };

// Raw cross-attention scores: pre-softmax, pre-sigmoid, head-averaged,
// unscaled. I2P is (patches x groups), P2I is (groups x patches).
struct AttentionMap {
  MatXf logits;
  Direction direction = Direction::I2P;
};

struct ProjectionWeights {
  MatXf wq, wk, wv;  // channels x latent_dim
  MatXf wo;          // latent_dim x channels
};

struct BlockParams {
  ProjectionWeights self_image;
  ProjectionWeights self_points;
  ProjectionWeights cross_i2p;  // query = image
  ProjectionWeights cross_p2i;  // query = points
};

struct FusionParams {
  std::vector<BlockParams> blocks;
};

// Seeded Gaussian initialization, scale 1/sqrt(channels).
FusionParams random_fusion_params(const FusionConfig& cfg, std::uint64_t seed);
FusionParams zero_fusion_params(const FusionConfig& cfg);

// Sinusoidal positional embeddings. Image tokens use (row, col) with C/4
// frequency bands per axis; point tokens use unit-cube coordinates with
// floor(C/6) bands per axis (remainder channels zero).
MatXf image_positional_embedding(const grouping::PatchGrid& grid, int channels);
MatXf point_positional_embedding(const MatXd& unit_cube_coords, int channels);

// Raw multi-head cross logits (1/h) * sum_i (q_in Wq_i)(k_in Wk_i)^T, no
// 1/sqrt(d) scaling. Exposed for GAL and the hand-evaluated checks.
MatXf cross_attention_logits(const MatXf& q_in, const MatXf& k_in, const MatXf& wq,
                             const MatXf& wk, int n_heads);

struct FusionResult {
  MatXf image;   // updated patch features
  MatXf points;  // updated group features
  AttentionMap att_i2p;
  AttentionMap att_p2i;
  std::vector<MatXf> att_i2p_heads;  // filled when cfg.per_head_gal
  std::vector<MatXf> att_p2i_heads;
};

// N_c pre-norm blocks of per-modality self-attention followed by cross
// attention in both directions, residual connections throughout. Positional
// embeddings enter the query/key paths only, so zero projection weights pass
// features through unchanged. Returns the last block's raw cross logits.
FusionResult fusion_forward(const MatXf& image_features, const MatXf& point_features,
                            const grouping::PatchGrid& grid, const MatXd& point_unit_cube,
                            const FusionParams& params, const FusionConfig& cfg);

struct GalConfig {
  double theta_low_deg = 10.0;
  double theta_up_deg = 20.0;
  double d_low_m = 3.0;
  double d_up_m = 5.0;

  void validate() const {
    if (!(theta_low_deg > 0 && theta_low_deg <= theta_up_deg))
      throw std::invalid_argument("GalConfig: need 0 < theta_low <= theta_up");
    if (!(d_low_m > 0 && d_low_m <= d_up_m))
      throw std::invalid_argument("GalConfig: need 0 < d_low <= d_up");
  }
};

enum class MaskLabel : std::int8_t { kNegative = 0, kPositive = 1, kUnsupervised = 2 };

struct TriMask {
  // Row-major labels; same shape as the attention map it supervises.
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;
};

struct GalMasks {
  TriMask i2p;  // patches x groups, angular-radius thresholds
  TriMask p2i;  // groups x patches, point-to-ray distance thresholds
};

GalMasks gal_masks(const geom::CameraModel& cam, const geom::Pose& pose,
                   const grouping::PatchGrid& grid, const std::vector<Vec3>& group_centers,
                   const GalConfig& cfg);

struct GalLossResult {
  double loss = 0.0;
  MatXf grad_i2p;  // d loss / d logit, zero on unsupervised entries
  MatXf grad_p2i;
};

// Summed BCE over supervised entries of both directions, computed in the
// stable max(x,0) - x*y + log1p(exp(-|x|)) form.
GalLossResult gal_loss(const AttentionMap& att_i2p, const AttentionMap& att_p2i,
                       const GalMasks& masks);

}  // namespace trafficloc::attention
