#include "trafficloc/attention.hpp"

#include <cmath>
#include <limits>

#include "trafficloc/kernels.hpp"
#include "trafficloc/rng.hpp"

namespace trafficloc::attention {
namespace {

MatXf gaussian_matrix(Rng& rng, int rows, int cols, float scale) {
  MatXf m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<float>(rng.gaussian()) * scale;
  return m;
}

ProjectionWeights random_projection(Rng& rng, const FusionConfig& cfg, float scale) {
  ProjectionWeights w;
  w.wq = gaussian_matrix(rng, cfg.channels, cfg.latent_dim, scale);
  w.wk = gaussian_matrix(rng, cfg.channels, cfg.latent_dim, scale);
  w.wv = gaussian_matrix(rng, cfg.channels, cfg.latent_dim, scale);
  w.wo = gaussian_matrix(rng, cfg.latent_dim, cfg.channels, scale);
  return w;
}

// Row-wise layer normalization without affine parameters.
MatXf layer_norm(const MatXf& x) {
  MatXf out(x.rows(), x.cols());
  const auto cols = x.cols();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < cols; ++c) mean += x(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double d = x(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (Eigen::Index c = 0; c < cols; ++c)
      out(r, c) = static_cast<float>((x(r, c) - mean) * inv);
  }
  return out;
}

MatXf matmul(const MatXf& a, const MatXf& b) {
  MatXf out(a.rows(), b.cols());
  kernels::matmul_ab_f32(a.data(), static_cast<std::size_t>(a.rows()),
                         static_cast<std::size_t>(a.cols()), b.data(),
                         static_cast<std::size_t>(b.cols()), out.data());
  return out;
}

void softmax_rows(MatXf& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    float max_v = -std::numeric_limits<float>::infinity();
    for (Eigen::Index c = 0; c < m.cols(); ++c) max_v = std::max(max_v, m(r, c));
    double z = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double e = std::exp(static_cast<double>(m(r, c)) - max_v);
      m(r, c) = static_cast<float>(e);
      z += e;
    }
    const float inv = static_cast<float>(1.0 / z);
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) *= inv;
  }
}

// One multi-head attention application. Residual stream x receives
// x + MHA(LN(x)+pe_q, LN(y)+pe_k, LN(y)). When raw_logits is non-null the
// unscaled head-averaged q.k^T scores are written there.
void attend(MatXf& x, const MatXf& y, const MatXf& pe_q, const MatXf& pe_k,
            const ProjectionWeights& w, const FusionConfig& cfg, MatXf* raw_logits,
            std::vector<MatXf>* raw_head_logits) {
  const MatXf q_in = layer_norm(x) + pe_q;
  const MatXf k_in = layer_norm(y) + pe_k;
  const MatXf v_in = layer_norm(y);

  const MatXf q = matmul(q_in, w.wq);  // rows_x x latent
  const MatXf k = matmul(k_in, w.wk);  // rows_y x latent
  const MatXf v = matmul(v_in, w.wv);

  const int dh = cfg.latent_dim / cfg.n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  MatXf concat(x.rows(), cfg.latent_dim);
  if (raw_logits) {
    raw_logits->setZero(x.rows(), y.rows());
    if (raw_head_logits) raw_head_logits->clear();
  }

  MatXf scores(x.rows(), y.rows());
  for (int h = 0; h < cfg.n_heads; ++h) {
    const MatXf qh = q.middleCols(h * dh, dh);
    const MatXf kh = k.middleCols(h * dh, dh);
    const MatXf vh = v.middleCols(h * dh, dh);
    kernels::matmul_abt_f32(qh.data(), static_cast<std::size_t>(qh.rows()), kh.data(),
                            static_cast<std::size_t>(kh.rows()), static_cast<std::size_t>(dh),
                            scores.data());
    if (raw_logits) {
      *raw_logits += scores / static_cast<float>(cfg.n_heads);
      if (raw_head_logits) raw_head_logits->push_back(scores);
    }
    MatXf weights = scores * scale;
    softmax_rows(weights);
    concat.middleCols(h * dh, dh) = matmul(weights, vh);
  }
  x += matmul(concat, w.wo);
}

}  // namespace

FusionParams random_fusion_params(const FusionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.channels));
  Rng rng(seed);
  FusionParams params;
  params.blocks.resize(cfg.n_blocks);
  for (auto& block : params.blocks) {
    block.self_image = random_projection(rng, cfg, scale);
    block.self_points = random_projection(rng, cfg, scale);
    block.cross_i2p = random_projection(rng, cfg, scale);
    block.cross_p2i = random_projection(rng, cfg, scale);
  }
  return params;
}

FusionParams zero_fusion_params(const FusionConfig& cfg) {
  cfg.validate();
  FusionParams params;
  params.blocks.resize(cfg.n_blocks);
  for (auto& block : params.blocks) {
    for (ProjectionWeights* w :
         {&block.self_image, &block.self_points, &block.cross_i2p, &block.cross_p2i}) {
      w->wq = MatXf::Zero(cfg.channels, cfg.latent_dim);
      w->wk = MatXf::Zero(cfg.channels, cfg.latent_dim);
      w->wv = MatXf::Zero(cfg.channels, cfg.latent_dim);
      w->wo = MatXf::Zero(cfg.latent_dim, cfg.channels);
    }
  }
  return params;
}

namespace {

// Interleaved sin/cos over `bands` frequencies for one coordinate, written to
// out[offset .. offset + 2*bands).
void sinusoid(float* out, int offset, int bands, double value) {
  for (int b = 0; b < bands; ++b) {
    const double freq = std::pow(10000.0, -static_cast<double>(b) / std::max(1, bands));
    out[offset + 2 * b] = static_cast<float>(std::sin(value * freq));
    out[offset + 2 * b + 1] = static_cast<float>(std::cos(value * freq));
  }
}

}  // namespace

MatXf image_positional_embedding(const grouping::PatchGrid& grid, int channels) {
  const int bands = channels / 4;  // per axis; 2 axes x (sin, cos) fill all channels
  MatXf pe = MatXf::Zero(grid.count(), channels);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      float* row = pe.row(grid.flat(r, c)).data();
      sinusoid(row, 0, bands, static_cast<double>(r));
      sinusoid(row, 2 * bands, bands, static_cast<double>(c));
    }
  }
  return pe;
}

MatXf point_positional_embedding(const MatXd& unit_cube_coords, int channels) {
  if (unit_cube_coords.cols() != 3)
    throw std::invalid_argument("point_positional_embedding: expected N x 3 coordinates");
  const int bands = channels / 6;  // three axes; remainder channels stay zero
  MatXf pe = MatXf::Zero(unit_cube_coords.rows(), channels);
  for (Eigen::Index i = 0; i < unit_cube_coords.rows(); ++i) {
    float* row = pe.row(i).data();
    for (int axis = 0; axis < 3; ++axis) {
      // Unit-cube coordinates are scaled so the finest band still varies.
      sinusoid(row, axis * 2 * bands, bands, unit_cube_coords(i, axis) * 100.0);
    }
  }
  return pe;
}

MatXf cross_attention_logits(const MatXf& q_in, const MatXf& k_in, const MatXf& wq,
                             const MatXf& wk, int n_heads) {
  if (wq.rows() != q_in.cols() || wk.rows() != k_in.cols() || wq.cols() != wk.cols())
    throw std::invalid_argument("cross_attention_logits: shape mismatch");
  if (wq.cols() % n_heads != 0)
    throw std::invalid_argument("cross_attention_logits: heads must divide latent dim");
  const MatXf q = matmul(q_in, wq);
  const MatXf k = matmul(k_in, wk);
  const int dh = static_cast<int>(wq.cols()) / n_heads;
  MatXf out = MatXf::Zero(q_in.rows(), k_in.rows());
  MatXf scores(q_in.rows(), k_in.rows());
  for (int h = 0; h < n_heads; ++h) {
    const MatXf qh = q.middleCols(h * dh, dh);
    const MatXf kh = k.middleCols(h * dh, dh);
    kernels::matmul_abt_f32(qh.data(), static_cast<std::size_t>(qh.rows()), kh.data(),
                            static_cast<std::size_t>(kh.rows()), static_cast<std::size_t>(dh),
                            scores.data());
    out += scores / static_cast<float>(n_heads);
  }
  return out;
}

FusionResult fusion_forward(const MatXf& image_features, const MatXf& point_features,
                            const grouping::PatchGrid& grid, const MatXd& point_unit_cube,
                            const FusionParams& params, const FusionConfig& cfg) {
  cfg.validate();
  if (image_features.cols() != cfg.channels || point_features.cols() != cfg.channels)
    throw std::invalid_argument("fusion_forward: feature channels do not match the config");
  if (image_features.rows() != grid.count())
    throw std::invalid_argument("fusion_forward: image rows do not match the patch grid");
  if (point_features.rows() != point_unit_cube.rows())
    throw std::invalid_argument("fusion_forward: point rows do not match the coordinates");
  if (static_cast<int>(params.blocks.size()) != cfg.n_blocks)
    throw std::invalid_argument("fusion_forward: parameter block count mismatch");

  const MatXf pe_img = image_positional_embedding(grid, cfg.channels);
  const MatXf pe_pts = point_positional_embedding(point_unit_cube, cfg.channels);

  FusionResult result;
  result.image = image_features;
  result.points = point_features;
  result.att_i2p.direction = Direction::I2P;
  result.att_p2i.direction = Direction::P2I;

  for (int b = 0; b < cfg.n_blocks; ++b) {
    const BlockParams& block = params.blocks[b];
    const bool last = (b == cfg.n_blocks - 1);

    attend(result.image, result.image, pe_img, pe_img, block.self_image, cfg, nullptr, nullptr);
    attend(result.points, result.points, pe_pts, pe_pts, block.self_points, cfg, nullptr, nullptr);

    // Both cross directions read the same post-self-attention features.
    const MatXf img_in = result.image;
    const MatXf pts_in = result.points;
    attend(result.image, pts_in, pe_img, pe_pts, block.cross_i2p, cfg,
           last ? &result.att_i2p.logits : nullptr,
           last && cfg.per_head_gal ? &result.att_i2p_heads : nullptr);
    MatXf pts_out = pts_in;
    attend(pts_out, img_in, pe_pts, pe_img, block.cross_p2i, cfg,
           last ? &result.att_p2i.logits : nullptr,
           last && cfg.per_head_gal ? &result.att_p2i_heads : nullptr);
    result.points = pts_out;
  }
  return result;
}

GalMasks gal_masks(const geom::CameraModel& cam, const geom::Pose& pose,
                   const grouping::PatchGrid& grid, const std::vector<Vec3>& group_centers,
                   const GalConfig& cfg) {
  cfg.validate();
  const int n_patches = grid.count();
  const int n_groups = static_cast<int>(group_centers.size());
  const double theta_low = deg2rad(cfg.theta_low_deg);
  const double theta_up = deg2rad(cfg.theta_up_deg);

  GalMasks masks;
  masks.i2p.labels.resize(n_patches, n_groups);
  masks.p2i.labels.resize(n_groups, n_patches);

  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const geom::Ray ray = geom::patch_ray(cam, pose, r, c, grid.patch_size);
      const int i = grid.flat(r, c);
      for (int j = 0; j < n_groups; ++j) {
        const double rad = geom::angular_radius(ray, group_centers[j]);
        MaskLabel angular = MaskLabel::kUnsupervised;
        if (rad < theta_low) angular = MaskLabel::kPositive;
        else if (rad > theta_up) angular = MaskLabel::kNegative;
        masks.i2p.labels(i, j) = static_cast<std::int8_t>(angular);

        const double dist = geom::point_to_ray_distance(ray, group_centers[j]);
        MaskLabel radial = MaskLabel::kUnsupervised;
        if (dist < cfg.d_low_m) radial = MaskLabel::kPositive;
        else if (dist > cfg.d_up_m) radial = MaskLabel::kNegative;
        masks.p2i.labels(j, i) = static_cast<std::int8_t>(radial);
      }
    }
  }
  return masks;
}

namespace {

double accumulate_bce(const MatXf& logits,
                      const Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>& labels,
                      MatXf& grad) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols())
    throw std::invalid_argument("gal_loss: mask shape does not match the attention map");
  grad.setZero(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const auto label = static_cast<MaskLabel>(labels(r, c));
      if (label == MaskLabel::kUnsupervised) continue;
      const double x = logits(r, c);
      const double y = label == MaskLabel::kPositive ? 1.0 : 0.0;
      total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
      const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      grad(r, c) = static_cast<float>(sig - y);
    }
  }
  return total;
}

}  // namespace

GalLossResult gal_loss(const AttentionMap& att_i2p, const AttentionMap& att_p2i,
                       const GalMasks& masks) {
  GalLossResult out;
  out.loss = accumulate_bce(att_i2p.logits, masks.i2p.labels, out.grad_i2p) +
             accumulate_bce(att_p2i.logits, masks.p2i.labels, out.grad_p2i);
  return out;
}

}  // namespace trafficloc::attention
