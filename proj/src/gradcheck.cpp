#include "trafficloc/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "trafficloc/attention.hpp"
#include "trafficloc/matching.hpp"
#include "trafficloc/rng.hpp"
#include "trafficloc/types.hpp"

namespace trafficloc::gradcheck {
namespace {

double rel_error(double analytic, double fd) {
  const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-6});
  return std::abs(analytic - fd) / scale;
}

// Central difference on a double parameter.
double fd_double(const std::function<double(double)>& f, double x, double eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

// Central difference on a float parameter: the step is measured after
// float quantization so the quotient uses the true perturbation.
double fd_float(const std::function<double(float)>& f, float x, double eps) {
  const float hi = static_cast<float>(static_cast<double>(x) + eps);
  const float lo = static_cast<float>(static_cast<double>(x) - eps);
  return (f(hi) - f(lo)) / (static_cast<double>(hi) - static_cast<double>(lo));
}

double check_gal(Rng& rng, double sign) {
  const int rows = 6, cols = 8;
  attention::AttentionMap i2p, p2i;
  i2p.direction = attention::Direction::I2P;
  p2i.direction = attention::Direction::P2I;
  i2p.logits.resize(rows, cols);
  p2i.logits.resize(cols, rows);
  for (Eigen::Index i = 0; i < i2p.logits.size(); ++i)
    i2p.logits.data()[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
  for (Eigen::Index i = 0; i < p2i.logits.size(); ++i)
    p2i.logits.data()[i] = static_cast<float>(rng.uniform(-3.0, 3.0));

  attention::GalMasks masks;
  masks.i2p.labels.resize(rows, cols);
  masks.p2i.labels.resize(cols, rows);
  for (Eigen::Index i = 0; i < masks.i2p.labels.size(); ++i)
    masks.i2p.labels.data()[i] = static_cast<std::int8_t>(rng.uniform_int(3));
  for (Eigen::Index i = 0; i < masks.p2i.labels.size(); ++i)
    masks.p2i.labels.data()[i] = static_cast<std::int8_t>(rng.uniform_int(3));

  const attention::GalLossResult res = attention::gal_loss(i2p, p2i, masks);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < i2p.logits.size(); ++i) {
    const double fd = fd_float(
        [&](float v) {
          attention::AttentionMap probe = i2p;
          probe.logits.data()[i] = v;
          return attention::gal_loss(probe, p2i, masks).loss;
        },
        i2p.logits.data()[i], 1e-4);
    worst = std::max(worst, rel_error(sign * res.grad_i2p.data()[i], fd));
  }
  for (Eigen::Index i = 0; i < p2i.logits.size(); ++i) {
    const double fd = fd_float(
        [&](float v) {
          attention::AttentionMap probe = p2i;
          probe.logits.data()[i] = v;
          return attention::gal_loss(i2p, probe, masks).loss;
        },
        p2i.logits.data()[i], 1e-4);
    worst = std::max(worst, rel_error(sign * res.grad_p2i.data()[i], fd));
  }
  return worst;
}

double check_det(Rng& rng, double sign) {
  const int n = 16;
  std::vector<double> logits(n);
  std::vector<std::uint8_t> labels(n);
  for (int i = 0; i < n; ++i) {
    logits[i] = rng.uniform(-4.0, 4.0);
    labels[i] = rng.uniform() < 0.5 ? 0 : 1;
  }
  const matching::ScalarLossGrad res = matching::detection_loss(logits, labels);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double fd = fd_double(
        [&](double v) {
          std::vector<double> probe = logits;
          probe[i] = v;
          return matching::detection_loss(probe, labels).loss;
        },
        logits[i], 1e-5);
    worst = std::max(worst, rel_error(sign * res.grad[i], fd));
  }
  return worst;
}

double check_icl(Rng& rng, double sign) {
  matching::LossConfig cfg;
  cfg.m_n = 0.4;  // keep the adaptive negative weight active
  // Narrow similarity bands keep the log-sum-exp weights within a few orders
  // of magnitude so every coordinate stays resolvable by central differences
  // (with gamma = 10, wide bands drive some gradients below the cancellation
  // noise of the loss evaluation).
  std::vector<double> s_pos(5), s_neg(9);
  for (double& s : s_pos) s = rng.uniform(0.25, 0.75);
  for (double& s : s_neg) {
    do {
      s = rng.uniform(-0.2, 0.6);
    } while (std::abs(s - cfg.m_n) < 0.05);  // stay clear of the weight kink
  }
  std::vector<double> alpha_p, alpha_n;
  matching::icl_weights(s_pos, s_neg, cfg, alpha_p, alpha_n);
  const matching::IclResult res = matching::icl_loss(s_pos, s_neg, cfg);

  double worst = 0.0;
  for (std::size_t j = 0; j < s_pos.size(); ++j) {
    const double fd = fd_double(
        [&](double v) {
          std::vector<double> probe = s_pos;
          probe[j] = v;
          return matching::icl_loss_frozen_weights(probe, s_neg, alpha_p, alpha_n, cfg);
        },
        s_pos[j], 1e-6);
    worst = std::max(worst, rel_error(sign * res.grad_pos[j], fd));
  }
  for (std::size_t k = 0; k < s_neg.size(); ++k) {
    const double fd = fd_double(
        [&](double v) {
          std::vector<double> probe = s_neg;
          probe[k] = v;
          return matching::icl_loss_frozen_weights(s_pos, probe, alpha_p, alpha_n, cfg);
        },
        s_neg[k], 1e-6);
    worst = std::max(worst, rel_error(sign * res.grad_neg[k], fd));
  }
  return worst;
}

double check_dta(Rng& rng, double sign) {
  const int n = 8;
  std::vector<Vec2> pred(n), target(n);
  for (int i = 0; i < n; ++i) {
    target[i] = Vec2(rng.uniform(0.0, 32.0), rng.uniform(0.0, 18.0));
    Vec2 offset;
    do {
      offset = Vec2(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
    } while (offset.norm() < 0.05);  // gradient undefined at zero distance
    pred[i] = target[i] + offset;
  }
  const matching::DtaResult res = matching::dta_loss(pred, target);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      const double fd = fd_double(
          [&](double v) {
            std::vector<Vec2> probe = pred;
            probe[i][axis] = v;
            return matching::dta_loss(probe, target).loss;
          },
          pred[i][axis], 1e-6);
      worst = std::max(worst, rel_error(sign * res.grad[i][axis], fd));
    }
  }
  return worst;
}

double check_fine(Rng& rng, double sign) {
  const int w = 6;
  const int n = 3;
  std::vector<matching::SimilarityMap> maps(n);
  std::vector<Vec2> gt(n), pred(n);
  for (int x = 0; x < n; ++x) {
    maps[x].values.resize(w, w);
    for (Eigen::Index i = 0; i < maps[x].values.size(); ++i)
      maps[x].values.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    gt[x] = Vec2(rng.uniform_int(w), rng.uniform_int(w));
    Vec2 offset;
    do {
      offset = Vec2(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
    } while (offset.norm() < 0.05);
    pred[x] = gt[x] + offset;
  }
  const matching::FineLossResult res = matching::fine_losses(maps, gt, pred);
  const auto total = [&](const std::vector<matching::SimilarityMap>& m,
                         const std::vector<Vec2>& p) {
    const matching::FineLossResult r = matching::fine_losses(m, gt, p);
    return r.ce + r.l2;
  };

  double worst = 0.0;
  for (int x = 0; x < n; ++x) {
    for (Eigen::Index i = 0; i < maps[x].values.size(); ++i) {
      const double fd = fd_float(
          [&](float v) {
            std::vector<matching::SimilarityMap> probe = maps;
            probe[x].values.data()[i] = v;
            return total(probe, pred);
          },
          maps[x].values.data()[i], 1e-4);
      worst = std::max(worst, rel_error(sign * res.grad_maps[x].data()[i], fd));
    }
    for (int axis = 0; axis < 2; ++axis) {
      const double fd = fd_double(
          [&](double v) {
            std::vector<Vec2> probe = pred;
            probe[x][axis] = v;
            return total(maps, probe);
          },
          pred[x][axis], 1e-6);
      worst = std::max(worst, rel_error(sign * res.grad_pred[x][axis], fd));
    }
  }
  return worst;
}

}  // namespace

LossCheck check_loss(const std::string& name, int trials, double tolerance, std::uint64_t seed,
                     bool inject_bug) {
  LossCheck out;
  out.name = name;
  out.trials = trials;
  out.tolerance = tolerance;
  const double sign = inject_bug ? -1.0 : 1.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, std::hash<std::string>{}(name), static_cast<std::uint64_t>(t)));
    double err = 0.0;
    if (name == "gal") err = check_gal(rng, sign);
    else if (name == "det") err = check_det(rng, sign);
    else if (name == "icl") err = check_icl(rng, sign);
    else if (name == "dta") err = check_dta(rng, sign);
    else if (name == "fine") err = check_fine(rng, sign);
    else throw std::invalid_argument("check_loss: unknown loss '" + name + "'");
    out.max_rel_error = std::max(out.max_rel_error, err);
  }
  out.pass = out.max_rel_error <= tolerance;
  return out;
}

std::vector<LossCheck> check_all(int trials, double tolerance, std::uint64_t seed,
                                 bool inject_bug) {
  std::vector<LossCheck> checks;
  for (const std::string& name : loss_names())
    checks.push_back(check_loss(name, trials, tolerance, seed, inject_bug));
  return checks;
}

}  // namespace trafficloc::gradcheck
