#include "cvos/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cvos {

void LossConfig::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("LossConfig: gamma must be >= 0");
  if (!(bootstrap_frac > 0.0 && bootstrap_frac <= 1.0)) {
    throw std::invalid_argument("LossConfig: bootstrap_frac must lie in (0,1]");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("LossConfig: lambda must be >= 0");
  if (!(eps > 0.0)) throw std::invalid_argument("LossConfig: eps must be > 0");
}

namespace kernels {

double iou_loss(std::span<const double> pred, std::span<const double> gt, double eps,
                std::span<double> grad) {
  if (pred.size() != gt.size()) throw std::invalid_argument("iou_loss: shape mismatch");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += std::min(pred[i], gt[i]);
    uni += std::max(pred[i], gt[i]);
  }
  const double denom = uni + eps;
  if (!grad.empty()) {
    // d/dp (1 - I/U) = -(dI * U - I * dU) / U^2; ties go to the min branch.
    const double inv = 1.0 / denom;
    const double inv2 = inter / (denom * denom);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] <= gt[i]) grad[i] += -inv;
      else grad[i] += inv2;
    }
  }
  return 1.0 - inter / denom;
}

std::size_t bootstrap_count(std::size_t n, double frac) {
  const double raw = frac * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

double ce_loss_bootstrapped(std::span<const double> pred, std::span<const double> gt,
                            double frac, double eps, std::span<double> grad) {
  if (pred.size() != gt.size()) throw std::invalid_argument("ce_loss: shape mismatch");
  if (!(frac > 0.0 && frac <= 1.0)) throw std::invalid_argument("ce_loss: frac must lie in (0,1]");
  if (pred.empty()) throw std::invalid_argument("ce_loss: empty mask");
  const std::size_t n = pred.size();
  std::vector<double> nll(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred[i], eps, 1.0 - eps);
    nll[i] = -(gt[i] * std::log(p) + (1.0 - gt[i]) * std::log(1.0 - p));
  }
  const std::size_t k = bootstrap_count(n, frac);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Strict total order so the selected set is deterministic under ties.
  auto harder = [&](std::size_t a, std::size_t b) {
    return nll[a] > nll[b] || (nll[a] == nll[b] && a < b);
  };
  if (k < n) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), harder);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) total += nll[idx[j]];
  if (!grad.empty()) {
    const double scale = 1.0 / static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = idx[j];
      const double p = pred[i];
      if (p < eps || p > 1.0 - eps) continue;
      grad[i] += scale * (-gt[i] / p + (1.0 - gt[i]) / (1.0 - p));
    }
  }
  return total / static_cast<double>(k);
}

namespace {
// Correlation kernels indexed [dy + 1][dx + 1].
constexpr std::array<std::array<double, 3>, 3> kSobelX{{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}};
constexpr std::array<std::array<double, 3>, 3> kSobelY{{{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}}};
}  // namespace

double smooth_loss(std::span<const double> pred, int h, int w, std::span<double> grad) {
  if (h < 3 || w < 3) throw std::invalid_argument("smooth_loss: mask smaller than 3x3");
  if (pred.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("smooth_loss: buffer does not match HxW");
  }
  const double n = static_cast<double>(pred.size());
  auto src = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return static_cast<std::size_t>(y) * w + x;
  };
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Written as differences so a constant patch gives exactly zero.
      double gx = 0.0, gy = 0.0;
      for (int d = -1; d <= 1; ++d) {
        const double wgt = d == 0 ? 2.0 : 1.0;
        gx += wgt * (pred[src(y + d, x + 1)] - pred[src(y + d, x - 1)]);
        gy += wgt * (pred[src(y + 1, x + d)] - pred[src(y - 1, x + d)]);
      }
      total += gx * gx + gy * gy;
      if (!grad.empty()) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            grad[src(y + dy, x + dx)] +=
                2.0 / n * (gx * kSobelX[dy + 1][dx + 1] + gy * kSobelY[dy + 1][dx + 1]);
          }
        }
      }
    }
  }
  return total / n;
}

}  // namespace kernels

namespace {
void check_shapes(const Mask& a, const Mask& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
}  // namespace

double iou_loss(const Mask& pred, const Mask& gt, double eps) {
  check_shapes(pred, gt, "iou_loss");
  return kernels::iou_loss(pred.values, gt.values, eps);
}

double ce_loss_bootstrapped(const Mask& pred, const Mask& gt, double frac, double eps) {
  check_shapes(pred, gt, "ce_loss_bootstrapped");
  return kernels::ce_loss_bootstrapped(pred.values, gt.values, frac, eps);
}

double combined_loss(const Mask& pred, const Mask& gt, const LossConfig& cfg) {
  cfg.validate();
  double v = iou_loss(pred, gt, cfg.eps);
  if (cfg.gamma != 0.0) v += cfg.gamma * ce_loss_bootstrapped(pred, gt, cfg.bootstrap_frac, cfg.eps);
  return v;
}

double cycle_loss(const Mask& pred_t, const Mask& gt_t, const Mask& pred_1, const Mask& gt_1,
                  const LossConfig& cfg) {
  return combined_loss(pred_t, gt_t, cfg) + combined_loss(pred_1, gt_1, cfg);
}

double smooth_loss(const Mask& pred) {
  return kernels::smooth_loss(pred.values, pred.height, pred.width);
}

namespace graph {

namespace {

void check_flat(const ag::Var& pred, const Mask& gt, const char* what) {
  if (pred.size() != gt.size()) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// Wraps a kernel whose gradient does not depend on the upstream scalar
// except by scaling.
template <class Kernel>
ag::Var scalar_loss(const ag::Var& pred, Kernel kernel) {
  const double value = kernel(pred.value().data, std::span<double>{});
  return ag::make_op(ag::Tensor({1}, value), {pred}, [kernel](ag::Node& self) {
    ag::Node& p = *self.parents[0];
    std::vector<double> g(p.value.data.size(), 0.0);
    kernel(p.value.data, g);
    ag::Tensor& dst = p.grad_buffer();
    const double go = self.grad.data[0];
    for (std::size_t i = 0; i < g.size(); ++i) dst.data[i] += go * g[i];
  });
}

}  // namespace

ag::Var iou_loss(const ag::Var& pred, const Mask& gt, double eps) {
  check_flat(pred, gt, "iou_loss");
  return scalar_loss(pred, [target = gt.values, eps](std::span<const double> p, std::span<double> g) {
    return kernels::iou_loss(p, target, eps, g);
  });
}

ag::Var ce_loss_bootstrapped(const ag::Var& pred, const Mask& gt, double frac, double eps) {
  check_flat(pred, gt, "ce_loss_bootstrapped");
  return scalar_loss(pred, [target = gt.values, frac, eps](std::span<const double> p,
                                                           std::span<double> g) {
    return kernels::ce_loss_bootstrapped(p, target, frac, eps, g);
  });
}

ag::Var combined_loss(const ag::Var& pred, const Mask& gt, const LossConfig& cfg) {
  cfg.validate();
  ag::Var iou = iou_loss(pred, gt, cfg.eps);
  if (cfg.gamma == 0.0) return iou;
  ag::Var ce = ce_loss_bootstrapped(pred, gt, cfg.bootstrap_frac, cfg.eps);
  const std::array<ag::Var, 2> terms{iou, ce};
  const std::array<double, 2> weights{1.0, cfg.gamma};
  return ag::weighted_sum(terms, weights);
}

ag::Var smooth_loss(const ag::Var& pred, int h, int w) {
  if (pred.size() != static_cast<std::size_t>(h) * w) {
    throw std::invalid_argument("smooth_loss: buffer does not match HxW");
  }
  return scalar_loss(pred, [h, w](std::span<const double> p, std::span<double> g) {
    return kernels::smooth_loss(p, h, w, g);
  });
}

}  // namespace graph

}  // namespace cvos
