#pragma once

#include <span>

#include "cvos/autograd.hpp"
#include "cvos/maskcore.hpp"

namespace cvos {

struct LossConfig {
  double gamma = 1.0;           // CE weight
  double bootstrap_frac = 0.4;  // fraction of hardest pixels kept by the CE term
  double lambda = 0.75;         // smoothness weight
  double eps = 1e-7;

  void validate() const;
};

// Each kernel returns the loss value and, when `grad` is non-empty, adds
// dL/dpred into it. Masks are flat row-major grids.
namespace kernels {

double iou_loss(std::span<const double> pred, std::span<const double> gt, double eps,
                std::span<double> grad = {});
double ce_loss_bootstrapped(std::span<const double> pred, std::span<const double> gt,
                            double frac, double eps, std::span<double> grad = {});
double smooth_loss(std::span<const double> pred, int h, int w, std::span<double> grad = {});

// Number of pixels kept by the bootstrapped CE.
std::size_t bootstrap_count(std::size_t n, double frac);

}  // namespace kernels

double iou_loss(const Mask& pred, const Mask& gt, double eps = 1e-7);
double ce_loss_bootstrapped(const Mask& pred, const Mask& gt, double frac, double eps = 1e-7);
double combined_loss(const Mask& pred, const Mask& gt, const LossConfig& cfg);
double cycle_loss(const Mask& pred_t, const Mask& gt_t, const Mask& pred_1, const Mask& gt_1,
                  const LossConfig& cfg);
double smooth_loss(const Mask& pred);

// Differentiable versions over a prediction held in the autograd graph. The
// prediction may be shaped [H,W] or [1,H,W]; only its flat layout matters.
namespace graph {

ag::Var iou_loss(const ag::Var& pred, const Mask& gt, double eps);
ag::Var ce_loss_bootstrapped(const ag::Var& pred, const Mask& gt, double frac, double eps);
ag::Var combined_loss(const ag::Var& pred, const Mask& gt, const LossConfig& cfg);
ag::Var smooth_loss(const ag::Var& pred, int h, int w);

}  // namespace graph

}  // namespace cvos
