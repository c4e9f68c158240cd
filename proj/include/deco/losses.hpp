#pragma once

#include "deco/render.hpp"

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <stdexcept>

namespace deco {

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Steering weights of the four-term training objective.
struct LossWeights {
  double contact = 10.0;        // 3D per-vertex BCE
  double pixel_anchor = 0.05;   // 2D rendered-contact BCE
  double scene_seg = 1.0;
  double part_seg = 1.0;

  static LossWeights standard() { return {}; }
  void validate() const {
    for (double w : {contact, pixel_anchor, scene_seg, part_seg}) {
      if (!std::isfinite(w) || w < 0) throw std::invalid_argument("loss weights must be finite and >= 0");
    }
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// A scalar loss and its gradient with respect to the evaluated input.
template <typename Scalar, typename Grad>
struct LossAndGrad {
  Scalar value;
  Grad grad;
};

/// Mean binary cross-entropy over matching entries, probabilities clamped to [eps, 1-eps].
template <typename Derived, typename DerivedGt>
auto binary_cross_entropy(const Eigen::MatrixBase<Derived>& pred,
                          const Eigen::MatrixBase<DerivedGt>& gt,
                          double epsilon = kProbabilityEpsilon) {
  using Scalar = typename Derived::Scalar;
  using Plain = typename Derived::PlainObject;
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw std::invalid_argument("binary_cross_entropy: shape mismatch");
  }
  const auto n = static_cast<Scalar>(pred.size());
  const Scalar lo = Scalar(epsilon), hi = Scalar(1 - epsilon);
  LossAndGrad<Scalar, Plain> out{Scalar(0), Plain::Zero(pred.rows(), pred.cols())};
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const Scalar p = pred(i, j);
      const Scalar y = Scalar(gt(i, j));
      const Scalar pc = std::min(std::max(p, lo), hi);
      out.value -= y * std::log(pc) + (Scalar(1) - y) * std::log(Scalar(1) - pc);
      if (p > lo && p < hi) {
        out.grad(i, j) = (-(y / pc) + (Scalar(1) - y) / (Scalar(1) - pc)) / n;
      }
    }
  }
  out.value /= n;
  return out;
}

/// 3D contact loss: mean BCE between per-vertex probabilities and 0/1 labels.
template <typename Scalar>
LossAndGrad<Scalar, VectorX<Scalar>> contact_bce(const VectorX<Scalar>& pred,
                                                 const Eigen::VectorXd& gt,
                                                 double epsilon = kProbabilityEpsilon) {
  if (pred.size() != gt.size()) throw std::invalid_argument("contact_bce: length mismatch");
  return binary_cross_entropy(pred, gt, epsilon);
}

/// Mean per-pixel softmax cross-entropy. `logits` is channels x pixels,
/// `labels` holds one class index per pixel.
template <typename Scalar>
LossAndGrad<Scalar, MatrixX<Scalar>> segmentation_ce(const MatrixX<Scalar>& logits,
                                                     const Eigen::VectorXi& labels) {
  if (logits.cols() != labels.size()) {
    throw std::invalid_argument("segmentation_ce: pixel count mismatch");
  }
  const auto channels = logits.rows();
  const auto pixels = logits.cols();
  LossAndGrad<Scalar, MatrixX<Scalar>> out{Scalar(0), MatrixX<Scalar>(channels, pixels)};
  const Scalar inv_n = Scalar(1) / Scalar(pixels);
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const int label = labels(p);
    if (label < 0 || label >= channels) {
      throw std::invalid_argument("segmentation_ce: label " + std::to_string(label) +
                                  " outside channel range");
    }
    const Scalar peak = logits.col(p).maxCoeff();
    auto shifted = (logits.col(p).array() - peak).eval();
    auto e = shifted.exp().eval();
    const Scalar z = e.sum();
    out.value += std::log(z) - shifted(label);
    out.grad.col(p) = (e / z).matrix() * inv_n;
    out.grad(label, p) -= inv_n;
  }
  out.value *= inv_n;
  return out;
}

/// Pixel anchoring loss: BCE between the splatted contact map and a binary 2D
/// contact mask. Gradient is returned per vertex; body and camera are constants.
template <typename Scalar>
LossAndGrad<Scalar, VectorX<Scalar>> pal_loss(const VectorX<Scalar>& pred_contact,
                                              const Points2<Scalar>& pixels,
                                              const Eigen::MatrixXd& gt_mask,
                                              const Camera& camera, SplatOptions options = {},
                                              double epsilon = kProbabilityEpsilon,
                                              MatrixX<Scalar>* rendered = nullptr) {
  if (gt_mask.rows() != camera.height || gt_mask.cols() != camera.width) {
    throw std::invalid_argument("pal_loss: mask size does not match camera image size");
  }
  SplatRenderer<Scalar> renderer(camera.height, camera.width, options);
  MatrixX<Scalar> map = renderer.render(pixels, pred_contact);
  auto bce = binary_cross_entropy(map, gt_mask, epsilon);
  auto grads = renderer.backward(bce.grad);
  if (rendered) *rendered = std::move(map);
  return {bce.value, std::move(grads.values)};
}

/// Individual loss terms; a missing term is skipped.
template <typename Scalar>
struct LossComponents {
  std::optional<Scalar> contact;
  std::optional<Scalar> pixel_anchor;
  std::optional<Scalar> scene_seg;
  std::optional<Scalar> part_seg;
};

/// Weighted sum of the available terms. Terms with zero weight or no value are skipped.
template <typename Scalar>
Scalar total_loss(const LossComponents<Scalar>& c, const LossWeights& w) {
  w.validate();
  Scalar total(0);
  auto add = [&](const std::optional<Scalar>& term, double weight, const char* name) {
    if (!term) return;
    if (std::isnan(static_cast<double>(*term))) {
      throw std::domain_error(std::string("loss term '") + name + "' is NaN");
    }
    if (weight == 0) return;
    total += Scalar(weight) * *term;
  };
  add(c.contact, w.contact, "contact");
  add(c.pixel_anchor, w.pixel_anchor, "pixel_anchor");
  add(c.scene_seg, w.scene_seg, "scene_seg");
  add(c.part_seg, w.part_seg, "part_seg");
  return total;
}

}  // namespace deco
