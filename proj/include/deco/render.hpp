#pragma once

#include "deco/contact_data.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace deco {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
template <typename Scalar>
using Points2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;

inline void check_camera(const Camera& camera) {
  if (!(camera.scale > 0) || !std::isfinite(camera.scale) || !std::isfinite(camera.tx) ||
      !std::isfinite(camera.ty)) {
    throw std::invalid_argument("degenerate camera: scale must be positive and finite");
  }
  if (camera.height < 8 || camera.width < 8) {
    throw std::invalid_argument("camera image size must be at least 8x8");
  }
}

/// Weak-perspective projection to normalized image coordinates:
/// u = s*x + tx, v = s*y + ty (y up). Depth (z) is left to the caller.
template <typename Derived>
Points2<typename Derived::Scalar> project_normalized(const Eigen::MatrixBase<Derived>& vertices,
                                                     const Camera& camera) {
  using Scalar = typename Derived::Scalar;
  Points2<Scalar> uv(vertices.rows(), 2);
  uv.col(0) = (Scalar(camera.scale) * vertices.col(0)).array() + Scalar(camera.tx);
  uv.col(1) = (Scalar(camera.scale) * vertices.col(1)).array() + Scalar(camera.ty);
  return uv;
}

/// Normalized [-1,1]^2 (y up) to continuous pixel coordinates (x right, y down)
/// where pixel (row, col) has its center at (col, row).
template <typename Derived>
Points2<typename Derived::Scalar> normalized_to_pixels(const Eigen::MatrixBase<Derived>& uv,
                                                       const Camera& camera) {
  using Scalar = typename Derived::Scalar;
  Points2<Scalar> px(uv.rows(), 2);
  const Scalar half_w = Scalar(camera.width) / Scalar(2);
  const Scalar half_h = Scalar(camera.height) / Scalar(2);
  px.col(0) = ((uv.col(0).array() + Scalar(1)) * half_w) - Scalar(0.5);
  px.col(1) = ((Scalar(1) - uv.col(1).array()) * half_h) - Scalar(0.5);
  return px;
}

/// Projection to pixels; throws on a degenerate camera.
template <typename Derived>
Points2<typename Derived::Scalar> project_weak_perspective(
    const Eigen::MatrixBase<Derived>& vertices, const Camera& camera) {
  check_camera(camera);
  return normalized_to_pixels(project_normalized(vertices, camera), camera);
}

/// d(pixel)/d(vertex) is diagonal: (s*W/2, -s*H/2) for (x, y), zero for z.
inline Eigen::Vector2d projection_jacobian_diagonal(const Camera& camera) {
  return {camera.scale * camera.width / 2.0, -camera.scale * camera.height / 2.0};
}

struct SplatOptions {
  double sigma = 1.5;          // pixels
  double cutoff_sigmas = 4.0;  // kernel support radius; <= 0 means the whole image
};

/// Soft-or Gaussian splatting: map = 1 - prod_i (1 - k_i(p) * v_i),
/// k_i(p) = exp(-|p - x_i|^2 / (2 sigma^2)). Values are clamped to [0, 1].
template <typename Scalar>
class SplatRenderer {
 public:
  SplatRenderer(int height, int width, SplatOptions options = {})
      : height_(height), width_(width), options_(options) {
    if (!(options_.sigma > 0)) throw std::invalid_argument("splat sigma must be positive");
    if (height < 1 || width < 1) throw std::invalid_argument("splat image must be non-empty");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  const SplatOptions& options() const { return options_; }

  /// Forward pass. Keeps what backward() needs.
  MatrixX<Scalar> render(const Points2<Scalar>& pixels, const VectorX<Scalar>& values) {
    if (pixels.rows() != values.size()) {
      throw std::invalid_argument("splat: point/value count mismatch");
    }
    pixels_ = pixels;
    values_ = values.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    clamped_ = (values_.array() != values.array());
    nonzero_product_ = MatrixX<Scalar>::Ones(height_, width_);
    zero_count_ = Eigen::MatrixXi::Zero(height_, width_);
    for (Eigen::Index i = 0; i < pixels_.rows(); ++i) {
      const Scalar v = values_(i);
      if (v == Scalar(0)) continue;
      for_each_pixel(i, [&](int r, int c, Scalar k) {
        const Scalar f = Scalar(1) - k * v;
        if (f == Scalar(0)) {
          ++zero_count_(r, c);
        } else {
          nonzero_product_(r, c) *= f;
        }
      });
    }
    MatrixX<Scalar> out(height_, width_);
    for (int r = 0; r < height_; ++r) {
      for (int c = 0; c < width_; ++c) {
        out(r, c) = zero_count_(r, c) > 0 ? Scalar(1) : Scalar(1) - nonzero_product_(r, c);
      }
    }
    return out;
  }

  struct Gradients {
    VectorX<Scalar> values;
    Points2<Scalar> pixels;
  };

  /// Backward pass for the last render() call.
  Gradients backward(const MatrixX<Scalar>& grad_map) const {
    Gradients g{VectorX<Scalar>::Zero(values_.size()), Points2<Scalar>::Zero(pixels_.rows(), 2)};
    const Scalar inv_var = Scalar(1) / Scalar(options_.sigma * options_.sigma);
    for (Eigen::Index i = 0; i < pixels_.rows(); ++i) {
      const Scalar v = values_(i);
      for_each_pixel(i, [&](int r, int c, Scalar k) {
        const Scalar f = Scalar(1) - k * v;
        // Product of all other factors at this pixel.
        Scalar others;
        if (f == Scalar(0)) {
          others = zero_count_(r, c) == 1 ? nonzero_product_(r, c) : Scalar(0);
        } else {
          others = zero_count_(r, c) == 0 ? nonzero_product_(r, c) / f : Scalar(0);
        }
        const Scalar upstream = grad_map(r, c) * others;
        g.values(i) += upstream * k;
        // dk/dx_i = k * (p - x_i) / sigma^2
        const Scalar dk = upstream * v * k * inv_var;
        g.pixels(i, 0) += dk * (Scalar(c) - pixels_(i, 0));
        g.pixels(i, 1) += dk * (Scalar(r) - pixels_(i, 1));
      });
    }
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (clamped_(i)) g.values(i) = Scalar(0);
    }
    return g;
  }

 private:
  template <typename Fn>
  void for_each_pixel(Eigen::Index i, Fn&& fn) const {
    const Scalar x = pixels_(i, 0), y = pixels_(i, 1);
    int r0 = 0, r1 = height_ - 1, c0 = 0, c1 = width_ - 1;
    if (options_.cutoff_sigmas > 0) {
      const double reach = options_.cutoff_sigmas * options_.sigma;
      const double xd = std::clamp(static_cast<double>(x), -1e6, 1e6);
      const double yd = std::clamp(static_cast<double>(y), -1e6, 1e6);
      c0 = std::max(c0, static_cast<int>(std::ceil(xd - reach)));
      c1 = std::min(c1, static_cast<int>(std::floor(xd + reach)));
      r0 = std::max(r0, static_cast<int>(std::ceil(yd - reach)));
      r1 = std::min(r1, static_cast<int>(std::floor(yd + reach)));
    }
    const Scalar inv_two_var = Scalar(1) / Scalar(2 * options_.sigma * options_.sigma);
    for (int r = r0; r <= r1; ++r) {
      const Scalar dy = Scalar(r) - y;
      for (int c = c0; c <= c1; ++c) {
        const Scalar dx = Scalar(c) - x;
        fn(r, c, std::exp(-(dx * dx + dy * dy) * inv_two_var));
      }
    }
  }

  int height_;
  int width_;
  SplatOptions options_;
  Points2<Scalar> pixels_;
  VectorX<Scalar> values_;
  Eigen::Array<bool, Eigen::Dynamic, 1> clamped_;
  MatrixX<Scalar> nonzero_product_;
  Eigen::MatrixXi zero_count_;
};

/// One-shot splat render without gradient bookkeeping.
template <typename Scalar>
MatrixX<Scalar> splat_render(const Points2<Scalar>& pixels, const VectorX<Scalar>& values,
                             const Camera& camera, SplatOptions options = {}) {
  SplatRenderer<Scalar> renderer(camera.height, camera.width, options);
  return renderer.render(pixels, values);
}

/// 1 for vertices not hidden behind other body triangles (z-buffer test, larger z is nearer).
Eigen::VectorXd vertex_visibility(const Vertices& vertices, const Triangles& triangles,
                                  const Camera& camera, double depth_tolerance = 1e-3);

}  // namespace deco
