#pragma once

// Minimal dense layers with hand-written backward passes. Every layer is a
// value type holding its parameters; backward() accumulates parameter
// gradients into a second instance of the same layer.

#include "deco/render.hpp"

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace deco::nn {

/// C x (H*W) feature map; column index = y * width + x.
template <typename Scalar>
struct FeatureMap {
  MatrixX<Scalar> data;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(data.rows()); }
  int tokens() const { return height * width; }
};

struct ConvGeometry {
  int channels;
  int height;
  int width;
  int kernel;
  int stride;
  int pad;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

/// Unfolds patches: (C*k*k) x (out_h*out_w).
template <typename Scalar>
MatrixX<Scalar> im2col(const MatrixX<Scalar>& input, const ConvGeometry& g) {
  const int oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  MatrixX<Scalar> cols = MatrixX<Scalar>::Zero(static_cast<Eigen::Index>(g.channels) * k * k,
                                               static_cast<Eigen::Index>(oh) * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int y = oy * g.stride - g.pad + ky;
        if (y < 0 || y >= g.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int x = ox * g.stride - g.pad + kx;
          if (x < 0 || x >= g.width) continue;
          const Eigen::Index pixel = static_cast<Eigen::Index>(y) * g.width + x;
          for (int c = 0; c < g.channels; ++c) {
            cols((static_cast<Eigen::Index>(c) * k + ky) * k + kx, col) = input(c, pixel);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters patches back, summing overlaps.
template <typename Scalar>
MatrixX<Scalar> col2im(const MatrixX<Scalar>& cols, const ConvGeometry& g) {
  const int oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(g.channels, static_cast<Eigen::Index>(g.height) * g.width);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int y = oy * g.stride - g.pad + ky;
        if (y < 0 || y >= g.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int x = ox * g.stride - g.pad + kx;
          if (x < 0 || x >= g.width) continue;
          const Eigen::Index pixel = static_cast<Eigen::Index>(y) * g.width + x;
          for (int c = 0; c < g.channels; ++c) {
            out(c, pixel) += cols((static_cast<Eigen::Index>(c) * k + ky) * k + kx, col);
          }
        }
      }
    }
  }
  return out;
}

/// Uniform(-bound, bound) fill with bound = sqrt(6 / fan_in) scaled by `gain`.
template <typename Scalar>
void init_uniform(MatrixX<Scalar>& m, int fan_in, std::mt19937_64& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / std::max(1, fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = Scalar(dist(rng));
  }
}

// ---- activations ------------------------------------------------------------

/// tanh-approximated GELU.
template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
  const Scalar c = Scalar(std::sqrt(2.0 / std::numbers::pi));
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + Scalar(0.044715) * x * x * x)));
}

template <std::floating_point Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar c = Scalar(std::sqrt(2.0 / std::numbers::pi));
  const Scalar inner = c * (x + Scalar(0.044715) * x * x * x);
  const Scalar t = std::tanh(inner);
  const Scalar dinner = c * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
  return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * dinner;
}

template <typename Derived>
typename Derived::PlainObject gelu(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](auto v) { return gelu(v); });
}

/// Chain rule through GELU given the pre-activation.
template <typename Derived, typename DerivedGrad>
typename Derived::PlainObject gelu_backward(const Eigen::MatrixBase<Derived>& pre,
                                            const Eigen::MatrixBase<DerivedGrad>& grad) {
  return pre.unaryExpr([](auto v) { return gelu_derivative(v); }).cwiseProduct(grad);
}

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  return x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

// ---- layers -----------------------------------------------------------------

template <typename Scalar>
struct Conv2d {
  int in_channels = 0, out_channels = 0, kernel = 3, stride = 1, pad = 0;
  MatrixX<Scalar> weight;  // out x (in*k*k)
  MatrixX<Scalar> bias;    // out x 1

  struct Cache {
    MatrixX<Scalar> cols;
    int in_height = 0, in_width = 0;
  };

  Conv2d() = default;
  Conv2d(int in, int out, int k, int s, int p)
      : in_channels(in), out_channels(out), kernel(k), stride(s), pad(p),
        weight(MatrixX<Scalar>::Zero(out, static_cast<Eigen::Index>(in) * k * k)),
        bias(MatrixX<Scalar>::Zero(out, 1)) {}

  ConvGeometry geometry(int h, int w) const { return {in_channels, h, w, kernel, stride, pad}; }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache) const {
    if (x.channels() != in_channels) throw std::invalid_argument("Conv2d: channel mismatch");
    const auto g = geometry(x.height, x.width);
    MatrixX<Scalar> cols = im2col(x.data, g);
    FeatureMap<Scalar> y;
    y.height = g.out_height();
    y.width = g.out_width();
    y.data.noalias() = weight * cols;
    y.data.colwise() += bias.col(0);
    if (cache) {
      cache->cols = std::move(cols);
      cache->in_height = x.height;
      cache->in_width = x.width;
    }
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad_out, const Cache& cache,
                              Conv2d& grad) const {
    grad.weight.noalias() += grad_out.data * cache.cols.transpose();
    grad.bias.col(0) += grad_out.data.rowwise().sum();
    MatrixX<Scalar> dcols = weight.transpose() * grad_out.data;
    FeatureMap<Scalar> dx;
    dx.height = cache.in_height;
    dx.width = cache.in_width;
    dx.data = col2im(dcols, geometry(cache.in_height, cache.in_width));
    return dx;
  }

  void init(std::mt19937_64& rng) {
    init_uniform(weight, in_channels * kernel * kernel, rng);
    bias.setZero();
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
};

/// Transposed convolution; with kernel 4, stride 2, pad 1 it exactly doubles H and W.
template <typename Scalar>
struct ConvTranspose2d {
  int in_channels = 0, out_channels = 0, kernel = 4, stride = 2, pad = 1;
  MatrixX<Scalar> weight;  // in x (out*k*k)
  MatrixX<Scalar> bias;    // out x 1

  struct Cache {
    MatrixX<Scalar> input;
    int in_height = 0, in_width = 0;
  };

  ConvTranspose2d() = default;
  ConvTranspose2d(int in, int out, int k = 4, int s = 2, int p = 1)
      : in_channels(in), out_channels(out), kernel(k), stride(s), pad(p),
        weight(MatrixX<Scalar>::Zero(in, static_cast<Eigen::Index>(out) * k * k)),
        bias(MatrixX<Scalar>::Zero(out, 1)) {}

  ConvGeometry output_geometry(int in_h, int in_w) const {
    return {out_channels, (in_h - 1) * stride - 2 * pad + kernel,
            (in_w - 1) * stride - 2 * pad + kernel, kernel, stride, pad};
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache) const {
    if (x.channels() != in_channels) {
      throw std::invalid_argument("ConvTranspose2d: channel mismatch");
    }
    const auto g = output_geometry(x.height, x.width);
    MatrixX<Scalar> cols = weight.transpose() * x.data;
    FeatureMap<Scalar> y;
    y.height = g.height;
    y.width = g.width;
    y.data = col2im(cols, g);
    y.data.colwise() += bias.col(0);
    if (cache) {
      cache->input = x.data;
      cache->in_height = x.height;
      cache->in_width = x.width;
    }
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad_out, const Cache& cache,
                              ConvTranspose2d& grad) const {
    const auto g = output_geometry(cache.in_height, cache.in_width);
    MatrixX<Scalar> dcols = im2col(grad_out.data, g);
    grad.weight.noalias() += cache.input * dcols.transpose();
    grad.bias.col(0) += grad_out.data.rowwise().sum();
    FeatureMap<Scalar> dx;
    dx.height = cache.in_height;
    dx.width = cache.in_width;
    dx.data.noalias() = weight * dcols;
    return dx;
  }

  void init(std::mt19937_64& rng) {
    // Each output pixel sees about in_channels * (k/stride)^2 inputs.
    const int fan_in = in_channels * (kernel / stride) * (kernel / stride);
    init_uniform(weight, fan_in, rng);
    bias.setZero();
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
};

/// Row-wise affine map: Y = X W^T + b (one sample per row).
template <typename Scalar>
struct Linear {
  int in_features = 0, out_features = 0;
  MatrixX<Scalar> weight;  // out x in
  MatrixX<Scalar> bias;    // out x 1

  Linear() = default;
  Linear(int in, int out)
      : in_features(in), out_features(out), weight(MatrixX<Scalar>::Zero(out, in)),
        bias(MatrixX<Scalar>::Zero(out, 1)) {}

  MatrixX<Scalar> forward(const MatrixX<Scalar>& x) const {
    if (x.cols() != in_features) throw std::invalid_argument("Linear: feature mismatch");
    MatrixX<Scalar> y = x * weight.transpose();
    y.rowwise() += bias.col(0).transpose();
    return y;
  }

  MatrixX<Scalar> backward(const MatrixX<Scalar>& x, const MatrixX<Scalar>& grad_out,
                           Linear& grad) const {
    grad.weight.noalias() += grad_out.transpose() * x;
    grad.bias.col(0) += grad_out.colwise().sum().transpose();
    return grad_out * weight;
  }

  void init(std::mt19937_64& rng, double gain = 1.0) {
    init_uniform(weight, in_features, rng, gain);
    bias.setZero();
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
};

/// Normalizes each row over its columns, then applies a learnable affine map.
template <typename Scalar>
struct LayerNorm {
  int features = 0;
  double epsilon = 1e-5;
  MatrixX<Scalar> gamma;  // features x 1
  MatrixX<Scalar> beta;   // features x 1

  struct Cache {
    MatrixX<Scalar> normalized;
    VectorX<Scalar> inv_std;
  };

  LayerNorm() = default;
  explicit LayerNorm(int n)
      : features(n), gamma(MatrixX<Scalar>::Ones(n, 1)), beta(MatrixX<Scalar>::Zero(n, 1)) {}

  MatrixX<Scalar> forward(const MatrixX<Scalar>& x, Cache* cache) const {
    if (x.cols() != features) throw std::invalid_argument("LayerNorm: feature mismatch");
    const auto n = static_cast<Scalar>(features);
    VectorX<Scalar> mean = x.rowwise().sum() / n;
    MatrixX<Scalar> centered = x.colwise() - mean;
    VectorX<Scalar> var = centered.array().square().rowwise().sum() / n;
    VectorX<Scalar> inv_std = (var.array() + Scalar(epsilon)).rsqrt();
    MatrixX<Scalar> normalized = inv_std.asDiagonal() * centered;
    MatrixX<Scalar> y = normalized * gamma.col(0).asDiagonal();
    y.rowwise() += beta.col(0).transpose();
    if (cache) {
      cache->normalized = std::move(normalized);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  MatrixX<Scalar> backward(const MatrixX<Scalar>& grad_out, const Cache& cache,
                           LayerNorm& grad) const {
    grad.gamma.col(0) += cache.normalized.cwiseProduct(grad_out).colwise().sum().transpose();
    grad.beta.col(0) += grad_out.colwise().sum().transpose();
    const auto n = static_cast<Scalar>(features);
    MatrixX<Scalar> dnorm = grad_out * gamma.col(0).asDiagonal();
    VectorX<Scalar> mean_d = dnorm.rowwise().sum() / n;
    VectorX<Scalar> mean_dx = dnorm.cwiseProduct(cache.normalized).rowwise().sum() / n;
    MatrixX<Scalar> dx = dnorm.colwise() - mean_d;
    dx -= cache.normalized.cwiseProduct(mean_dx.replicate(1, features));
    return cache.inv_std.asDiagonal() * dx;
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
  }
};

}  // namespace deco::nn
