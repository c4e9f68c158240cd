#pragma once

#include "deco/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace deco {

/// Spatial positions become tokens (rows), channels become the embedding (columns).
template <typename Scalar>
MatrixX<Scalar> to_tokens(const nn::FeatureMap<Scalar>& map) {
  return map.data.transpose();
}

/// Numerically stable row-wise softmax.
template <typename Derived>
typename Derived::PlainObject softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Plain = typename Derived::PlainObject;
  Plain shifted = x.colwise() - x.rowwise().maxCoeff();
  Plain e = shifted.array().exp().matrix();
  return e.array().colwise() / e.rowwise().sum().array();
}

/// Multi-head scaled dot-product attention without projections: the embedding
/// is split into `heads` contiguous blocks, and each block computes
/// softmax(Q K^T / sqrt(ct)) V. Attention maps are appended to `attention`.
template <typename Scalar>
MatrixX<Scalar> attend(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k,
                       const MatrixX<Scalar>& v, double ct, int heads,
                       std::vector<MatrixX<Scalar>>* attention) {
  const auto dim = q.cols();
  const auto block = dim / heads;
  const Scalar inv_scale = Scalar(1) / Scalar(std::sqrt(ct));
  MatrixX<Scalar> out(q.rows(), dim);
  if (attention) attention->clear();
  for (int h = 0; h < heads; ++h) {
    const auto cols = Eigen::seqN(h * block, block);
    MatrixX<Scalar> a = softmax_rows((q(Eigen::all, cols) * k(Eigen::all, cols).transpose() *
                                      inv_scale).eval());
    out(Eigen::all, cols).noalias() = a * v(Eigen::all, cols);
    if (attention) attention->push_back(std::move(a));
  }
  return out;
}

/// Backward of attend(); accumulates into dq, dk, dv.
template <typename Scalar>
void attend_backward(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k, const MatrixX<Scalar>& v,
                     const std::vector<MatrixX<Scalar>>& attention, const MatrixX<Scalar>& grad_out,
                     double ct, MatrixX<Scalar>& dq, MatrixX<Scalar>& dk, MatrixX<Scalar>& dv) {
  const int heads = static_cast<int>(attention.size());
  const auto block = q.cols() / heads;
  const Scalar inv_scale = Scalar(1) / Scalar(std::sqrt(ct));
  for (int h = 0; h < heads; ++h) {
    const auto cols = Eigen::seqN(h * block, block);
    const MatrixX<Scalar>& a = attention[h];
    const MatrixX<Scalar> g = grad_out(Eigen::all, cols);
    dv(Eigen::all, cols) += a.transpose() * g;
    const MatrixX<Scalar> da = g * v(Eigen::all, cols).transpose();
    const VectorX<Scalar> row_dot = a.cwiseProduct(da).rowwise().sum();
    const MatrixX<Scalar> ds = a.cwiseProduct(da.colwise() - row_dot) * inv_scale;
    dq(Eigen::all, cols) += ds * k(Eigen::all, cols);
    dk(Eigen::all, cols) += ds.transpose() * q(Eigen::all, cols);
  }
}

/// Cross-attention fusion of scene and part tokens:
///   F_s' = softmax(Q_p K_s^T / sqrt(C_t)) V_s
///   F_p' = softmax(Q_s K_p^T / sqrt(C_t)) V_p
///   F_c  = LN(F_s' * F_p')  (elementwise product, per-token normalization)
/// Q/K/V are the tokens themselves unless `projections` is enabled.
template <typename Scalar>
struct CrossAttentionFusion {
  int channels = 0;
  double ct = 1.0;
  int heads = 1;
  bool projections = false;
  nn::Linear<Scalar> query_s, key_s, value_s, query_p, key_p, value_p;
  nn::LayerNorm<Scalar> norm;

  struct Cache {
    MatrixX<Scalar> qs, ks, vs, qp, kp, vp;
    std::vector<MatrixX<Scalar>> scene_attention;  // rows attend from part queries
    std::vector<MatrixX<Scalar>> part_attention;   // rows attend from scene queries
    MatrixX<Scalar> scene_attended, part_attended;
    typename nn::LayerNorm<Scalar>::Cache norm;
  };

  CrossAttentionFusion() = default;
  CrossAttentionFusion(int c, double ct_, int heads_ = 1, bool projections_ = false)
      : channels(c), ct(ct_), heads(heads_), projections(projections_), norm(c) {
    if (c < 1) throw std::invalid_argument("attention: embedding dim must be >= 1");
    if (!(ct > 0)) throw std::invalid_argument("attention: C_t must be > 0");
    if (heads < 1 || c % heads != 0) {
      throw std::invalid_argument("attention: embedding dim must be divisible by head count");
    }
    if (projections) {
      for (auto* l : {&query_s, &key_s, &value_s, &query_p, &key_p, &value_p}) *l = {c, c};
    }
  }

  MatrixX<Scalar> forward(const MatrixX<Scalar>& scene_tokens, const MatrixX<Scalar>& part_tokens,
                          Cache* cache) const {
    if (scene_tokens.rows() != part_tokens.rows() || scene_tokens.cols() != part_tokens.cols()) {
      throw std::invalid_argument("attention: scene and part token shapes differ");
    }
    if (scene_tokens.cols() != channels) {
      throw std::invalid_argument("attention: embedding dimension mismatch");
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    if (projections) {
      c.qs = query_s.forward(scene_tokens);
      c.ks = key_s.forward(scene_tokens);
      c.vs = value_s.forward(scene_tokens);
      c.qp = query_p.forward(part_tokens);
      c.kp = key_p.forward(part_tokens);
      c.vp = value_p.forward(part_tokens);
    } else {
      c.qs = c.ks = c.vs = scene_tokens;
      c.qp = c.kp = c.vp = part_tokens;
    }
    c.scene_attended = attend(c.qp, c.ks, c.vs, ct, heads, &c.scene_attention);
    c.part_attended = attend(c.qs, c.kp, c.vp, ct, heads, &c.part_attention);
    return norm.forward(c.scene_attended.cwiseProduct(c.part_attended), &c.norm);
  }

  /// Returns (d scene_tokens, d part_tokens).
  std::pair<MatrixX<Scalar>, MatrixX<Scalar>> backward(const MatrixX<Scalar>& grad_out,
                                                       const MatrixX<Scalar>& scene_tokens,
                                                       const MatrixX<Scalar>& part_tokens,
                                                       const Cache& c,
                                                       CrossAttentionFusion& grad) const {
    const MatrixX<Scalar> dprod = norm.backward(grad_out, c.norm, grad.norm);
    const MatrixX<Scalar> d_scene_att = dprod.cwiseProduct(c.part_attended);
    const MatrixX<Scalar> d_part_att = dprod.cwiseProduct(c.scene_attended);
    const auto t = scene_tokens.rows(), d = scene_tokens.cols();
    MatrixX<Scalar> dqs = MatrixX<Scalar>::Zero(t, d), dks = dqs, dvs = dqs;
    MatrixX<Scalar> dqp = dqs, dkp = dqs, dvp = dqs;
    attend_backward(c.qp, c.ks, c.vs, c.scene_attention, d_scene_att, ct, dqp, dks, dvs);
    attend_backward(c.qs, c.kp, c.vp, c.part_attention, d_part_att, ct, dqs, dkp, dvp);
    if (!projections) return {dqs + dks + dvs, dqp + dkp + dvp};
    MatrixX<Scalar> ds = query_s.backward(scene_tokens, dqs, grad.query_s) +
                         key_s.backward(scene_tokens, dks, grad.key_s) +
                         value_s.backward(scene_tokens, dvs, grad.value_s);
    MatrixX<Scalar> dp = query_p.backward(part_tokens, dqp, grad.query_p) +
                         key_p.backward(part_tokens, dkp, grad.key_p) +
                         value_p.backward(part_tokens, dvp, grad.value_p);
    return {std::move(ds), std::move(dp)};
  }

  void init(std::mt19937_64& rng) {
    if (!projections) return;
    for (auto* l : {&query_s, &key_s, &value_s, &query_p, &key_p, &value_p}) l->init(rng);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    norm.visit(prefix + ".norm", fn);
    if (!projections) return;
    query_s.visit(prefix + ".query_s", fn);
    key_s.visit(prefix + ".key_s", fn);
    value_s.visit(prefix + ".value_s", fn);
    query_p.visit(prefix + ".query_p", fn);
    key_p.visit(prefix + ".key_p", fn);
    value_p.visit(prefix + ".value_p", fn);
  }
};

/// Parameter-free fusion (identity LayerNorm affine), for direct use on token matrices.
template <typename Scalar>
MatrixX<Scalar> cross_attention_fuse(const MatrixX<Scalar>& scene_tokens,
                                     const MatrixX<Scalar>& part_tokens, double ct, int heads = 1,
                                     typename CrossAttentionFusion<Scalar>::Cache* cache = nullptr) {
  CrossAttentionFusion<Scalar> fusion(static_cast<int>(scene_tokens.cols()), ct, heads);
  return fusion.forward(scene_tokens, part_tokens, cache);
}

}  // namespace deco
