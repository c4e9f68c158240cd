#pragma once

#include "deco/attention.hpp"
#include "deco/nn.hpp"
#include "deco/synth.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace deco {

struct ModelConfig {
  int input_height = 64;
  int input_width = 64;
  std::vector<int> encoder_channels = {8, 16, 32};  // one stride-2 conv stage each
  double ct = 0.0;                                  // 0: use the embedding dimension
  int heads = 1;
  bool qkv_projections = false;
  bool positional_encoding = false;
  int num_vertices = 642;
  int num_parts = 8;       // J; the part decoder emits J + 1 channels
  int scene_channels = 5;  // N_o', background included
  int head_hidden = 64;
  std::uint64_t seed = 0;

  int embedding_dim() const { return encoder_channels.back(); }
  double attention_scale() const { return ct > 0 ? ct : embedding_dim(); }
  int feature_height() const { return input_height >> encoder_channels.size(); }
  int feature_width() const { return input_width >> encoder_channels.size(); }
  void validate() const;

  /// 64x64 CPU-sized model.
  static ModelConfig desk();
  /// 256x256 input, 480-channel 64x64 features, 6890 vertices, 24 parts, 133 classes.
  static ModelConfig full_scale();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

/// Image in [0,1] to a 3 x (H*W) input map, centered at zero.
template <typename Scalar>
nn::FeatureMap<Scalar> image_to_input(const RgbImage& image) {
  nn::FeatureMap<Scalar> x;
  x.height = image.height();
  x.width = image.width();
  x.data.resize(3, static_cast<Eigen::Index>(x.height) * x.width);
  for (int k = 0; k < 3; ++k) {
    for (int r = 0; r < x.height; ++r) {
      for (int c = 0; c < x.width; ++c) {
        x.data(k, static_cast<Eigen::Index>(r) * x.width + c) = Scalar(image.channels[k](r, c) - 0.5);
      }
    }
  }
  return x;
}

/// Fixed sinusoidal token encoding (T x C).
template <typename Scalar>
MatrixX<Scalar> positional_encoding(int tokens, int dim) {
  MatrixX<Scalar> pe(tokens, dim);
  for (int t = 0; t < tokens; ++t) {
    for (int c = 0; c < dim; ++c) {
      const double freq = std::pow(10000.0, -2.0 * (c / 2) / dim);
      pe(t, c) = Scalar(c % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq));
    }
  }
  return pe;
}

template <typename Scalar>
struct DecoOutput {
  VectorX<Scalar> contact;       // per-vertex probabilities in (0,1)
  MatrixX<Scalar> scene_logits;  // N_o' x (H*W)
  MatrixX<Scalar> part_logits;   // (J+1) x (H*W)
};

/// Gradients of a scalar loss with respect to the model outputs. Empty members are skipped.
template <typename Scalar>
struct OutputGradients {
  VectorX<Scalar> contact;  // d loss / d probability
  MatrixX<Scalar> scene_logits;
  MatrixX<Scalar> part_logits;
};

template <typename Scalar>
class DecoModel {
 public:
  using Map = nn::FeatureMap<Scalar>;

  struct EncoderCache {
    std::vector<typename nn::Conv2d<Scalar>::Cache> conv;
    std::vector<MatrixX<Scalar>> pre;
  };
  struct DecoderCache {
    std::vector<typename nn::ConvTranspose2d<Scalar>::Cache> conv;
    std::vector<MatrixX<Scalar>> pre;
  };
  struct Cache {
    EncoderCache scene_encoder, part_encoder;
    Map scene_features, part_features;
    MatrixX<Scalar> scene_tokens, part_tokens, fused;
    typename CrossAttentionFusion<Scalar>::Cache fusion;
    MatrixX<Scalar> pooled, hidden_pre, hidden;
    VectorX<Scalar> contact;
    DecoderCache scene_decoder, part_decoder;
  };

  DecoModel() = default;

  /// Randomly initialized from config.seed.
  explicit DecoModel(ModelConfig config) : DecoModel(std::move(config), true) {}

  /// Same architecture with every parameter zero (gradient accumulator).
  static DecoModel zeros(const ModelConfig& config) { return DecoModel(config, false); }
  DecoModel zeros_like() const { return zeros(config_); }

  const ModelConfig& config() const { return config_; }

  std::pair<Map, Map> encode(const Map& image, Cache* cache = nullptr) const {
    check_input(image);
    return {run_encoder(scene_encoder_, image, cache ? &cache->scene_encoder : nullptr),
            run_encoder(part_encoder_, image, cache ? &cache->part_encoder : nullptr)};
  }

  DecoOutput<Scalar> forward(const Map& image, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    auto [scene, part] = encode(image, &c);
    c.scene_tokens = to_tokens(scene);
    c.part_tokens = to_tokens(part);
    if (config_.positional_encoding) {
      const auto pe = positional_encoding<Scalar>(scene.tokens(), config_.embedding_dim());
      c.scene_tokens += pe;
      c.part_tokens += pe;
    }
    c.fused = fusion_.forward(c.scene_tokens, c.part_tokens, &c.fusion);

    DecoOutput<Scalar> out;
    out.contact = contact_head(c.fused, &c);
    out.scene_logits = run_decoder(scene_decoder_, scene, &c.scene_decoder).data;
    out.part_logits = run_decoder(part_decoder_, part, &c.part_decoder).data;
    c.scene_features = std::move(scene);
    c.part_features = std::move(part);
    return out;
  }

  std::vector<DecoOutput<Scalar>> forward_batch(const std::vector<Map>& images) const {
    std::vector<DecoOutput<Scalar>> out;
    out.reserve(images.size());
    for (const auto& image : images) out.push_back(forward(image));
    return out;
  }

  /// Per-vertex probabilities from fused tokens: token mean -> MLP -> sigmoid.
  VectorX<Scalar> contact_head(const MatrixX<Scalar>& fused, Cache* cache = nullptr) const {
    MatrixX<Scalar> pooled = fused.colwise().mean();
    MatrixX<Scalar> hidden_pre = head_hidden_.forward(pooled);
    MatrixX<Scalar> hidden = nn::gelu(hidden_pre);
    MatrixX<Scalar> logits = head_out_.forward(hidden);
    VectorX<Scalar> contact = logits.row(0).transpose().unaryExpr([](Scalar v) { return nn::sigmoid(v); });
    if (cache) {
      cache->pooled = std::move(pooled);
      cache->hidden_pre = std::move(hidden_pre);
      cache->hidden = std::move(hidden);
      cache->contact = contact;
    }
    return contact;
  }

  Map decode_scene(const Map& scene_features) const {
    return run_decoder(scene_decoder_, scene_features, nullptr);
  }
  Map decode_part(const Map& part_features) const {
    return run_decoder(part_decoder_, part_features, nullptr);
  }

  /// Accumulates parameter gradients into `grad` (a model of the same config).
  void backward(const OutputGradients<Scalar>& g, const Cache& c, DecoModel& grad) const {
    const auto tokens = c.scene_tokens.rows();
    const auto dim = c.scene_tokens.cols();
    Map d_scene{MatrixX<Scalar>::Zero(dim, tokens), c.scene_features.height, c.scene_features.width};
    Map d_part = d_scene;

    if (g.contact.size() > 0) {
      const VectorX<Scalar> dlogits =
          g.contact.cwiseProduct(c.contact.cwiseProduct((Scalar(1) - c.contact.array()).matrix()));
      MatrixX<Scalar> dhidden = head_out_.backward(c.hidden, dlogits.transpose(), grad.head_out_);
      MatrixX<Scalar> dpre = nn::gelu_backward(c.hidden_pre, dhidden);
      MatrixX<Scalar> dpooled = head_hidden_.backward(c.pooled, dpre, grad.head_hidden_);
      MatrixX<Scalar> dfused = dpooled.replicate(tokens, 1) / Scalar(tokens);
      auto [ds, dp] = fusion_.backward(dfused, c.scene_tokens, c.part_tokens, c.fusion, grad.fusion_);
      d_scene.data += ds.transpose();
      d_part.data += dp.transpose();
    }
    if (g.scene_logits.size() > 0) {
      d_scene.data += decoder_backward(scene_decoder_, g.scene_logits, c.scene_decoder,
                                       grad.scene_decoder_, c.scene_features).data;
    }
    if (g.part_logits.size() > 0) {
      d_part.data += decoder_backward(part_decoder_, g.part_logits, c.part_decoder,
                                      grad.part_decoder_, c.part_features).data;
    }
    encoder_backward(scene_encoder_, d_scene, c.scene_encoder, grad.scene_encoder_);
    encoder_backward(part_encoder_, d_part, c.part_encoder, grad.part_encoder_);
  }

  /// Calls fn(name, MatrixX&) for every parameter in a stable order.
  template <typename Fn>
  void visit(Fn&& fn) {
    for (std::size_t i = 0; i < scene_encoder_.size(); ++i) {
      scene_encoder_[i].visit("scene_encoder." + std::to_string(i), fn);
    }
    for (std::size_t i = 0; i < part_encoder_.size(); ++i) {
      part_encoder_[i].visit("part_encoder." + std::to_string(i), fn);
    }
    fusion_.visit("fusion", fn);
    head_hidden_.visit("contact_head.hidden", fn);
    head_out_.visit("contact_head.out", fn);
    for (std::size_t i = 0; i < scene_decoder_.size(); ++i) {
      scene_decoder_[i].visit("scene_decoder." + std::to_string(i), fn);
    }
    for (std::size_t i = 0; i < part_decoder_.size(); ++i) {
      part_decoder_[i].visit("part_decoder." + std::to_string(i), fn);
    }
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<DecoModel*>(this)->visit([&](const std::string& name, MatrixX<Scalar>& m) {
      fn(name, static_cast<const MatrixX<Scalar>&>(m));
    });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const MatrixX<Scalar>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  void set_zero() {
    visit([](const std::string&, MatrixX<Scalar>& m) { m.setZero(); });
  }

  nn::Linear<Scalar>& contact_output_layer() { return head_out_; }

 private:
  DecoModel(ModelConfig config, bool randomize) : config_(std::move(config)) {
    config_.validate();
    int in = 3;
    for (int width : config_.encoder_channels) {
      scene_encoder_.emplace_back(in, width, 3, 2, 1);
      part_encoder_.emplace_back(in, width, 3, 2, 1);
      in = width;
    }
    const int dim = config_.embedding_dim();
    fusion_ = CrossAttentionFusion<Scalar>(dim, config_.attention_scale(), config_.heads,
                                           config_.qkv_projections);
    head_hidden_ = nn::Linear<Scalar>(dim, config_.head_hidden);
    head_out_ = nn::Linear<Scalar>(config_.head_hidden, config_.num_vertices);
    build_decoder(scene_decoder_, config_.scene_channels);
    build_decoder(part_decoder_, config_.num_parts + 1);
    if (!randomize) {
      set_zero();
      return;
    }
    std::mt19937_64 rng(config_.seed);
    for (auto& l : scene_encoder_) l.init(rng);
    for (auto& l : part_encoder_) l.init(rng);
    fusion_.init(rng);
    head_hidden_.init(rng);
    head_out_.init(rng);
    for (auto& l : scene_decoder_) l.init(rng);
    for (auto& l : part_decoder_) l.init(rng);
  }

  void build_decoder(std::vector<nn::ConvTranspose2d<Scalar>>& decoder, int out_channels) {
    const auto& widths = config_.encoder_channels;
    for (int i = static_cast<int>(widths.size()) - 1; i >= 0; --i) {
      const int out = i == 0 ? out_channels : widths[i - 1];
      decoder.emplace_back(widths[i], out);
    }
  }

  void check_input(const Map& image) const {
    if (image.channels() != 3 || image.height != config_.input_height ||
        image.width != config_.input_width) {
      throw std::invalid_argument("model input must be 3 x " +
                                  std::to_string(config_.input_height) + " x " +
                                  std::to_string(config_.input_width));
    }
  }

  static Map run_encoder(const std::vector<nn::Conv2d<Scalar>>& stages, const Map& image,
                         EncoderCache* cache) {
    if (cache) {
      cache->conv.assign(stages.size(), {});
      cache->pre.assign(stages.size(), {});
    }
    Map x = image;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      Map pre = stages[i].forward(x, cache ? &cache->conv[i] : nullptr);
      x.height = pre.height;
      x.width = pre.width;
      x.data = nn::gelu(pre.data);
      if (cache) cache->pre[i] = std::move(pre.data);
    }
    return x;
  }

  static void encoder_backward(const std::vector<nn::Conv2d<Scalar>>& stages, Map grad,
                               const EncoderCache& cache, std::vector<nn::Conv2d<Scalar>>& out) {
    for (int i = static_cast<int>(stages.size()) - 1; i >= 0; --i) {
      grad.data = nn::gelu_backward(cache.pre[i], grad.data);
      if (i == 0) {
        // Input image gradient is not needed.
        out[0].weight.noalias() += grad.data * cache.conv[0].cols.transpose();
        out[0].bias.col(0) += grad.data.rowwise().sum();
      } else {
        grad = stages[i].backward(grad, cache.conv[i], out[i]);
      }
    }
  }

  static Map run_decoder(const std::vector<nn::ConvTranspose2d<Scalar>>& stages, const Map& features,
                         DecoderCache* cache) {
    if (cache) {
      cache->conv.assign(stages.size(), {});
      cache->pre.assign(stages.size(), {});
    }
    Map x = features;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      Map pre = stages[i].forward(x, cache ? &cache->conv[i] : nullptr);
      const bool last = i + 1 == stages.size();
      x.height = pre.height;
      x.width = pre.width;
      if (last) {
        x.data = std::move(pre.data);
      } else {
        x.data = nn::gelu(pre.data);
        if (cache) cache->pre[i] = std::move(pre.data);
      }
    }
    return x;
  }

  static Map decoder_backward(const std::vector<nn::ConvTranspose2d<Scalar>>& stages,
                              const MatrixX<Scalar>& grad_logits, const DecoderCache& cache,
                              std::vector<nn::ConvTranspose2d<Scalar>>& out, const Map& features) {
    Map grad{grad_logits, features.height << stages.size(), features.width << stages.size()};
    for (int i = static_cast<int>(stages.size()) - 1; i >= 0; --i) {
      if (i + 1 != static_cast<int>(stages.size())) {
        grad.data = nn::gelu_backward(cache.pre[i], grad.data);
      }
      grad = stages[i].backward(grad, cache.conv[i], out[i]);
    }
    return grad;
  }

  ModelConfig config_;
  std::vector<nn::Conv2d<Scalar>> scene_encoder_, part_encoder_;
  CrossAttentionFusion<Scalar> fusion_;
  nn::Linear<Scalar> head_hidden_, head_out_;
  std::vector<nn::ConvTranspose2d<Scalar>> scene_decoder_, part_decoder_;
};

/// Flat name -> array map.
template <typename Scalar>
nlohmann::json parameters_to_json(const DecoModel<Scalar>& model) {
  nlohmann::json params = nlohmann::json::object();
  model.visit([&](const std::string& name, const MatrixX<Scalar>& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    params[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
  });
  return params;
}

template <typename Scalar>
void parameters_from_json(DecoModel<Scalar>& model, const nlohmann::json& params) {
  model.visit([&](const std::string& name, MatrixX<Scalar>& m) {
    if (!params.contains(name)) throw std::runtime_error("checkpoint lacks parameter " + name);
    const auto& p = params.at(name);
    if (p.at("rows").get<Eigen::Index>() != m.rows() || p.at("cols").get<Eigen::Index>() != m.cols()) {
      throw std::runtime_error("checkpoint parameter " + name + " has the wrong shape");
    }
    const auto data = p.at("data").get<std::vector<double>>();
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(data[static_cast<std::size_t>(i)]);
  });
}

using Model = DecoModel<double>;

}  // namespace deco
