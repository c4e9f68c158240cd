#include "deco/model.hpp"

#include <cmath>
#include <stdexcept>

namespace deco {

void ModelConfig::validate() const {
  if (input_height < 8 || input_width < 8) throw std::invalid_argument("model input must be at least 8x8");
  if (encoder_channels.empty()) throw std::invalid_argument("model needs at least one encoder stage");
  for (int c : encoder_channels) {
    if (c < 1) throw std::invalid_argument("encoder widths must be >= 1");
  }
  const int stride = 1 << encoder_channels.size();
  if (input_height % stride != 0 || input_width % stride != 0) {
    throw std::invalid_argument("input size must be divisible by 2^(encoder stages)");
  }
  if (ct != 0.0 && ct != static_cast<double>(embedding_dim())) {
    throw std::invalid_argument("C_t must equal the token embedding dimension (" +
                                std::to_string(embedding_dim()) + ")");
  }
  if (heads < 1 || embedding_dim() % heads != 0) {
    throw std::invalid_argument("embedding dimension must be divisible by head count");
  }
  if (num_vertices < 1) throw std::invalid_argument("num_vertices must be >= 1");
  if (num_parts < 1) throw std::invalid_argument("num_parts must be >= 1");
  if (scene_channels < 2) throw std::invalid_argument("scene_channels must be >= 2");
  if (head_hidden < 1) throw std::invalid_argument("head_hidden must be >= 1");
}

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.input_height = 256;
  c.input_width = 256;
  c.encoder_channels = {64, 480};
  c.ct = 480;
  c.heads = 4;
  c.num_vertices = 6890;
  c.num_parts = 24;
  c.scene_channels = 133;
  c.head_hidden = 256;
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_height", c.input_height},
          {"input_width", c.input_width},
          {"encoder_channels", c.encoder_channels},
          {"ct", c.ct},
          {"heads", c.heads},
          {"qkv_projections", c.qkv_projections},
          {"positional_encoding", c.positional_encoding},
          {"num_vertices", c.num_vertices},
          {"num_parts", c.num_parts},
          {"scene_channels", c.scene_channels},
          {"head_hidden", c.head_hidden},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  ModelConfig c;
  c.input_height = doc.value("input_height", c.input_height);
  c.input_width = doc.value("input_width", c.input_width);
  c.encoder_channels = doc.value("encoder_channels", c.encoder_channels);
  c.ct = doc.value("ct", c.ct);
  c.heads = doc.value("heads", c.heads);
  c.qkv_projections = doc.value("qkv_projections", c.qkv_projections);
  c.positional_encoding = doc.value("positional_encoding", c.positional_encoding);
  c.num_vertices = doc.value("num_vertices", c.num_vertices);
  c.num_parts = doc.value("num_parts", c.num_parts);
  c.scene_channels = doc.value("scene_channels", c.scene_channels);
  c.head_hidden = doc.value("head_hidden", c.head_hidden);
  c.seed = doc.value("seed", c.seed);
  c.validate();
  return c;
}

}  // namespace deco
