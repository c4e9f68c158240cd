#pragma once

// Small models and hand-built samples shared by the gradient tests.

#include "deco/model.hpp"
#include "deco/train.hpp"
#include "support/oracles.hpp"

#include <random>

namespace fixtures {

inline constexpr int kTinyImage = 32;
/// 2 poles + 6 rings of 8: the 50-vertex body.
inline constexpr int kTinyRings = 6;
inline constexpr int kTinySegments = 8;

/// Under 1e3 parameters: one 4-channel stage, J = 2, three scene channels.
inline deco::ModelConfig tiny_config(std::uint64_t seed = 3) {
  deco::ModelConfig c;
  c.input_height = c.input_width = kTinyImage;
  c.encoder_channels = {4};
  c.num_vertices = 2 + kTinyRings * kTinySegments;
  c.num_parts = 2;
  c.scene_channels = 3;
  c.head_hidden = 4;
  c.seed = seed;
  return c;
}

inline deco::TemplateMesh tiny_body() {
  return deco::make_uv_ellipsoid(kTinyRings, kTinySegments, {0.3, 0.8, 0.2});
}

/// Random image and labels with every supervision signal present.
inline deco::TrainingSample tiny_sample(std::uint64_t seed, bool with_3d = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const deco::TemplateMesh body = tiny_body();
  deco::TrainingSample s;
  s.id = "tiny" + std::to_string(seed);
  deco::RgbImage image;
  for (auto& ch : image.channels) ch = Eigen::MatrixXd::NullaryExpr(kTinyImage, kTinyImage, [&] { return u(rng); });
  s.input = deco::image_to_input<double>(image);
  s.gt_contact = Eigen::VectorXd::NullaryExpr(body.num_vertices(), [&] { return u(rng) < 0.3 ? 1.0 : 0.0; });
  s.has_3d_labels = with_3d;
  s.camera = {0.9, 0.05, -0.02, kTinyImage, kTinyImage};
  s.pixels = deco::project_weak_perspective(body.vertices, s.camera);
  s.contact_mask = deco::contact_mask_2d(body.vertices, s.gt_contact, s.camera, 1.5).cast<double>();
  s.scene_labels = Eigen::VectorXi::NullaryExpr(kTinyImage * kTinyImage, [&] { return static_cast<int>(rng() % 3); });
  s.part_labels = Eigen::VectorXi::NullaryExpr(kTinyImage * kTinyImage, [&] { return static_cast<int>(rng() % 3); });
  return s;
}

/// Projected 50-vertex body with a 32x32 contact mask.
struct TinyCase {
  deco::Camera camera{0.9, 0.05, -0.02, kTinyImage, kTinyImage};
  deco::Points2<double> pixels;
  Eigen::MatrixXd mask;

  TinyCase() {
    const deco::TemplateMesh body = tiny_body();
    pixels = deco::project_weak_perspective(body.vertices, camera);
    Eigen::VectorXd contact = Eigen::VectorXd::Zero(body.num_vertices());
    for (int v = 0; v < body.num_vertices(); v += 3) contact(v) = 1;
    mask = deco::contact_mask_2d(body.vertices, contact, camera, 1.5).cast<double>();
  }
};

/// Flat views of every parameter, in visit order.
inline std::vector<double*> parameter_slots(deco::Model& model) {
  std::vector<double*> out;
  model.visit([&](const std::string&, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
  });
  return out;
}

}  // namespace fixtures
