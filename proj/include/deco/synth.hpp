#pragma once

#include "deco/contact_data.hpp"
#include "deco/mesh.hpp"
#include "deco/render.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace deco {

/// Closest-point distance from `p` to triangle (a, b, c); exact, handles all Voronoi regions.
template <typename Scalar>
Scalar point_triangle_distance(const Eigen::Matrix<Scalar, 3, 1>& p,
                               const Eigen::Matrix<Scalar, 3, 1>& a,
                               const Eigen::Matrix<Scalar, 3, 1>& b,
                               const Eigen::Matrix<Scalar, 3, 1>& c) {
  using Vec = Eigen::Matrix<Scalar, 3, 1>;
  const Vec ab = b - a, ac = c - a, ap = p - a;
  const Scalar d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  const Vec bp = p - b;
  const Scalar d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  const Scalar vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Vec cp = p - c;
  const Scalar d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  const Scalar vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const Scalar va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
  }
  const Scalar denom = Scalar(1) / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

/// Posed body vertices in camera coordinates (x right, y up, larger z nearer).
struct PosedBody {
  Vertices vertices;
  std::string provenance;
};

struct SceneMesh {
  std::string label;
  bool supports_body = true;  // contact counts as scene-supported
  Vertices vertices;
  Triangles triangles;
};

struct SceneGeometry {
  std::vector<SceneMesh> meshes;
};

nlohmann::json to_json(const SceneGeometry& scene);
SceneGeometry scene_from_json(const nlohmann::json& doc);

/// Minimum distance from each body vertex to each scene mesh (N_V x meshes).
Eigen::MatrixXd contact_distances(const PosedBody& body, const SceneGeometry& scene);

/// 1 where a vertex lies within `threshold` meters of any scene triangle.
VertexContactVector geometric_contact(const PosedBody& body, const SceneGeometry& scene,
                                      double threshold);

/// Three-channel image in [0,1], each channel H x W.
struct RgbImage {
  std::array<Eigen::MatrixXd, 3> channels;
  int height() const { return static_cast<int>(channels[0].rows()); }
  int width() const { return static_cast<int>(channels[0].cols()); }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

using LabelMap = Eigen::MatrixXi;

struct RasterTriangle {
  Eigen::Vector2d pixels[3];
  double depth[3];
  int id;
};

/// Z-buffered rasterization at pixel centers. Returns, per pixel, the index into
/// `triangles` of the nearest covering triangle (larger depth wins) or -1.
Eigen::MatrixXi rasterize_nearest(const std::vector<RasterTriangle>& triangles, int height,
                                  int width);

struct FlatRender {
  RgbImage image;
  LabelMap scene_mask;  // 0 background, 1 + vocabulary index otherwise
  LabelMap part_mask;   // 0 background, 1 + part id otherwise
};

struct Palette {
  Eigen::Vector3d background{0.75, 0.85, 0.95};
  Eigen::Vector3d label_color(const std::string& label) const;
  Eigen::Vector3d part_color(int part, int num_parts) const;
};

/// Flat-shaded render of scene + body. Each pixel takes the color and labels of
/// the nearest triangle. `body` may be null for scene-only renders.
FlatRender render_flat(const SceneGeometry& scene, const PosedBody* body,
                       const TemplateMesh& body_template, const Camera& camera,
                       const std::vector<std::string>& vocabulary, const Palette& palette = {});

struct SynthConfig {
  int image_size = 64;
  int body_subdivisions = 3;
  int num_parts = 8;
  std::string template_path;  // optional mesh file; empty uses the procedural desk body
  std::vector<std::string> vocabulary = default_vocabulary();
  double contact_threshold = 0.02;
  double camera_pitch_deg = 20.0;
  double camera_scale = 0.7;
  double camera_scale_jitter = 0.05;
  double splat_sigma = 1.5;
  std::vector<std::string> pose_families = {"stand", "lie", "sit", "lean", "hold", "float"};
  double float_height_min = 0.3;
  double float_height_max = 1.0;
  double ground_half_extent = 3.0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& doc);

struct SynthSample {
  std::uint64_t seed = 0;
  std::string pose_family;
  RgbImage image;
  PosedBody body;
  SceneGeometry scene;
  Camera camera;
  VertexContactVector gt_contact;
  LabelMap gt_scene_mask;
  LabelMap gt_part_mask;
  LabelMap gt_contact_mask_2d;
  ContactRecord record;  // object / scene-supported split of gt_contact
};

/// Binary 2D mask of contact vertices: splat of the 0/1 contact vector, thresholded at 0.5.
LabelMap contact_mask_2d(const Vertices& body, const VertexContactVector& contact,
                         const Camera& camera, double sigma);

class SynthWorld {
 public:
  explicit SynthWorld(SynthConfig config);
  SynthWorld(SynthConfig config, TemplateMesh body_template);

  const SynthConfig& config() const { return config_; }
  const TemplateMesh& body_template() const { return template_; }

  /// Pure function of (seed, config).
  SynthSample generate(std::uint64_t seed) const;

 private:
  SynthConfig config_;
  TemplateMesh template_;
};

SynthSample generate_sample(std::uint64_t seed, const SynthConfig& config);

/// Seed used for record `index` of a dataset written with `seed`.
std::uint64_t dataset_sample_seed(std::uint64_t seed, int index);

/// Writes `count` samples as a dataset directory (manifest, annotations, PNGs,
/// posed bodies and scenes). Splits: the first `train_fraction` go to "train",
/// the rest to "test".
ContactDataset write_synthetic_dataset(const SynthWorld& world, std::uint64_t seed, int count,
                                       const std::filesystem::path& root,
                                       double train_fraction = 1.0);

}  // namespace deco
