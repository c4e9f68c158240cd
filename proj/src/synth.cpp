#include "deco/synth.hpp"

#include "deco/image_io.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace deco {
namespace fs = std::filesystem;
using nlohmann::json;

// ---- scene serialization ----------------------------------------------------

namespace {

json matrix_rows(const Vertices& v) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < v.rows(); ++i) rows.push_back({v(i, 0), v(i, 1), v(i, 2)});
  return rows;
}

json matrix_rows(const Triangles& t) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < t.rows(); ++i) rows.push_back({t(i, 0), t(i, 1), t(i, 2)});
  return rows;
}

}  // namespace

json to_json(const SceneGeometry& scene) {
  json meshes = json::array();
  for (const auto& m : scene.meshes) {
    meshes.push_back({{"label", m.label},
                      {"supports_body", m.supports_body},
                      {"vertices", matrix_rows(m.vertices)},
                      {"triangles", matrix_rows(m.triangles)}});
  }
  return {{"meshes", meshes}};
}

SceneGeometry scene_from_json(const json& doc) {
  SceneGeometry scene;
  for (const auto& m : doc.at("meshes")) {
    SceneMesh mesh;
    mesh.label = m.at("label").get<std::string>();
    mesh.supports_body = m.value("supports_body", true);
    const auto& verts = m.at("vertices");
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) {
      for (int k = 0; k < 3; ++k) mesh.vertices(i, k) = verts[i][k].get<double>();
    }
    const auto& tris = m.at("triangles");
    mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
    for (std::size_t i = 0; i < tris.size(); ++i) {
      for (int k = 0; k < 3; ++k) mesh.triangles(i, k) = tris[i][k].get<int>();
    }
    scene.meshes.push_back(std::move(mesh));
  }
  return scene;
}

// ---- geometric contact ------------------------------------------------------

Eigen::MatrixXd contact_distances(const PosedBody& body, const SceneGeometry& scene) {
  const auto n = body.vertices.rows();
  Eigen::MatrixXd dist(n, static_cast<Eigen::Index>(scene.meshes.size()));
  for (std::size_t m = 0; m < scene.meshes.size(); ++m) {
    const auto& mesh = scene.meshes[m];
    for (Eigen::Index v = 0; v < n; ++v) {
      const Eigen::Vector3d p = body.vertices.row(v).transpose();
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index f = 0; f < mesh.triangles.rows(); ++f) {
        const Eigen::Vector3d a = mesh.vertices.row(mesh.triangles(f, 0)).transpose();
        const Eigen::Vector3d b = mesh.vertices.row(mesh.triangles(f, 1)).transpose();
        const Eigen::Vector3d c = mesh.vertices.row(mesh.triangles(f, 2)).transpose();
        best = std::min(best, point_triangle_distance(p, a, b, c));
      }
      dist(v, static_cast<Eigen::Index>(m)) = best;
    }
  }
  return dist;
}

VertexContactVector geometric_contact(const PosedBody& body, const SceneGeometry& scene,
                                      double threshold) {
  if (scene.meshes.empty()) throw std::invalid_argument("geometric_contact: empty scene");
  if (!(threshold > 0)) throw std::invalid_argument("geometric_contact: threshold must be > 0");
  const auto n = body.vertices.rows();
  VertexContactVector contact = VertexContactVector::Zero(n);
  for (const auto& mesh : scene.meshes) {
    // Vertices farther than the threshold from the mesh bounding box cannot touch it.
    const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
    const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
    for (Eigen::Index v = 0; v < n; ++v) {
      if (contact(v) == 1.0) continue;
      const Eigen::RowVector3d p = body.vertices.row(v);
      const Eigen::RowVector3d outside = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
      if (outside.norm() > threshold) continue;
      const Eigen::Vector3d pc = p.transpose();
      for (Eigen::Index f = 0; f < mesh.triangles.rows(); ++f) {
        const double d = point_triangle_distance<double>(
            pc, mesh.vertices.row(mesh.triangles(f, 0)).transpose(),
            mesh.vertices.row(mesh.triangles(f, 1)).transpose(),
            mesh.vertices.row(mesh.triangles(f, 2)).transpose());
        if (d <= threshold) {
          contact(v) = 1.0;
          break;
        }
      }
    }
  }
  return contact;
}

// ---- rasterization ----------------------------------------------------------

Eigen::MatrixXi rasterize_nearest(const std::vector<RasterTriangle>& triangles, int height,
                                  int width) {
  Eigen::MatrixXi ids = Eigen::MatrixXi::Constant(height, width, -1);
  Eigen::MatrixXd depth =
      Eigen::MatrixXd::Constant(height, width, -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    const Eigen::Vector2d& a = tri.pixels[0];
    const Eigen::Vector2d& b = tri.pixels[1];
    const Eigen::Vector2d& c = tri.pixels[2];
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area == 0 || !std::isfinite(area)) continue;
    const double x0 = std::min({a.x(), b.x(), c.x()}), x1 = std::max({a.x(), b.x(), c.x()});
    const double y0 = std::min({a.y(), b.y(), c.y()}), y1 = std::max({a.y(), b.y(), c.y()});
    const int c0 = std::max(0, static_cast<int>(std::ceil(std::max(x0, -1.0))));
    const int c1 = std::min(width - 1, static_cast<int>(std::floor(std::min(x1, double(width)))));
    const int r0 = std::max(0, static_cast<int>(std::ceil(std::max(y0, -1.0))));
    const int r1 = std::min(height - 1, static_cast<int>(std::floor(std::min(y1, double(height)))));
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        const Eigen::Vector2d p(col, r);
        auto edge = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v, const Eigen::Vector2d& q) {
          return (v - u).x() * (q - u).y() - (v - u).y() * (q - u).x();
        };
        const double w0 = edge(b, c, p) / area;
        const double w1 = edge(c, a, p) / area;
        const double w2 = edge(a, b, p) / area;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double z = w0 * tri.depth[0] + w1 * tri.depth[1] + w2 * tri.depth[2];
        if (z > depth(r, col)) {
          depth(r, col) = z;
          ids(r, col) = static_cast<int>(t);
        }
      }
    }
  }
  return ids;
}

Eigen::Vector3d Palette::label_color(const std::string& label) const {
  static const std::map<std::string, Eigen::Vector3d> known = {
      {"ground", {0.55, 0.50, 0.42}},
      {"chair", {0.60, 0.35, 0.20}},
      {"wall", {0.82, 0.80, 0.70}},
      {"cup", {0.20, 0.50, 0.80}},
  };
  if (auto it = known.find(label); it != known.end()) return it->second;
  const auto h = std::hash<std::string>{}(label);
  return {0.3 + 0.5 * ((h >> 0) & 255) / 255.0, 0.3 + 0.5 * ((h >> 8) & 255) / 255.0,
          0.3 + 0.5 * ((h >> 16) & 255) / 255.0};
}

Eigen::Vector3d Palette::part_color(int part, int num_parts) const {
  // Hue wheel at moderate saturation.
  const double hue = 6.0 * part / std::max(1, num_parts);
  const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
  Eigen::Vector3d rgb;
  switch (static_cast<int>(hue) % 6) {
    case 0: rgb << 1, x, 0; break;
    case 1: rgb << x, 1, 0; break;
    case 2: rgb << 0, 1, x; break;
    case 3: rgb << 0, x, 1; break;
    case 4: rgb << x, 0, 1; break;
    default: rgb << 1, 0, x; break;
  }
  return 0.35 + 0.55 * rgb.array();
}

FlatRender render_flat(const SceneGeometry& scene, const PosedBody* body,
                       const TemplateMesh& body_template, const Camera& camera,
                       const std::vector<std::string>& vocabulary, const Palette& palette) {
  check_camera(camera);
  struct Owner {
    Eigen::Vector3d color;
    int scene_label;
    int part_label;
  };
  std::vector<RasterTriangle> triangles;
  std::vector<Owner> owners;

  auto add_mesh = [&](const Vertices& verts, const Triangles& tris, auto&& owner_of) {
    const Points2<double> px = project_weak_perspective(verts, camera);
    for (Eigen::Index f = 0; f < tris.rows(); ++f) {
      RasterTriangle rt;
      for (int k = 0; k < 3; ++k) {
        rt.pixels[k] = px.row(tris(f, k)).transpose();
        rt.depth[k] = verts(tris(f, k), 2);
      }
      rt.id = static_cast<int>(owners.size());
      triangles.push_back(rt);
      owners.push_back(owner_of(f));
    }
  };

  for (const auto& mesh : scene.meshes) {
    auto it = std::find(vocabulary.begin(), vocabulary.end(), mesh.label);
    if (it == vocabulary.end()) {
      throw std::invalid_argument("scene label '" + mesh.label + "' not in vocabulary");
    }
    const int label = 1 + static_cast<int>(it - vocabulary.begin());
    const Eigen::Vector3d color = palette.label_color(mesh.label);
    add_mesh(mesh.vertices, mesh.triangles, [&](Eigen::Index) { return Owner{color, label, 0}; });
  }
  if (body) {
    if (body->vertices.rows() != body_template.num_vertices()) {
      throw std::invalid_argument("posed body does not match template vertex count");
    }
    add_mesh(body->vertices, body_template.triangles, [&](Eigen::Index f) {
      // A triangle takes the part of its first vertex.
      const int part = body_template.part_labels[body_template.triangles(f, 0)];
      return Owner{palette.part_color(part, body_template.num_parts), 0, part + 1};
    });
  }

  const int h = camera.height, w = camera.width;
  const Eigen::MatrixXi nearest = rasterize_nearest(triangles, h, w);
  FlatRender out;
  for (int k = 0; k < 3; ++k) {
    out.image.channels[k] = Eigen::MatrixXd::Constant(h, w, palette.background(k));
  }
  out.scene_mask = LabelMap::Zero(h, w);
  out.part_mask = LabelMap::Zero(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int t = nearest(r, c);
      if (t < 0) continue;
      const auto& o = owners[t];
      for (int k = 0; k < 3; ++k) out.image.channels[k](r, c) = o.color(k);
      out.scene_mask(r, c) = o.scene_label;
      out.part_mask(r, c) = o.part_label;
    }
  }
  return out;
}

// ---- vertex visibility (declared in render.hpp) -----------------------------

Eigen::VectorXd vertex_visibility(const Vertices& vertices, const Triangles& triangles,
                                  const Camera& camera, double depth_tolerance) {
  check_camera(camera);
  const Points2<double> px = project_weak_perspective(vertices, camera);
  std::vector<RasterTriangle> tris;
  tris.reserve(triangles.rows());
  for (Eigen::Index f = 0; f < triangles.rows(); ++f) {
    RasterTriangle rt;
    for (int k = 0; k < 3; ++k) {
      rt.pixels[k] = px.row(triangles(f, k)).transpose();
      rt.depth[k] = vertices(triangles(f, k), 2);
    }
    rt.id = static_cast<int>(f);
    tris.push_back(rt);
  }
  const int h = camera.height, w = camera.width;
  const Eigen::MatrixXi nearest = rasterize_nearest(tris, h, w);
  Eigen::VectorXd visible = Eigen::VectorXd::Zero(vertices.rows());
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    const int c = static_cast<int>(std::lround(px(v, 0)));
    const int r = static_cast<int>(std::lround(px(v, 1)));
    if (r < 0 || r >= h || c < 0 || c >= w) continue;
    const int t = nearest(r, c);
    if (t < 0) {
      visible(v) = 1.0;
      continue;
    }
    // Depth of the winning triangle at the vertex's projected position.
    const auto& tri = tris[t];
    const Eigen::Vector2d p = px.row(v).transpose();
    const Eigen::Vector2d a = tri.pixels[0], b = tri.pixels[1], cc = tri.pixels[2];
    const double area = (b - a).x() * (cc - a).y() - (b - a).y() * (cc - a).x();
    const double w0 = ((cc - b).x() * (p - b).y() - (cc - b).y() * (p - b).x()) / area;
    const double w1 = ((a - cc).x() * (p - cc).y() - (a - cc).y() * (p - cc).x()) / area;
    const double z = w0 * tri.depth[0] + w1 * tri.depth[1] + (1 - w0 - w1) * tri.depth[2];
    if (vertices(v, 2) >= z - depth_tolerance) visible(v) = 1.0;
  }
  return visible;
}

// ---- synthetic world --------------------------------------------------------

void SynthConfig::validate() const {
  if (image_size < 8) throw std::invalid_argument("synth: image_size must be >= 8");
  if (num_parts < 1) throw std::invalid_argument("synth: num_parts must be >= 1");
  if (!(contact_threshold > 0)) throw std::invalid_argument("synth: contact_threshold must be > 0");
  if (!(camera_scale > 0)) throw std::invalid_argument("synth: camera_scale must be > 0");
  if (!(splat_sigma > 0)) throw std::invalid_argument("synth: splat_sigma must be > 0");
  if (pose_families.empty()) throw std::invalid_argument("synth: no pose families");
  if (float_height_min > float_height_max || float_height_min < 0) {
    throw std::invalid_argument("synth: invalid float height range");
  }
  static const std::map<std::string, std::vector<std::string>> needs = {
      {"stand", {"ground"}}, {"lie", {"ground"}},          {"sit", {"ground", "chair"}},
      {"lean", {"ground", "wall"}}, {"hold", {"ground", "cup"}}, {"float", {"ground"}}};
  for (const auto& family : pose_families) {
    auto it = needs.find(family);
    if (it == needs.end()) throw std::invalid_argument("synth: unknown pose family " + family);
    for (const auto& label : it->second) {
      if (std::find(vocabulary.begin(), vocabulary.end(), label) == vocabulary.end()) {
        throw std::invalid_argument("synth: pose family " + family + " needs label '" + label +
                                    "' in the vocabulary");
      }
    }
  }
}

json to_json(const SynthConfig& c) {
  return {{"image_size", c.image_size},
          {"body_subdivisions", c.body_subdivisions},
          {"num_parts", c.num_parts},
          {"template_path", c.template_path},
          {"vocabulary", c.vocabulary},
          {"contact_threshold", c.contact_threshold},
          {"camera_pitch_deg", c.camera_pitch_deg},
          {"camera_scale", c.camera_scale},
          {"camera_scale_jitter", c.camera_scale_jitter},
          {"splat_sigma", c.splat_sigma},
          {"pose_families", c.pose_families},
          {"float_height_min", c.float_height_min},
          {"float_height_max", c.float_height_max},
          {"ground_half_extent", c.ground_half_extent}};
}

SynthConfig synth_config_from_json(const json& doc) {
  SynthConfig c;
  c.image_size = doc.value("image_size", c.image_size);
  c.body_subdivisions = doc.value("body_subdivisions", c.body_subdivisions);
  c.num_parts = doc.value("num_parts", c.num_parts);
  c.template_path = doc.value("template_path", c.template_path);
  c.vocabulary = doc.value("vocabulary", c.vocabulary);
  c.contact_threshold = doc.value("contact_threshold", c.contact_threshold);
  c.camera_pitch_deg = doc.value("camera_pitch_deg", c.camera_pitch_deg);
  c.camera_scale = doc.value("camera_scale", c.camera_scale);
  c.camera_scale_jitter = doc.value("camera_scale_jitter", c.camera_scale_jitter);
  c.splat_sigma = doc.value("splat_sigma", c.splat_sigma);
  c.pose_families = doc.value("pose_families", c.pose_families);
  c.float_height_min = doc.value("float_height_min", c.float_height_min);
  c.float_height_max = doc.value("float_height_max", c.float_height_max);
  c.ground_half_extent = doc.value("ground_half_extent", c.ground_half_extent);
  c.validate();
  return c;
}

LabelMap contact_mask_2d(const Vertices& body, const VertexContactVector& contact,
                         const Camera& camera, double sigma) {
  const Points2<double> px = project_weak_perspective(body, camera);
  const Eigen::MatrixXd map = splat_render<double>(px, contact, camera, {sigma, 4.0});
  return (map.array() >= 0.5).cast<int>().matrix();
}

namespace {

SceneMesh make_box(const std::string& label, bool supports, const Eigen::Vector3d& lo,
                   const Eigen::Vector3d& hi) {
  SceneMesh box;
  box.label = label;
  box.supports_body = supports;
  box.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    box.vertices.row(i) << ((i & 1) ? hi.x() : lo.x()), ((i & 2) ? hi.y() : lo.y()),
        ((i & 4) ? hi.z() : lo.z());
  }
  box.triangles.resize(12, 3);
  box.triangles << 0, 2, 3, 0, 3, 1,  // z = lo
      4, 5, 7, 4, 7, 6,               // z = hi
      0, 1, 5, 0, 5, 4,               // y = lo
      2, 6, 7, 2, 7, 3,               // y = hi
      0, 4, 6, 0, 6, 2,               // x = lo
      1, 3, 7, 1, 7, 5;               // x = hi
  return box;
}

SceneMesh make_ground(double half) {
  SceneMesh ground;
  ground.label = "ground";
  ground.supports_body = true;
  ground.vertices.resize(4, 3);
  ground.vertices << -half, 0, -half, half, 0, -half, half, 0, half, -half, 0, half;
  ground.triangles.resize(2, 3);
  ground.triangles << 0, 2, 1, 0, 3, 2;
  return ground;
}

void transform(Vertices& v, const Eigen::Matrix3d& rotation,
               const Eigen::RowVector3d& offset = Eigen::RowVector3d::Zero()) {
  v = (v * rotation.transpose()).rowwise() + offset;
}

Eigen::Matrix3d rotation(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

void rest_on(Vertices& v, double height) {
  const double min_y = v.col(1).minCoeff();
  Eigen::RowVector3d shift = Eigen::RowVector3d::Zero();
  shift.y() = height - min_y;
  // Center horizontally.
  shift.x() = -0.5 * (v.col(0).minCoeff() + v.col(0).maxCoeff());
  shift.z() = -0.5 * (v.col(2).minCoeff() + v.col(2).maxCoeff());
  v.rowwise() += shift;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

SynthWorld::SynthWorld(SynthConfig config)
    : config_(std::move(config)),
      template_(config_.template_path.empty()
                    ? make_desk_body(config_.body_subdivisions, config_.num_parts)
                    : load_template(config_.template_path, config_.num_parts)) {
  config_.validate();
}

SynthWorld::SynthWorld(SynthConfig config, TemplateMesh body_template)
    : config_(std::move(config)), template_(std::move(body_template)) {
  config_.validate();
  validate(template_);
}

SynthSample SynthWorld::generate(std::uint64_t seed) const {
  std::mt19937_64 rng(splitmix64(seed));
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double pi = std::numbers::pi;
  const Eigen::Vector3d x_axis = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d y_axis = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d z_axis = Eigen::Vector3d::UnitZ();

  SynthSample sample;
  sample.seed = seed;
  const auto family_index =
      std::uniform_int_distribution<std::size_t>(0, config_.pose_families.size() - 1)(rng);
  sample.pose_family = config_.pose_families[family_index];
  const std::string& family = sample.pose_family;

  Vertices body = template_.vertices;
  std::vector<SceneMesh> props;
  const double yaw = uniform(0.0, 2.0 * pi);
  char provenance[160];

  if (family == "stand") {
    rest_on(body, 0.0);
    std::snprintf(provenance, sizeof provenance, "stand yaw=%.6f", yaw);
  } else if (family == "lie") {
    const int face = std::uniform_int_distribution<int>(0, 3)(rng);
    transform(body, rotation(z_axis, pi / 2) * rotation(y_axis, face * pi / 2));
    rest_on(body, 0.0);
    std::snprintf(provenance, sizeof provenance, "lie face=%d yaw=%.6f", face, yaw);
  } else if (family == "sit") {
    const double seat = uniform(0.35, 0.5);
    rest_on(body, seat);
    props.push_back(make_box("chair", true, {-0.3, 0.0, -0.3}, {0.3, seat, 0.3}));
    std::snprintf(provenance, sizeof provenance, "sit seat=%.6f yaw=%.6f", seat, yaw);
  } else if (family == "lean") {
    const double tilt = uniform(10.0, 20.0) * pi / 180.0;
    transform(body, rotation(z_axis, -tilt));
    rest_on(body, 0.0);
    const double face = body.col(0).maxCoeff();
    props.push_back(make_box("wall", true, {face, 0.0, -1.0}, {face + 0.2, 2.2, 1.0}));
    std::snprintf(provenance, sizeof provenance, "lean tilt=%.6f yaw=%.6f", tilt, yaw);
  } else if (family == "hold") {
    rest_on(body, 0.0);
    const double height = uniform(0.8, 1.1);
    const double side = body.col(0).maxCoeff();
    props.push_back(
        make_box("cup", false, {side, height - 0.06, -0.04}, {side + 0.08, height + 0.06, 0.04}));
    std::snprintf(provenance, sizeof provenance, "hold height=%.6f yaw=%.6f", height, yaw);
  } else {  // float
    const double lift = uniform(config_.float_height_min, config_.float_height_max);
    rest_on(body, lift);
    std::snprintf(provenance, sizeof provenance, "float lift=%.6f yaw=%.6f", lift, yaw);
  }

  // Yaw everything about the vertical axis, then move to the camera frame.
  const Eigen::Matrix3d world_to_camera =
      rotation(x_axis, config_.camera_pitch_deg * pi / 180.0) * rotation(y_axis, yaw);
  transform(body, world_to_camera);
  sample.body.vertices = body;
  sample.body.provenance = provenance;

  SceneMesh ground = make_ground(config_.ground_half_extent);
  sample.scene.meshes.push_back(std::move(ground));
  for (auto& p : props) sample.scene.meshes.push_back(std::move(p));
  for (auto& m : sample.scene.meshes) transform(m.vertices, world_to_camera);

  // Frame the body.
  Camera& cam = sample.camera;
  cam.height = cam.width = config_.image_size;
  cam.scale = config_.camera_scale * (1.0 + uniform(-1.0, 1.0) * config_.camera_scale_jitter);
  const double cx = 0.5 * (body.col(0).minCoeff() + body.col(0).maxCoeff());
  const double cy = 0.5 * (body.col(1).minCoeff() + body.col(1).maxCoeff());
  cam.tx = -cam.scale * cx + uniform(-0.05, 0.05);
  cam.ty = -cam.scale * cy + uniform(-0.05, 0.05);

  // Ground truth.
  const Eigen::MatrixXd dist = contact_distances(sample.body, sample.scene);
  const auto n = body.rows();
  sample.gt_contact = VertexContactVector::Zero(n);
  ContactRecord& record = sample.record;
  record.image_id = "seed" + std::to_string(seed);
  std::map<std::string, VertexSet> by_label;
  for (std::size_t m = 0; m < sample.scene.meshes.size(); ++m) {
    const auto& mesh = sample.scene.meshes[m];
    for (Eigen::Index v = 0; v < n; ++v) {
      if (dist(v, static_cast<Eigen::Index>(m)) > config_.contact_threshold) continue;
      sample.gt_contact(v) = 1.0;
      by_label[mesh.label].push_back(static_cast<int>(v));
      if (mesh.supports_body) record.scene_supported.push_back(static_cast<int>(v));
    }
  }
  for (auto& [label, ids] : by_label) record.object_contacts.push_back({label, std::move(ids)});
  canonicalize(record);

  FlatRender render = render_flat(sample.scene, &sample.body, template_, cam, config_.vocabulary);
  sample.image = std::move(render.image);
  sample.gt_scene_mask = std::move(render.scene_mask);
  sample.gt_part_mask = std::move(render.part_mask);
  sample.gt_contact_mask_2d = contact_mask_2d(body, sample.gt_contact, cam, config_.splat_sigma);
  return sample;
}

SynthSample generate_sample(std::uint64_t seed, const SynthConfig& config) {
  return SynthWorld(config).generate(seed);
}

std::uint64_t dataset_sample_seed(std::uint64_t seed, int index) {
  return splitmix64(seed * 0x100000001b3ULL + static_cast<std::uint64_t>(index));
}

ContactDataset write_synthetic_dataset(const SynthWorld& world, std::uint64_t seed, int count,
                                       const fs::path& root, double train_fraction) {
  if (count < 0) throw std::invalid_argument("sample count must be >= 0");
  for (const char* sub : {"images", "masks", "bodies", "scenes", "annotations"}) {
    fs::create_directories(root / sub);
  }
  ContactDataset dataset;
  dataset.template_id = world.body_template().id;
  dataset.num_vertices = world.body_template().num_vertices();
  dataset.vocabulary = world.config().vocabulary;
  dataset.template_path = "template.obj";
  save_template(world.body_template(), root / dataset.template_path);

  const int train_count = static_cast<int>(std::lround(train_fraction * count));
  auto& train = dataset.splits["train"];
  auto& test = dataset.splits["test"];
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%06d", i);
    SynthSample sample = world.generate(dataset_sample_seed(seed, i));

    ContactRecord record = std::move(sample.record);
    record.image_id = id;
    record.image_path = std::string("images/") + id + ".png";
    SampleAux aux;
    aux.camera = sample.camera;
    aux.body_path = std::string("bodies/") + id + ".ply";
    aux.scene_path = std::string("scenes/") + id + ".json";
    aux.scene_mask_path = std::string("masks/") + id + "_scene.png";
    aux.part_mask_path = std::string("masks/") + id + "_part.png";
    aux.contact_mask_path = std::string("masks/") + id + "_contact.png";

    write_png(root / record.image_path, sample.image);
    write_label_png(root / aux.scene_mask_path, sample.gt_scene_mask);
    write_label_png(root / aux.part_mask_path, sample.gt_part_mask);
    write_label_png(root / aux.contact_mask_path, sample.gt_contact_mask_2d, 255);
    write_ply(root / aux.body_path, sample.body.vertices, world.body_template().triangles);
    std::ofstream(root / aux.scene_path) << to_json(sample.scene).dump() << '\n';

    record.aux = std::move(aux);
    (i < train_count ? train : test).push_back(record.image_id);
    dataset.records.push_back(std::move(record));
  }
  save_dataset(dataset, root);
  return dataset;
}

}  // namespace deco
