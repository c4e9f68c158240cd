#include "deco/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

namespace deco {
namespace fs = std::filesystem;

std::size_t EdgeGraph::num_edges() const {
  std::size_t directed = 0;
  for (const auto& row : adjacency) directed += row.size();
  return directed / 2;
}

namespace {

std::vector<std::pair<int, int>> undirected_edges(const Triangles& triangles,
                                                  std::vector<int>* face_counts) {
  std::vector<std::pair<int, int>> all;
  all.reserve(static_cast<std::size_t>(triangles.rows()) * 3);
  for (Eigen::Index f = 0; f < triangles.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int a = triangles(f, k);
      int b = triangles(f, (k + 1) % 3);
      all.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<std::pair<int, int>> unique;
  if (face_counts) face_counts->clear();
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    unique.push_back(all[i]);
    if (face_counts) face_counts->push_back(static_cast<int>(j - i));
    i = j;
  }
  return unique;
}

}  // namespace

void validate_geometry(const Vertices& vertices, const Triangles& triangles) {
  const auto n = static_cast<int>(vertices.rows());
  if (n == 0) throw MeshError("mesh has no vertices");
  if (triangles.rows() == 0) throw MeshError("mesh has no triangles");
  if (!vertices.allFinite()) throw MeshError("mesh has non-finite vertex coordinates");
  for (Eigen::Index f = 0; f < triangles.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int idx = triangles(f, k);
      if (idx < 0 || idx >= n) {
        throw MeshError("triangle " + std::to_string(f) + " references vertex " +
                        std::to_string(idx) + " outside [0, " + std::to_string(n) + ")");
      }
    }
    if (triangles(f, 0) == triangles(f, 1) || triangles(f, 1) == triangles(f, 2) ||
        triangles(f, 0) == triangles(f, 2)) {
      throw MeshError("triangle " + std::to_string(f) + " is degenerate");
    }
  }
  std::vector<int> counts;
  const auto edges = undirected_edges(triangles, &counts);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (counts[e] > 2) {
      throw MeshError("non-manifold edge (" + std::to_string(edges[e].first) + ", " +
                      std::to_string(edges[e].second) + ") shared by " +
                      std::to_string(counts[e]) + " triangles");
    }
  }

  // Connectivity by union-find over edges.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [a, b] : edges) parent[find(a)] = find(b);
  const int root = find(0);
  for (int v = 1; v < n; ++v) {
    if (find(v) != root) throw MeshError("mesh edge graph is disconnected (vertex " +
                                         std::to_string(v) + ")");
  }
}

void validate(const TemplateMesh& mesh) {
  validate_geometry(mesh.vertices, mesh.triangles);
  if (static_cast<int>(mesh.part_labels.size()) != mesh.num_vertices()) {
    throw MeshError("part label count " + std::to_string(mesh.part_labels.size()) +
                    " does not match vertex count " + std::to_string(mesh.num_vertices()));
  }
  if (mesh.num_parts < 1) throw MeshError("template must have at least one part");
  std::vector<char> seen(mesh.num_parts, 0);
  for (int label : mesh.part_labels) {
    if (label < 0 || label >= mesh.num_parts) {
      throw MeshError("part label " + std::to_string(label) + " outside [0, " +
                      std::to_string(mesh.num_parts) + ")");
    }
    seen[label] = 1;
  }
  if (std::count(seen.begin(), seen.end(), 1) != mesh.num_parts) {
    throw MeshError("part labels do not use all " + std::to_string(mesh.num_parts) + " parts");
  }
}

std::vector<int> synthesize_parts(const Vertices& vertices, int parts, std::uint64_t seed) {
  const auto n = static_cast<int>(vertices.rows());
  if (parts < 1) throw MeshError("part count must be positive");
  if (parts > n) {
    throw MeshError("cannot split " + std::to_string(n) + " vertices into " +
                    std::to_string(parts) + " parts");
  }
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> centers(parts, 3);
  centers.row(0) = vertices.row(static_cast<int>(rng() % static_cast<std::uint64_t>(n)));
  Eigen::VectorXd nearest = (vertices.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < parts; ++c) {
    const double total = nearest.sum();
    int pick = 0;
    if (total > 0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= nearest(pick);
        if (target <= 0) break;
      }
    } else {
      pick = c;
    }
    centers.row(c) = vertices.row(pick);
    nearest = nearest.cwiseMin((vertices.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(n, -1);
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    for (int v = 0; v < n; ++v) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < parts; ++c) {
        const double d = (vertices.row(v) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[v] != best) {
        labels[v] = best;
        changed = true;
      }
    }
    // Refill empty clusters with the point farthest from its own center.
    std::vector<int> sizes(parts, 0);
    for (int l : labels) ++sizes[l];
    for (int c = 0; c < parts; ++c) {
      if (sizes[c] > 0) continue;
      int far = -1;
      double far_d = -1;
      for (int v = 0; v < n; ++v) {
        if (sizes[labels[v]] <= 1) continue;
        const double d = (vertices.row(v) - centers.row(labels[v])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = v;
        }
      }
      --sizes[labels[far]];
      labels[far] = c;
      sizes[c] = 1;
      centers.row(c) = vertices.row(far);
      changed = true;
    }
    centers.setZero();
    for (int v = 0; v < n; ++v) centers.row(labels[v]) += vertices.row(v);
    for (int c = 0; c < parts; ++c) centers.row(c) /= static_cast<double>(sizes[c]);
    if (!changed) break;
  }
  return labels;
}

EdgeGraph build_edge_graph(const Vertices& vertices, const Triangles& triangles) {
  EdgeGraph graph;
  graph.adjacency.resize(vertices.rows());
  for (const auto& [a, b] : undirected_edges(triangles, nullptr)) {
    const double length = (vertices.row(a) - vertices.row(b)).norm();
    if (!(length > 0)) {
      throw MeshError("zero-length edge between vertices " + std::to_string(a) + " and " +
                      std::to_string(b));
    }
    graph.adjacency[a].push_back({b, length});
    graph.adjacency[b].push_back({a, length});
  }
  return graph;
}

EdgeGraph build_edge_graph(const TemplateMesh& mesh) {
  return build_edge_graph(mesh.vertices, mesh.triangles);
}

VertexSet vertices_of_part(const TemplateMesh& mesh, int part) {
  if (part < 0 || part >= mesh.num_parts) {
    throw MeshError("unknown part id " + std::to_string(part));
  }
  VertexSet out;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.part_labels[v] == part) out.push_back(v);
  }
  return out;
}

// ---- IO ---------------------------------------------------------------------

namespace {

std::string lower_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

RawMesh from_lists(const std::vector<Eigen::Vector3d>& verts,
                   const std::vector<Eigen::Vector3i>& faces,
                   const std::vector<Eigen::Matrix<std::uint8_t, 3, 1>>& colors) {
  RawMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
  mesh.triangles.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.triangles.row(i) = faces[i].transpose();
  if (!colors.empty()) {
    VertexColors c(static_cast<Eigen::Index>(colors.size()), 3);
    for (std::size_t i = 0; i < colors.size(); ++i) c.row(i) = colors[i].transpose();
    mesh.colors = std::move(c);
  }
  return mesh;
}

RawMesh read_obj(std::istream& in, const fs::path& path) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ss >> p.x() >> p.y() >> p.z())) {
        throw MeshError(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      }
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string token;
      while (ss >> token) {
        const auto slash = token.find('/');
        int i = 0;
        try {
          i = std::stoi(token.substr(0, slash));
        } catch (const std::exception&) {
          throw MeshError(path.string() + ":" + std::to_string(line_no) + ": malformed face");
        }
        idx.push_back(i < 0 ? static_cast<int>(verts.size()) + i : i - 1);
      }
      if (idx.size() != 3) {
        throw MeshError(path.string() + ":" + std::to_string(line_no) +
                        ": only triangle faces are supported");
      }
      faces.emplace_back(idx[0], idx[1], idx[2]);
    }
  }
  return from_lists(verts, faces, {});
}

RawMesh read_ply(std::istream& in, const fs::path& path) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw MeshError(path.string() + ": missing ply magic");
  }
  std::size_t n_vertices = 0, n_faces = 0;
  std::vector<std::string> vertex_props;
  std::string current;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "element") {
      std::size_t count = 0;
      ss >> current >> count;
      if (current == "vertex") n_vertices = count;
      if (current == "face") n_faces = count;
    } else if (word == "property" && current == "vertex") {
      std::string type, name;
      ss >> type >> name;
      vertex_props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw MeshError(path.string() + ": only ASCII PLY is supported");
  auto prop_index = [&](const std::string& name) -> int {
    auto it = std::find(vertex_props.begin(), vertex_props.end(), name);
    return it == vertex_props.end() ? -1 : static_cast<int>(it - vertex_props.begin());
  };
  const int ix = prop_index("x"), iy = prop_index("y"), iz = prop_index("z");
  const int ir = prop_index("red"), ig = prop_index("green"), ib = prop_index("blue");
  if (ix < 0 || iy < 0 || iz < 0) throw MeshError(path.string() + ": vertex lacks x/y/z");
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

  std::vector<Eigen::Vector3d> verts(n_vertices);
  std::vector<Eigen::Matrix<std::uint8_t, 3, 1>> colors;
  if (has_color) colors.resize(n_vertices);
  std::vector<double> values(vertex_props.size());
  for (std::size_t v = 0; v < n_vertices; ++v) {
    if (!std::getline(in, line)) throw MeshError(path.string() + ": truncated vertex list");
    std::istringstream ss(line);
    for (auto& x : values) {
      if (!(ss >> x)) throw MeshError(path.string() + ": malformed vertex line");
    }
    verts[v] = {values[ix], values[iy], values[iz]};
    if (has_color) {
      colors[v] = {static_cast<std::uint8_t>(values[ir]), static_cast<std::uint8_t>(values[ig]),
                   static_cast<std::uint8_t>(values[ib])};
    }
  }
  std::vector<Eigen::Vector3i> faces(n_faces);
  for (std::size_t f = 0; f < n_faces; ++f) {
    if (!std::getline(in, line)) throw MeshError(path.string() + ": truncated face list");
    std::istringstream ss(line);
    int count = 0;
    if (!(ss >> count)) throw MeshError(path.string() + ": malformed face line");
    if (count != 3) throw MeshError(path.string() + ": only triangle faces are supported");
    if (!(ss >> faces[f].x() >> faces[f].y() >> faces[f].z())) {
      throw MeshError(path.string() + ": malformed face line");
    }
  }
  return from_lists(verts, faces, colors);
}

}  // namespace

RawMesh read_mesh(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file " + path.string());
  const auto ext = lower_extension(path);
  if (ext == ".obj") return read_obj(in, path);
  if (ext == ".ply") return read_ply(in, path);
  throw MeshError("unsupported mesh format: " + path.string());
}

void write_obj(const fs::path& path, const Vertices& vertices, const Triangles& triangles) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    out << "v " << vertices(v, 0) << ' ' << vertices(v, 1) << ' ' << vertices(v, 2) << '\n';
  }
  for (Eigen::Index f = 0; f < triangles.rows(); ++f) {
    out << "f " << triangles(f, 0) + 1 << ' ' << triangles(f, 1) + 1 << ' '
        << triangles(f, 2) + 1 << '\n';
  }
}

void write_ply(const fs::path& path, const Vertices& vertices, const Triangles& triangles,
               const VertexColors* colors) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << vertices.rows() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << triangles.rows() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(17);
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    out << vertices(v, 0) << ' ' << vertices(v, 1) << ' ' << vertices(v, 2);
    if (colors) {
      out << ' ' << int((*colors)(v, 0)) << ' ' << int((*colors)(v, 1)) << ' '
          << int((*colors)(v, 2));
    }
    out << '\n';
  }
  for (Eigen::Index f = 0; f < triangles.rows(); ++f) {
    out << "3 " << triangles(f, 0) << ' ' << triangles(f, 1) << ' ' << triangles(f, 2) << '\n';
  }
}

std::vector<int> read_part_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open part label file " + path.string());
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw MeshError(path.string() + ": malformed part label '" + line + "'");
    }
  }
  return labels;
}

void write_part_labels(const fs::path& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write " + path.string());
  for (int l : labels) out << l << '\n';
}

TemplateMesh load_template(const fs::path& path, int expected_parts,
                           const std::optional<fs::path>& labels_path) {
  RawMesh raw = read_mesh(path);
  validate_geometry(raw.vertices, raw.triangles);

  TemplateMesh mesh;
  mesh.id = path.stem().string();
  mesh.vertices = std::move(raw.vertices);
  mesh.triangles = std::move(raw.triangles);

  fs::path sidecar = labels_path.value_or(fs::path(path.string() + ".parts"));
  if (fs::exists(sidecar)) {
    mesh.part_labels = read_part_labels(sidecar);
    if (static_cast<int>(mesh.part_labels.size()) != mesh.num_vertices()) {
      throw MeshError("part label file has " + std::to_string(mesh.part_labels.size()) +
                      " lines, mesh has " + std::to_string(mesh.num_vertices()) + " vertices");
    }
    std::vector<int> distinct = mesh.part_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<int>(distinct.size()) != expected_parts) {
      throw MeshError("part-count mismatch: file has " + std::to_string(distinct.size()) +
                      " parts, expected " + std::to_string(expected_parts));
    }
  } else if (labels_path) {
    throw MeshError("part label file not found: " + labels_path->string());
  } else {
    mesh.part_labels = synthesize_parts(mesh.vertices, expected_parts);
  }
  mesh.num_parts = expected_parts;
  validate(mesh);
  return mesh;
}

TemplateMesh load_template(const fs::path& path) {
  const fs::path sidecar(path.string() + ".parts");
  if (!fs::exists(sidecar)) throw MeshError("no part label file next to " + path.string());
  std::vector<int> labels = read_part_labels(sidecar);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return load_template(path, static_cast<int>(labels.size()), sidecar);
}

void save_template(const TemplateMesh& mesh, const fs::path& path) {
  if (lower_extension(path) == ".ply") {
    write_ply(path, mesh.vertices, mesh.triangles);
  } else {
    write_obj(path, mesh.vertices, mesh.triangles);
  }
  write_part_labels(fs::path(path.string() + ".parts"), mesh.part_labels);
}

// ---- procedural templates ---------------------------------------------------

namespace {

TemplateMesh finish(std::string id, std::vector<Eigen::Vector3d> verts,
                    std::vector<Eigen::Vector3i> faces, int parts) {
  RawMesh raw = from_lists(verts, faces, {});
  TemplateMesh mesh;
  mesh.id = std::move(id);
  mesh.vertices = std::move(raw.vertices);
  mesh.triangles = std::move(raw.triangles);
  mesh.part_labels = synthesize_parts(mesh.vertices, parts);
  mesh.num_parts = parts;
  return mesh;
}

}  // namespace

TemplateMesh make_tetrahedron() {
  const double h = std::sqrt(3.0) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.5, h, 0.0}, {0.5, h / 3.0, std::sqrt(2.0 / 3.0)}};
  std::vector<Eigen::Vector3i> faces = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {2, 0, 3}};
  auto mesh = finish("tetrahedron", verts, faces, 1);
  return mesh;
}

TemplateMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<Eigen::Vector3i> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.emplace_back(f[0], a, c);
      next.emplace_back(f[1], b, a);
      next.emplace_back(f[2], c, b);
      next.emplace_back(a, b, c);
    }
    faces = std::move(next);
  }
  for (auto& v : verts) v *= radius;
  return finish("icosphere" + std::to_string(subdivisions), verts, faces, 1);
}

TemplateMesh make_uv_ellipsoid(int rings, int segments, const Eigen::Vector3d& radii) {
  if (rings < 1 || segments < 3) throw MeshError("uv ellipsoid needs rings >= 1, segments >= 3");
  std::vector<Eigen::Vector3d> verts;
  verts.emplace_back(0.0, radii.y(), 0.0);
  for (int i = 1; i <= rings; ++i) {
    const double theta = M_PI * i / (rings + 1);
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * M_PI * j / segments;
      verts.emplace_back(radii.x() * std::sin(theta) * std::cos(phi), radii.y() * std::cos(theta),
                         radii.z() * std::sin(theta) * std::sin(phi));
    }
  }
  verts.emplace_back(0.0, -radii.y(), 0.0);
  const int south = static_cast<int>(verts.size()) - 1;
  auto ring_vertex = [&](int ring, int seg) { return 1 + (ring - 1) * segments + seg % segments; };

  std::vector<Eigen::Vector3i> faces;
  for (int j = 0; j < segments; ++j) faces.emplace_back(0, ring_vertex(1, j + 1), ring_vertex(1, j));
  for (int i = 1; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      const int a = ring_vertex(i, j), b = ring_vertex(i, j + 1);
      const int c = ring_vertex(i + 1, j), d = ring_vertex(i + 1, j + 1);
      faces.emplace_back(a, b, d);
      faces.emplace_back(a, d, c);
    }
  }
  for (int j = 0; j < segments; ++j) {
    faces.emplace_back(south, ring_vertex(rings, j), ring_vertex(rings, j + 1));
  }
  return finish("uv_ellipsoid", verts, faces, 1);
}

TemplateMesh make_desk_body(int subdivisions, int parts) {
  TemplateMesh sphere = make_icosphere(subdivisions);
  // Superellipsoid (L4 ball) scaled to a 1.8 m tall, 0.44 m wide, 0.26 m deep body.
  const Eigen::RowVector3d radii(0.22, 0.9, 0.13);
  for (Eigen::Index v = 0; v < sphere.vertices.rows(); ++v) {
    Eigen::RowVector3d d = sphere.vertices.row(v);
    const double l4 = std::pow(d.array().pow(4).sum(), 0.25);
    sphere.vertices.row(v) = (d / l4).cwiseProduct(radii);
  }
  sphere.id = "desk_body";
  sphere.part_labels = synthesize_parts(sphere.vertices, parts);
  sphere.num_parts = parts;
  return sphere;
}

TemplateMesh make_body_stand_in() {
  // 2 poles + 82 rings * 84 segments = 6890 vertices.
  TemplateMesh mesh = make_uv_ellipsoid(82, 84, Eigen::Vector3d(0.2, 0.9, 0.12));
  mesh.id = "body_stand_in";
  mesh.part_labels = synthesize_parts(mesh.vertices, 24);
  mesh.num_parts = 24;
  return mesh;
}

VertexColors contact_colors(const Eigen::VectorXd& probabilities) {
  VertexColors colors(probabilities.size(), 3);
  for (Eigen::Index v = 0; v < probabilities.size(); ++v) {
    const double p = std::clamp(probabilities(v), 0.0, 1.0);
    const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - p)));
    colors.row(v) << 255, fade, fade;
  }
  return colors;
}

}  // namespace deco
