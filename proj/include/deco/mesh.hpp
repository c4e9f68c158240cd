#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deco {

/// Row-major N x 3 vertex positions in meters.
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
/// Per-vertex RGB, 0..255.
using VertexColors = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Sorted, deduplicated vertex indices.
using VertexSet = std::vector<int>;

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kPartClusteringSeed = 0x5eed'0f'9a27ULL;

/// Canonical body mesh on which all contact labels live.
struct TemplateMesh {
  std::string id;
  Vertices vertices;
  Triangles triangles;
  std::vector<int> part_labels;
  int num_parts = 0;

  int num_vertices() const { return static_cast<int>(vertices.rows()); }
  int num_triangles() const { return static_cast<int>(triangles.rows()); }
};

struct Neighbor {
  int vertex;
  double length;
};

/// Undirected edge graph of a triangle mesh; each edge is stored in both directions.
struct EdgeGraph {
  std::vector<std::vector<Neighbor>> adjacency;

  int num_vertices() const { return static_cast<int>(adjacency.size()); }
  std::size_t num_edges() const;
};

/// Plain geometry as read from disk.
struct RawMesh {
  Vertices vertices;
  Triangles triangles;
  std::optional<VertexColors> colors;
};

// Validation throws MeshError on out-of-range indices, degenerate triangles,
// edges shared by more than two triangles, or a disconnected edge graph.
void validate_geometry(const Vertices& vertices, const Triangles& triangles);
void validate(const TemplateMesh& mesh);

/// Loads an OBJ or PLY mesh. Part labels come from `labels_path` if given,
/// otherwise from a sidecar `<mesh>.parts` file next to it, otherwise they are
/// synthesized by spatial clustering with a fixed seed.
TemplateMesh load_template(const std::filesystem::path& path, int expected_parts,
                           const std::optional<std::filesystem::path>& labels_path = std::nullopt);

/// Loads a mesh whose `<path>.parts` sidecar defines the part count.
TemplateMesh load_template(const std::filesystem::path& path);

/// Saves mesh plus sidecar part file (`<path>.parts`).
void save_template(const TemplateMesh& mesh, const std::filesystem::path& path);

/// Deterministic k-means partition into exactly `parts` non-empty clusters.
std::vector<int> synthesize_parts(const Vertices& vertices, int parts,
                                  std::uint64_t seed = kPartClusteringSeed);

EdgeGraph build_edge_graph(const TemplateMesh& mesh);
EdgeGraph build_edge_graph(const Vertices& vertices, const Triangles& triangles);

VertexSet vertices_of_part(const TemplateMesh& mesh, int part);

// ---- mesh IO ----------------------------------------------------------------

RawMesh read_mesh(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const Vertices& vertices,
               const Triangles& triangles);
void write_ply(const std::filesystem::path& path, const Vertices& vertices,
               const Triangles& triangles, const VertexColors* colors = nullptr);

std::vector<int> read_part_labels(const std::filesystem::path& path);
void write_part_labels(const std::filesystem::path& path, const std::vector<int>& labels);

// ---- procedural templates ---------------------------------------------------

TemplateMesh make_tetrahedron();
TemplateMesh make_icosphere(int subdivisions, double radius = 1.0);
/// Latitude/longitude ellipsoid: 2 + rings * segments vertices.
TemplateMesh make_uv_ellipsoid(int rings, int segments, const Eigen::Vector3d& radii);
/// Rounded-box body stand-in used by the synthetic world (642 vertices at 3 subdivisions).
TemplateMesh make_desk_body(int subdivisions = 3, int parts = 8);
/// 6890-vertex, 24-part stand-in with the canonical template's vertex and part counts.
TemplateMesh make_body_stand_in();

/// Maps probabilities in [0,1] to a white-to-red ramp.
VertexColors contact_colors(const Eigen::VectorXd& probabilities);

}  // namespace deco
