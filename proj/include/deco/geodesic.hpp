#pragma once

#include "deco/mesh.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <vector>

namespace deco {

/// Slack on the inclusive brush boundary, absorbs round-off in summed edge lengths.
inline constexpr double kBrushBoundaryTolerance = 1e-9;

/// Multi-source Dijkstra on the edge graph. Unreachable vertices get +inf.
Eigen::VectorXd geodesic_distances(const EdgeGraph& graph, std::span<const int> sources);

/// { v : d(center, v) <= radius }, sorted.
VertexSet geodesic_neighborhood(const EdgeGraph& graph, int center, double radius);

/// Per-(radius, vertex) brush footprints, computed once at startup.
class BrushCache {
 public:
  BrushCache() = default;
  BrushCache(const EdgeGraph& graph, std::vector<double> radii);

  const std::vector<double>& radii() const { return radii_; }
  int num_vertices() const { return num_vertices_; }

  /// Index of `radius` among the published radii, or -1.
  int radius_index(double radius) const;
  const VertexSet& neighborhood(int radius_index, int vertex) const;
  const std::vector<VertexSet>& table(int radius_index) const { return table_.at(radius_index); }

  void save(const std::filesystem::path& path) const;
  static BrushCache load(const std::filesystem::path& path);

  friend bool operator==(const BrushCache&, const BrushCache&) = default;

 private:
  std::vector<double> radii_;
  int num_vertices_ = 0;
  std::vector<std::vector<VertexSet>> table_;  // [radius][vertex]
};

BrushCache precompute_brush_cache(const EdgeGraph& graph, std::vector<double> radii);

enum class BrushMode { Draw, Erase };

struct Stroke {
  int center = 0;
  double radius = 0.0;
  BrushMode mode = BrushMode::Draw;
};

/// Folds strokes in order: draw unions the footprint, erase subtracts it.
/// Throws std::invalid_argument for unpublished radii or out-of-range centers.
VertexSet replay_strokes(const BrushCache& cache, std::span<const Stroke> strokes);

}  // namespace deco
