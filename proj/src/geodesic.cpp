#include "deco/geodesic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>

namespace deco {
namespace {

using QueueItem = std::pair<double, int>;
using MinQueue = std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>>;

// Dijkstra that stops once the frontier exceeds `limit`.
Eigen::VectorXd bounded_dijkstra(const EdgeGraph& graph, std::span<const int> sources,
                                 double limit) {
  const int n = graph.num_vertices();
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  MinQueue queue;
  for (int s : sources) {
    if (s < 0 || s >= n) throw std::out_of_range("source vertex " + std::to_string(s));
    dist(s) = 0.0;
    queue.emplace(0.0, s);
  }
  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (d > dist(u)) continue;
    if (d > limit) break;
    for (const auto& [v, length] : graph.adjacency[u]) {
      const double candidate = d + length;
      if (candidate < dist(v)) {
        dist(v) = candidate;
        queue.emplace(candidate, v);
      }
    }
  }
  return dist;
}

}  // namespace

Eigen::VectorXd geodesic_distances(const EdgeGraph& graph, std::span<const int> sources) {
  if (sources.empty()) throw std::invalid_argument("geodesic_distances: empty source set");
  return bounded_dijkstra(graph, sources, std::numeric_limits<double>::infinity());
}

VertexSet geodesic_neighborhood(const EdgeGraph& graph, int center, double radius) {
  if (!(radius >= 0)) throw std::invalid_argument("geodesic_neighborhood: negative radius");
  const int sources[] = {center};
  const Eigen::VectorXd dist = bounded_dijkstra(graph, sources, radius + kBrushBoundaryTolerance);
  VertexSet out;
  for (int v = 0; v < dist.size(); ++v) {
    if (dist(v) <= radius + kBrushBoundaryTolerance) out.push_back(v);
  }
  return out;
}

BrushCache::BrushCache(const EdgeGraph& graph, std::vector<double> radii)
    : radii_(std::move(radii)), num_vertices_(graph.num_vertices()) {
  if (radii_.empty()) throw std::invalid_argument("brush cache needs at least one radius");
  for (double r : radii_) {
    if (!(r >= 0)) throw std::invalid_argument("brush radius must be >= 0");
  }
  const double max_radius = *std::max_element(radii_.begin(), radii_.end());
  table_.assign(radii_.size(), std::vector<VertexSet>(num_vertices_));
  for (int v = 0; v < num_vertices_; ++v) {
    const int sources[] = {v};
    const Eigen::VectorXd dist =
        bounded_dijkstra(graph, sources, max_radius + kBrushBoundaryTolerance);
    for (std::size_t r = 0; r < radii_.size(); ++r) {
      auto& entry = table_[r][v];
      for (int u = 0; u < num_vertices_; ++u) {
        if (dist(u) <= radii_[r] + kBrushBoundaryTolerance) entry.push_back(u);
      }
    }
  }
}

int BrushCache::radius_index(double radius) const {
  for (std::size_t i = 0; i < radii_.size(); ++i) {
    if (std::abs(radii_[i] - radius) <= 1e-12 * std::max(1.0, std::abs(radius))) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

const VertexSet& BrushCache::neighborhood(int radius_index, int vertex) const {
  return table_.at(radius_index).at(vertex);
}

void BrushCache::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["format"] = "brush-cache";
  doc["version"] = 1;
  doc["num_vertices"] = num_vertices_;
  doc["radii"] = radii_;
  doc["neighborhoods"] = table_;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump();
}

BrushCache BrushCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto doc = nlohmann::json::parse(in);
  if (doc.value("format", "") != "brush-cache" || doc.value("version", 0) != 1) {
    throw std::runtime_error(path.string() + ": not a version-1 brush cache");
  }
  BrushCache cache;
  cache.num_vertices_ = doc.at("num_vertices").get<int>();
  cache.radii_ = doc.at("radii").get<std::vector<double>>();
  cache.table_ = doc.at("neighborhoods").get<std::vector<std::vector<VertexSet>>>();
  if (cache.table_.size() != cache.radii_.size()) {
    throw std::runtime_error(path.string() + ": radius/table count mismatch");
  }
  for (const auto& per_radius : cache.table_) {
    if (static_cast<int>(per_radius.size()) != cache.num_vertices_) {
      throw std::runtime_error(path.string() + ": vertex count mismatch");
    }
  }
  return cache;
}

BrushCache precompute_brush_cache(const EdgeGraph& graph, std::vector<double> radii) {
  return BrushCache(graph, std::move(radii));
}

VertexSet replay_strokes(const BrushCache& cache, std::span<const Stroke> strokes) {
  std::vector<char> selected(cache.num_vertices(), 0);
  for (const auto& stroke : strokes) {
    const int r = cache.radius_index(stroke.radius);
    if (r < 0) {
      throw std::invalid_argument("unpublished brush radius " + std::to_string(stroke.radius));
    }
    if (stroke.center < 0 || stroke.center >= cache.num_vertices()) {
      throw std::invalid_argument("stroke center " + std::to_string(stroke.center) +
                                  " out of range");
    }
    const char value = stroke.mode == BrushMode::Draw ? 1 : 0;
    for (int v : cache.neighborhood(r, stroke.center)) selected[v] = value;
  }
  VertexSet out;
  for (int v = 0; v < cache.num_vertices(); ++v) {
    if (selected[v]) out.push_back(v);
  }
  return out;
}

}  // namespace deco
