#include "deco/geodesic.hpp"
#include "deco/mesh.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

#include <doctest.h>

#include <fstream>
#include <numeric>

using namespace deco;

namespace {

double edge_length(const EdgeGraph& g, int a, int b) {
  for (const auto& n : g.adjacency[a]) {
    if (n.vertex == b) return n.length;
  }
  return -1;
}

}  // namespace

TEST_CASE("tetrahedron file with two parts loads as a 4-vertex template") {
  testing::TempDir dir;
  const TemplateMesh tet = make_tetrahedron();
  write_obj(dir.path() / "tet.obj", tet.vertices, tet.triangles);
  const TemplateMesh loaded = load_template(dir.path() / "tet.obj", 2);
  CHECK(loaded.num_vertices() == 4);
  CHECK(loaded.num_parts == 2);
  std::set<int> parts(loaded.part_labels.begin(), loaded.part_labels.end());
  CHECK(parts == std::set<int>{0, 1});
}

TEST_CASE("icosphere at 3 subdivisions is a valid 642-vertex closed mesh") {
  TemplateMesh ico = make_icosphere(3);
  ico.part_labels = synthesize_parts(ico.vertices, 24);
  ico.num_parts = 24;
  CHECK(ico.num_vertices() == 642);
  CHECK_NOTHROW(validate(ico));
  const auto e = static_cast<long>(oracle::edges(ico.triangles).size());
  CHECK(ico.num_vertices() - e + ico.num_triangles() == 2);
  CHECK(e == 3 * (ico.num_vertices() - 2));
  CHECK(build_edge_graph(ico).num_edges() == static_cast<std::size_t>(e));
}

TEST_CASE("body stand-in has the canonical vertex and part counts") {
  const TemplateMesh body = make_body_stand_in();
  CHECK(body.num_vertices() == 6890);
  CHECK(body.num_parts == 24);
  CHECK_NOTHROW(validate(body));
}

TEST_CASE("unit tetrahedron has six unit edges") {
  const EdgeGraph g = build_edge_graph(make_tetrahedron());
  CHECK(g.num_edges() == 6);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) CHECK(edge_length(g, a, b) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("3-4-5 triangle edge lengths") {
  Vertices v(3, 3);
  v << 0, 0, 0, 3, 0, 0, 0, 4, 0;
  Triangles t(1, 3);
  t << 0, 1, 2;
  const EdgeGraph g = build_edge_graph(v, t);
  CHECK(edge_length(g, 0, 1) == doctest::Approx(3.0));
  CHECK(edge_length(g, 0, 2) == doctest::Approx(4.0));
  CHECK(edge_length(g, 1, 2) == doctest::Approx(5.0));
}

TEST_CASE("validation rejects broken geometry") {
  Vertices v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 5, 5;
  Triangles bad_index(1, 3);
  bad_index << 0, 1, 7;
  CHECK_THROWS_AS(validate_geometry(v.topRows(3), bad_index), MeshError);
  Triangles degenerate(1, 3);
  degenerate << 0, 0, 1;
  CHECK_THROWS_AS(validate_geometry(v.topRows(3), degenerate), MeshError);
  Triangles disconnected(1, 3);
  disconnected << 0, 1, 2;
  CHECK_THROWS_AS(validate_geometry(v, disconnected), MeshError);
  Vertices fan(5, 3);
  fan << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1;
  Triangles nonmanifold(3, 3);
  nonmanifold << 0, 1, 2, 0, 1, 3, 0, 1, 4;
  CHECK_THROWS_AS(validate_geometry(fan, nonmanifold), MeshError);
}

TEST_CASE("part lookup") {
  TemplateMesh tet = make_tetrahedron();
  CHECK(vertices_of_part(tet, 0) == VertexSet{0, 1, 2, 3});

  testing::TempDir dir;
  write_obj(dir.path() / "tet.obj", tet.vertices, tet.triangles);
  write_part_labels(dir.path() / "labels.txt", {0, 0, 1, 1});
  const TemplateMesh labeled = load_template(dir.path() / "tet.obj", 2, dir.path() / "labels.txt");
  CHECK(vertices_of_part(labeled, 0) == VertexSet{0, 1});
  CHECK(vertices_of_part(labeled, 1) == VertexSet{2, 3});
}

TEST_CASE("synthetic 24-part clustering partitions the icosphere") {
  const TemplateMesh ico = make_icosphere(3);
  const auto labels = synthesize_parts(ico.vertices, 24);
  TemplateMesh m = ico;
  m.part_labels = labels;
  m.num_parts = 24;
  std::vector<int> seen(642, 0);
  std::size_t total = 0;
  for (int j = 0; j < 24; ++j) {
    const VertexSet part = vertices_of_part(m, j);
    CHECK_FALSE(part.empty());
    total += part.size();
    for (int v : part) ++seen[static_cast<std::size_t>(v)];
  }
  CHECK(total == 642);
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK(synthesize_parts(ico.vertices, 24) == labels);
}

TEST_CASE("template save and load round trip") {
  testing::TempDir dir;
  const TemplateMesh body = make_desk_body();
  save_template(body, dir.path() / "body.ply");
  const TemplateMesh back = load_template(dir.path() / "body.ply");
  CHECK(back.num_vertices() == body.num_vertices());
  CHECK(back.triangles == body.triangles);
  CHECK(back.part_labels == body.part_labels);
  CHECK(back.num_parts == body.num_parts);
  CHECK((back.vertices - body.vertices).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("PLY colors survive a round trip") {
  testing::TempDir dir;
  const TemplateMesh tet = make_tetrahedron();
  Eigen::VectorXd p(4);
  p << 0, 0.25, 0.5, 1;
  const VertexColors colors = contact_colors(p);
  write_ply(dir.path() / "c.ply", tet.vertices, tet.triangles, &colors);
  const RawMesh back = read_mesh(dir.path() / "c.ply");
  REQUIRE(back.colors);
  CHECK(*back.colors == colors);
  CHECK((*back.colors)(3, 1) == 0);
  CHECK((*back.colors)(0, 1) == 255);
}

TEST_CASE("missing mesh file is an error") {
  CHECK_THROWS(read_mesh("/nonexistent/mesh.obj"));
}
