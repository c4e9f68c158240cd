#include "deco/contact_data.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

#include <doctest.h>

#include <fstream>

using namespace deco;

namespace {

ContactRecord random_record(std::mt19937_64& rng, const std::string& id, int nv,
                            const std::vector<std::string>& vocabulary) {
  ContactRecord r;
  r.image_id = id;
  r.image_path = "images/" + id + ".png";
  const int objects = static_cast<int>(rng() % 3);
  for (int k = 0; k < objects; ++k) {
    r.object_contacts.push_back({vocabulary[rng() % vocabulary.size()], oracle::random_subset(rng, nv, 0.2)});
  }
  r.scene_supported = oracle::random_subset(rng, nv, 0.1);
  if (rng() % 2) r.annotator_id = "ann" + std::to_string(rng() % 5);
  if (rng() % 3 == 0) r.feedback = "tricky \"pose\"\n";
  r.has_3d_labels = rng() % 5 != 0;
  if (rng() % 2) {
    SampleAux aux;
    aux.camera = {0.5 + (rng() % 100) / 100.0, 0.125, -0.25, 64, 48};
    aux.body_path = "bodies/" + id + ".ply";
    aux.scene_path = "scenes/" + id + ".json";
    r.aux = aux;
  }
  return r;
}

ContactDataset random_dataset(std::mt19937_64& rng, int records, int nv) {
  ContactDataset d;
  d.template_id = "random";
  d.num_vertices = nv;
  d.vocabulary = default_vocabulary();
  for (int i = 0; i < records; ++i) d.records.push_back(random_record(rng, "img" + std::to_string(i), nv, d.vocabulary));
  for (int i = 0; i < records; ++i) d.splits[i % 4 == 0 ? "test" : "train"].push_back(d.records[i].image_id);
  return d;
}

ContactRecord chair_record() {
  ContactRecord r;
  r.image_id = "a";
  r.object_contacts = {{"chair", {2, 5}}};
  r.scene_supported = {5, 7};
  return r;
}

}  // namespace

TEST_CASE("binarize") {
  ContactRecord empty;
  empty.image_id = "e";
  CHECK(binarize(empty, 10).isZero());

  const Eigen::VectorXd u = binarize(chair_record(), 10);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(10);
  expected(2) = expected(5) = expected(7) = 1;
  CHECK(u == expected);

  const Eigen::VectorXd chair = binarize(chair_record(), 10, BinarizeMode::PerObject, "chair");
  Eigen::VectorXd expected_chair = Eigen::VectorXd::Zero(10);
  expected_chair(2) = expected_chair(5) = 1;
  CHECK(chair == expected_chair);

  const Eigen::VectorXd scene = binarize(chair_record(), 10, BinarizeMode::SceneOnly);
  CHECK(scene.sum() == 2);
  CHECK_THROWS_AS(binarize(chair_record(), 10, BinarizeMode::PerObject, "cup"), DatasetError);
  CHECK_THROWS_AS(binarize(chair_record(), 6), DatasetError);
}

TEST_CASE("aggregate contact probability") {
  ContactDataset d;
  d.num_vertices = 4;
  d.vocabulary = default_vocabulary();
  ContactRecord a;
  a.image_id = "a";
  a.scene_supported = {0, 1};
  d.records = {a};
  d.splits["s"] = {"a"};
  CHECK(aggregate_contact_probability(d, "s") == binarize(a, 4));

  ContactRecord b;
  b.image_id = "b";
  b.object_contacts = {{"chair", {2}}};
  d.records.push_back(b);
  d.splits["s"].push_back("b");
  Eigen::VectorXd half(4);
  half << 0.5, 0.5, 0.5, 0;
  CHECK(aggregate_contact_probability(d, "s") == half);

  d.splits["empty"] = {};
  CHECK_THROWS_AS(aggregate_contact_probability(d, "empty"), DatasetError);
}

TEST_CASE("aggregate probability on random tetrahedron records matches counting") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    ContactDataset d;
    d.num_vertices = 4;
    d.vocabulary = default_vocabulary();
    std::vector<int> count(4, 0);
    for (int i = 0; i < 10; ++i) {
      ContactRecord r;
      r.image_id = "r" + std::to_string(i);
      r.scene_supported = oracle::random_subset(rng, 4, 0.4);
      r.object_contacts = {{"cup", oracle::random_subset(rng, 4, 0.3)}};
      for (int v = 0; v < 4; ++v) {
        const bool in = std::count(r.scene_supported.begin(), r.scene_supported.end(), v) ||
                        std::count(r.object_contacts[0].vertices.begin(), r.object_contacts[0].vertices.end(), v);
        count[v] += in;
      }
      d.records.push_back(r);
      d.splits["all"].push_back(r.image_id);
    }
    const Eigen::VectorXd p = aggregate_contact_probability(d, "all");
    for (int v = 0; v < 4; ++v) {
      CHECK(p(v) == doctest::Approx(count[v] / 10.0).epsilon(1e-15));
      CHECK(p(v) >= 0.0);
      CHECK(p(v) <= 1.0);
    }
  }
}

TEST_CASE("part contact histogram") {
  TemplateMesh tet = make_tetrahedron();
  tet.part_labels = {0, 0, 1, 1};
  tet.num_parts = 2;
  ContactDataset d;
  d.num_vertices = 4;
  d.vocabulary = default_vocabulary();
  CHECK(part_contact_histogram(d, tet, 1) == std::vector<int>{0, 0});

  ContactRecord r;
  r.image_id = "r";
  r.scene_supported = {2, 3};
  d.records = {r};
  CHECK(part_contact_histogram(d, tet, 2) == std::vector<int>{0, 1});
  CHECK(part_contact_histogram(d, tet, 3) == std::vector<int>{0, 0});
  CHECK_THROWS(part_contact_histogram(d, tet, 0));
}

TEST_CASE("histograms match nested-loop enumeration on random data") {
  std::mt19937_64 rng(22);
  TemplateMesh mesh = make_icosphere(1);
  mesh.part_labels = synthesize_parts(mesh.vertices, 5);
  mesh.num_parts = 5;
  const ContactDataset d = random_dataset(rng, 20, mesh.num_vertices());
  for (int min_v : {1, 3, 8}) {
    std::vector<int> expected(5, 0);
    for (const auto& r : d.records) {
      for (int p = 0; p < 5; ++p) {
        int n = 0;
        for (int v = 0; v < mesh.num_vertices(); ++v) {
          if (mesh.part_labels[v] != p) continue;
          bool hit = std::binary_search(r.scene_supported.begin(), r.scene_supported.end(), v);
          for (const auto& oc : r.object_contacts) hit = hit || std::binary_search(oc.vertices.begin(), oc.vertices.end(), v);
          n += hit;
        }
        expected[p] += n >= min_v;
      }
    }
    CHECK(part_contact_histogram(d, mesh, min_v) == expected);
  }

  std::map<std::string, int> labels;
  for (const auto& r : d.records) {
    for (const auto& name : d.vocabulary) {
      bool present = false;
      for (const auto& oc : r.object_contacts) present = present || oc.label == name;
      if (present) ++labels[name];
    }
  }
  CHECK(object_label_histogram(d) == labels);
}

TEST_CASE("object label histogram") {
  ContactDataset d;
  CHECK(object_label_histogram(d).empty());
  ContactRecord a = chair_record(), b = chair_record();
  b.image_id = "b";
  b.object_contacts.push_back({"chair", {9}});
  d.records = {a, b};
  CHECK(object_label_histogram(d) == std::map<std::string, int>{{"chair", 2}});
}

TEST_CASE("dataset round trips") {
  testing::TempDir dir;
  SUBCASE("empty") {
    ContactDataset d;
    d.num_vertices = 4;
    d.vocabulary = default_vocabulary();
    save_dataset(d, dir.path());
    CHECK(load_dataset(dir.path()) == d);
    CHECK(dataset_from_json(dataset_to_json(d)) == d);
  }
  SUBCASE("100 random records") {
    std::mt19937_64 rng(23);
    const ContactDataset d = random_dataset(rng, 100, 642);
    REQUIRE_NOTHROW(validate_dataset(d));
    save_dataset(d, dir.path());
    CHECK(load_dataset(dir.path()) == d);
    CHECK(dataset_from_json(dataset_to_json(d)) == d);
    for (const auto& r : d.records) CHECK(record_from_json(to_json(r)) == r);
  }
}

TEST_CASE("validation errors") {
  ContactRecord r = chair_record();
  CHECK_NOTHROW(validate_record(r, 8, default_vocabulary()));
  CHECK_THROWS_AS(validate_record(r, 7, default_vocabulary()), DatasetError);
  ContactRecord unsorted = r;
  unsorted.scene_supported = {7, 5};
  CHECK_THROWS_AS(validate_record(unsorted, 8, default_vocabulary()), DatasetError);
  canonicalize(unsorted);
  CHECK(unsorted.scene_supported == VertexSet{5, 7});
  ContactRecord unknown = r;
  unknown.object_contacts[0].label = "sofa";
  CHECK_THROWS_AS(validate_record(unknown, 8, default_vocabulary()), DatasetError);
  ContactRecord traversal = r;
  traversal.image_id = "../etc";
  CHECK_THROWS_AS(validate_record(traversal, 8, default_vocabulary()), DatasetError);
}

TEST_CASE("loading a record with an out-of-range vertex fails") {
  testing::TempDir dir;
  ContactDataset d;
  d.num_vertices = 8;
  d.vocabulary = default_vocabulary();
  d.records = {chair_record()};
  d.splits["train"] = {"a"};
  save_dataset(d, dir.path());
  {
    std::ofstream out(dir.path() / "annotations" / "a.json");
    nlohmann::json doc = to_json(chair_record());
    doc["scene_supported"] = {5, 8};
    out << doc.dump();
  }
  CHECK_THROWS_AS(load_dataset(dir.path()), DatasetError);
}

TEST_CASE("schema version and split checks") {
  ContactDataset d;
  d.num_vertices = 8;
  d.vocabulary = default_vocabulary();
  d.records = {chair_record()};
  nlohmann::json doc = dataset_to_json(d);
  doc["schema_version"] = 99;
  CHECK_THROWS_AS(dataset_from_json(doc), DatasetError);

  d.splits["train"] = {"a"};
  d.splits["test"] = {"a"};
  CHECK_THROWS_AS(validate_dataset(d), DatasetError);
  d.splits["test"] = {"zzz"};
  CHECK_THROWS_AS(validate_dataset(d), DatasetError);
  CHECK_THROWS_AS(d.split("nope"), DatasetError);
}

TEST_CASE("vocabulary file") {
  testing::TempDir dir;
  {
    std::ofstream out(dir.path() / "vocab.txt");
    out << "ground\nsofa\n\nbed\n";
  }
  CHECK(load_vocabulary(dir.path() / "vocab.txt") == std::vector<std::string>{"ground", "sofa", "bed"});
}
