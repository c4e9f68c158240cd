#include "deco/annotation.hpp"
#include "deco/annotation_server.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <fstream>
#include <thread>

using namespace deco;
using namespace deco::annotation;
using nlohmann::json;

namespace {

ServiceOptions options(std::vector<double> radii = {0.0, 0.3, 0.6}) {
  ServiceOptions o;
  o.brush_radii = std::move(radii);
  o.reviewers = {"rev"};
  o.prequalified = {"alice", "bob", "carol"};
  return o;
}

AnnotationStore make_store(ServiceOptions o = options()) {
  return AnnotationStore(make_icosphere(2), default_vocabulary(), std::move(o));
}

StrokeSubmission draw(const AnnotationStore& store, const AnnotationTask& t, const std::string& who, int center,
                      double radius) {
  StrokeSubmission s;
  s.task_id = t.task_id;
  s.annotator = who;
  s.label = t.current_prompt();
  s.strokes = {{center, radius, BrushMode::Draw}};
  const int ri = store.brush_cache().radius_index(radius);
  s.final_vertices = store.brush_cache().neighborhood(ri, center);
  s.prompt_index = t.prompt_index;
  return s;
}

/// Walks every prompt of the annotator's next task with one stroke each.
AnnotationTask complete(AnnotationStore& store, const std::string& who, int center) {
  auto t = store.next_task(who);
  REQUIRE(t);
  AnnotationTask cur = *t;
  while (cur.state == TaskState::Open) cur = store.submit(draw(store, cur, who, center, 0.3));
  return cur;
}

int expect_status(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 0;
}

struct Served {
  AnnotationStore& store;
  AnnotationServer server;
  int port;
  std::thread thread;
  explicit Served(AnnotationStore& s) : store(s), server(s), port(server.bind_to_any_port("127.0.0.1")) {
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Served() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    return c;
  }
};

}  // namespace

TEST_CASE("task assignment") {
  AnnotationStore store = make_store();
  SUBCASE("empty queue returns nothing") { CHECK_FALSE(store.next_task("alice")); }
  SUBCASE("unqualified annotators are rejected") {
    store.add_task("img1", {"chair"});
    CHECK(expect_status([&] { store.next_task("mallory"); }) == 403);
  }
  SUBCASE("an annotator gets the same open task back and never the same image twice") {
    store.add_task("img1", {"chair"});
    store.add_task("img1", {"chair"});
    const auto a = store.next_task("alice");
    REQUIRE(a);
    CHECK(store.next_task("alice")->task_id == a->task_id);
    CHECK(a->label_sequence == std::vector<std::string>{"chair", kSceneSupportedPrompt});
    complete(store, "alice", 4);
    CHECK_FALSE(store.next_task("alice"));
    CHECK(store.next_task("bob"));
  }
  SUBCASE("bad task definitions are rejected") {
    CHECK(expect_status([&] { store.add_task("../x", {}); }) == 422);
    CHECK(expect_status([&] { store.add_task("img", {"sofa"}); }) == 422);
  }
}

TEST_CASE("concurrent requests for one open task: exactly one wins") {
  for (int round = 0; round < 20; ++round) {
    AnnotationStore store = make_store();
    store.add_task("img", {});
    std::atomic<int> winners{0};
    std::vector<std::thread> threads;
    for (const char* who : {"alice", "bob", "carol"}) {
      threads.emplace_back([&, who] {
        if (store.next_task(who)) ++winners;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(winners == 1);
  }
}

TEST_CASE("submission validation") {
  AnnotationStore store = make_store();
  store.add_task("img", {"chair"});
  const AnnotationTask t = *store.next_task("alice");

  SUBCASE("one draw stroke stores the footprint and advances the prompt") {
    const auto s = draw(store, t, "alice", 7, 0.3);
    const AnnotationTask after = store.submit(s);
    CHECK(after.prompt_index == 1);
    REQUIRE(after.object_contacts.size() == 1);
    CHECK(after.object_contacts[0].vertices == geodesic_neighborhood(build_edge_graph(store.mesh()), 7, 0.3));
    CHECK(expect_status([&] { store.submit(s); }) == 409);
  }
  SUBCASE("draw then erase gives an empty selection") {
    StrokeSubmission s = draw(store, t, "alice", 7, 0.6);
    s.strokes.push_back({7, 0.6, BrushMode::Erase});
    s.final_vertices = {};
    const AnnotationTask after = store.submit(s);
    CHECK(after.object_contacts.empty());
    CHECK(after.prompt_index == 1);
  }
  SUBCASE("a mismatched final set is rejected with a diff") {
    StrokeSubmission s = draw(store, t, "alice", 7, 0.3);
    s.final_vertices.push_back(161);
    try {
      store.submit(s);
      FAIL("expected rejection");
    } catch (const ServiceError& e) {
      CHECK(e.status() == 422);
      CHECK(e.detail()["extra"] == json::array({161}));
    }
    CHECK(store.task(t.task_id).prompt_index == 0);
  }
  SUBCASE("wrong label, stale prompt, other annotator, bad radius") {
    StrokeSubmission s = draw(store, t, "alice", 7, 0.3);
    s.label = "wall";
    CHECK(expect_status([&] { store.submit(s); }) == 409);
    s = draw(store, t, "alice", 7, 0.3);
    s.prompt_index = 1;
    CHECK(expect_status([&] { store.submit(s); }) == 409);
    s = draw(store, t, "bob", 7, 0.3);
    CHECK(expect_status([&] { store.submit(s); }) == 409);
    s = draw(store, t, "alice", 7, 0.3);
    s.strokes[0].radius = 0.25;
    CHECK(expect_status([&] { store.submit(s); }) == 422);
  }
}

TEST_CASE("review state machine") {
  AnnotationStore store = make_store();
  store.add_task("img", {"cup"});
  const AnnotationTask done = complete(store, "alice", 3);
  CHECK(done.state == TaskState::Submitted);
  CHECK(expect_status([&] { store.review(done.task_id, "ok", "", "alice"); }) == 403);
  CHECK(expect_status([&] { store.review(done.task_id, "maybe", "", "rev"); }) == 400);

  SUBCASE("ok finalizes, repeats are idempotent, contradictions conflict, export sees it") {
    CHECK(store.export_dataset().records.empty());
    CHECK(store.review(done.task_id, "ok", "", "rev").state == TaskState::Finalized);
    CHECK(store.review(done.task_id, "ok", "", "rev").state == TaskState::Finalized);
    CHECK(expect_status([&] { store.review(done.task_id, "flag", "", "rev"); }) == 409);
    const ContactDataset d = store.export_dataset();
    REQUIRE(d.records.size() == 1);
    CHECK(d.records[0].image_id == "img");
    CHECK(d.records[0].annotator_id == "alice");
  }
  SUBCASE("flag sends the task back to the queue") {
    CHECK(store.review(done.task_id, "flag", "missed the hand", "rev").state == TaskState::Reannotate);
    CHECK(store.review(done.task_id, "flag", "missed the hand", "rev").state == TaskState::Reannotate);
    CHECK(expect_status([&] { store.review(done.task_id, "ok", "", "rev"); }) == 409);
    const auto again = store.next_task("bob");
    REQUIRE(again);
    CHECK(again->task_id == done.task_id);
    CHECK(again->prompt_index == 0);
    CHECK(again->object_contacts.empty());
    CHECK(store.export_dataset().records.empty());
  }
  SUBCASE("reviewing an open task conflicts") {
    const std::string open = store.add_task("img2", {});
    CHECK(expect_status([&] { store.review(open, "ok", "", "rev"); }) == 409);
  }
}

TEST_CASE("export holds only finalized tasks") {
  AnnotationStore store = make_store();
  for (int i = 0; i < 4; ++i) store.add_task("img" + std::to_string(i), {"chair"});
  std::vector<std::string> ids;
  for (const char* who : {"alice", "bob", "carol"}) ids.push_back(complete(store, who, 10).task_id);
  store.review(ids[0], "ok", "", "rev");
  store.review(ids[1], "flag", "", "rev");
  const ContactDataset d = store.export_dataset();
  REQUIRE(d.records.size() == 1);
  for (const auto& t : store.tasks()) {
    const bool exported = std::any_of(d.records.begin(), d.records.end(), [&](const auto& r) { return r.image_id == t.image_id; });
    CHECK(exported == (t.state == TaskState::Finalized));
  }
}

TEST_CASE("agreement") {
  AnnotationStore store = make_store();
  store.add_task("img", {});
  store.add_task("img", {});
  store.add_task("solo", {});
  complete(store, "alice", 20);
  CHECK(expect_status([&] { store.agreement({"img"}); }) == 422);
  complete(store, "bob", 20);
  const json a = store.agreement({"img"});
  CHECK(a["images"]["img"]["kappa"] == 1.0);
  CHECK(a["images"]["img"]["iou"][0][1] == 1.0);
  CHECK(expect_status([&] { store.agreement({"solo"}); }) == 422);
}

TEST_CASE("qualification") {
  ServiceOptions o = options();
  o.prequalified.clear();
  o.qualification_set = {{"q1", {1, 2, 3, 4}}, {"q2", {5, 6}}};
  AnnotationStore store = make_store(o);
  const json fail = store.submit_qualification("dan", {{"q1", {1, 2}}});
  CHECK(fail["passed"] == false);
  CHECK(fail["mean_iou"] == doctest::Approx(0.25));
  CHECK_FALSE(store.is_qualified("dan"));
  const json pass = store.submit_qualification("dan", {{"q1", {1, 2}}, {"q2", {5, 6}}});
  CHECK(pass["passed"] == true);
  CHECK(store.is_qualified("dan"));
  CHECK(expect_status([&] { store.submit_qualification("dan", {{"zz", {}}}); }) == 422);
}

TEST_CASE("the event log replays to the same state, tolerating a torn tail") {
  testing::TempDir dir;
  ServiceOptions o = options();
  o.log_path = dir.path() / "events.jsonl";
  std::vector<AnnotationTask> before;
  {
    AnnotationStore store = make_store(o);
    store.add_task("img", {"chair"});
    store.add_task("img2", {});
    const auto done = complete(store, "alice", 5);
    store.review(done.task_id, "ok", "fine", "rev");
    store.next_task("bob");
    before = store.tasks();
  }
  {
    std::ofstream out(o.log_path, std::ios::app);
    out << "{\"event\": \"add_ta";
  }
  AnnotationStore replayed = make_store(o);
  const auto after = replayed.tasks();
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(to_json(after[i]) == to_json(before[i]));
  CHECK(replayed.export_dataset() == make_store(o).export_dataset());
}

TEST_CASE("HTTP interface") {
  AnnotationStore store = make_store();
  Served served(store);
  auto cli = served.client();

  SUBCASE("health and template") {
    auto r = cli.Get("/health");
    REQUIRE(r);
    CHECK(r->status == 200);
    r = cli.Get("/template");
    REQUIRE(r);
    const json t = json::parse(r->body);
    CHECK(t["num_vertices"] == 162);
    CHECK(t["triangles"].size() == 320);
    CHECK(t["brush_radii"] == json::array({0.0, 0.3, 0.6}));
    CHECK(r->get_header_value("Cache-Control").find("immutable") != std::string::npos);
  }
  SUBCASE("brush cache tables") {
    auto r = cli.Get("/brush-cache?radius=0.3");
    REQUIRE(r);
    CHECK(r->status == 200);
    const json b = json::parse(r->body);
    CHECK(b["neighborhoods"].size() == 162);
    CHECK(b["neighborhoods"][5].get<VertexSet>() == store.brush_cache().neighborhood(1, 5));
    r = cli.Get("/brush-cache?radius=0.31");
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK_FALSE(json::parse(r->body).contains("neighborhoods"));
    r = cli.Get("/brush-cache?radius=abc");
    CHECK(r->status == 400);
  }
  SUBCASE("task flow") {
    auto r = cli.Get("/task/next?annotator=alice");
    REQUIRE(r);
    CHECK(json::parse(r->body)["task"] == "none");
    r = cli.Post("/tasks", json{{"image_id", "img"}, {"labels", {"chair"}}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 201);
    r = cli.Get("/task/next?annotator=mallory");
    CHECK(r->status == 403);
    r = cli.Get("/task/next?annotator=alice");
    const json task = json::parse(r->body)["task"];
    const std::string id = task["task_id"];
    for (const std::string label : {"chair", kSceneSupportedPrompt}) {
      json sub = {{"annotator", "alice"},
                  {"label", label},
                  {"strokes", {{{"center", 3}, {"radius", 0.3}, {"mode", "draw"}}}},
                  {"final_vertices", store.brush_cache().neighborhood(1, 3)}};
      r = cli.Post("/task/" + id + "/annotation", sub.dump(), "application/json");
      REQUIRE(r);
      CHECK(r->status == 200);
    }
    CHECK(json::parse(r->body)["feedback_requested"] == true);
    r = cli.Post("/task/" + id + "/annotation", "{not json", "application/json");
    CHECK(r->status == 400);
    r = cli.Post("/qa/review", json{{"task_id", id}, {"verdict", "ok"}, {"notes", ""}, {"reviewer", "rev"}}.dump(),
                 "application/json");
    CHECK(r->status == 200);
    r = cli.Get("/export");
    const ContactDataset d = dataset_from_json(json::parse(r->body));
    CHECK(d.records.size() == 1);
    r = cli.Get("/task/" + id);
    CHECK(json::parse(r->body)["state"] == "finalized");
    r = cli.Get("/task/nope");
    CHECK(r->status == 404);
  }
  SUBCASE("agreement and qualification errors") {
    auto r = cli.Get("/qa/agreement?image_set=img");
    CHECK(r->status == 422);
    r = cli.Post("/qualification/submit", json{{"annotator", "x"}, {"responses", json::object()}}.dump(),
                 "application/json");
    CHECK(r->status == 409);
  }
}

TEST_CASE("HTTP token check") {
  ServiceOptions o = options();
  o.auth_token = "s3cret";
  AnnotationStore store = make_store(o);
  Served served(store);
  auto cli = served.client();
  CHECK(cli.Get("/health")->status == 401);
  httplib::Headers h = {{"X-Auth-Token", "s3cret"}};
  CHECK(cli.Get("/health", h)->status == 200);
}

TEST_CASE("HTTP race for one task") {
  AnnotationStore store = make_store();
  store.add_task("img", {});
  Served served(store);
  std::atomic<int> winners{0};
  std::vector<std::thread> threads;
  for (const char* who : {"alice", "bob"}) {
    threads.emplace_back([&, who] {
      auto cli = served.client();
      auto r = cli.Get(std::string("/task/next?annotator=") + who);
      if (r && json::parse(r->body)["task"] != "none") ++winners;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(winners == 1);
}
