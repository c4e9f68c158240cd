#include "deco/annotation_server.hpp"

#include "deco/contact_data.hpp"

#include <httplib.h>

#include <sstream>

namespace deco::annotation {
namespace {

using nlohmann::json;

constexpr const char* kJson = "application/json";

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const json& detail = json::object()) {
  json body = detail.is_object() ? detail : json::object();
  body["schema_version"] = kApiSchemaVersion;
  body["error"] = message;
  send(res, status, body);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(400, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::string required_param(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) {
    throw ServiceError(400, "missing query parameter '" + name + "'");
  }
  return req.get_param_value(name);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationStore& store;
  httplib::Server http;
  json template_payload;

  explicit Impl(AnnotationStore& s) : store(s) {
    const TemplateMesh& mesh = store.mesh();
    json vertices = json::array();
    for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
      vertices.push_back({mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2)});
    }
    json triangles = json::array();
    for (Eigen::Index i = 0; i < mesh.triangles.rows(); ++i) {
      triangles.push_back({mesh.triangles(i, 0), mesh.triangles(i, 1), mesh.triangles(i, 2)});
    }
    template_payload = {{"schema_version", kApiSchemaVersion},
                        {"id", mesh.id},
                        {"num_vertices", mesh.vertices.rows()},
                        {"num_parts", mesh.num_parts},
                        {"vertices", vertices},
                        {"triangles", triangles},
                        {"part_labels", mesh.part_labels},
                        {"brush_radii", store.brush_cache().radii()},
                        {"vocabulary", store.vocabulary()},
                        {"scene_supported_prompt", kSceneSupportedPrompt}};
    routes();
  }

  template <typename Fn>
  static httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ServiceError& e) {
        send_error(res, e.status(), e.what(), e.detail());
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  void routes() {
    // Small JSON replies; without this each one waits out a delayed ACK.
    http.set_tcp_nodelay(true);
    http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      const auto& token = store.options().auth_token;
      if (!token.empty() && req.get_header_value("X-Auth-Token") != token) {
        send_error(res, 401, "missing or wrong X-Auth-Token");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    http.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"schema_version", kApiSchemaVersion}, {"status", "ok"}});
    }));

    http.Get("/template", guarded([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Cache-Control", "public, max-age=31536000, immutable");
      send(res, 200, template_payload);
    }));

    http.Get("/brush-cache", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string raw = required_param(req, "radius");
      double radius = 0.0;
      try {
        std::size_t used = 0;
        radius = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
      } catch (const std::exception&) {
        throw ServiceError(400, "radius '" + raw + "' is not a number");
      }
      const BrushCache& cache = store.brush_cache();
      const int ri = cache.radius_index(radius);
      if (ri < 0) {
        throw ServiceError(404, "radius " + raw + " is not published", {{"radii", cache.radii()}});
      }
      res.set_header("Cache-Control", "public, max-age=31536000, immutable");
      send(res, 200,
           {{"schema_version", kApiSchemaVersion},
            {"radius", cache.radii()[static_cast<std::size_t>(ri)]},
            {"num_vertices", cache.num_vertices()},
            {"neighborhoods", cache.table(ri)}});
    }));

    http.Post("/tasks", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const std::string id = store.add_task(body.at("image_id").get<std::string>(),
                                            body.value("labels", std::vector<std::string>{}),
                                            body.value("image_path", std::string()));
      send(res, 201, to_json(store.task(id)));
    }));

    http.Get("/task/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto task = store.next_task(required_param(req, "annotator"));
      if (!task) {
        send(res, 200, {{"schema_version", kApiSchemaVersion}, {"task", "none"}});
        return;
      }
      send(res, 200, {{"schema_version", kApiSchemaVersion}, {"task", to_json(*task)}});
    }));

    http.Get(R"(/task/([A-Za-z0-9_.\-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send(res, 200, to_json(store.task(req.matches[1])));
    }));

    http.Post(R"(/task/([A-Za-z0-9_.\-]+)/annotation)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                const auto submission = submission_from_json(parse_body(req), req.matches[1]);
                const AnnotationTask task = store.submit(submission);
                json body = {{"schema_version", kApiSchemaVersion},
                             {"accepted", true},
                             {"task", to_json(task)},
                             {"feedback_requested", task.state == TaskState::Submitted}};
                send(res, 200, body);
              }));

    http.Post("/qa/review", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const AnnotationTask task =
          store.review(body.at("task_id").get<std::string>(), body.at("verdict").get<std::string>(),
                       body.value("notes", std::string()), body.at("reviewer").get<std::string>());
      send(res, 200, {{"schema_version", kApiSchemaVersion}, {"task", to_json(task)}});
    }));

    http.Get("/qa/agreement", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send(res, 200, store.agreement(split_list(required_param(req, "image_set"))));
    }));

    http.Post("/qualification/submit", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto responses = body.value("responses", std::map<std::string, VertexSet>{});
      send(res, 200, store.submit_qualification(body.at("annotator").get<std::string>(), responses));
    }));

    http.Get("/export", guarded([this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, dataset_to_json(store.export_dataset()));
    }));
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store) : impl_(std::make_unique<Impl>(store)) {}
AnnotationServer::~AnnotationServer() { stop(); }

bool AnnotationServer::listen(const std::string& host, int port) { return impl_->http.listen(host, port); }
int AnnotationServer::bind_to_any_port(const std::string& host) { return impl_->http.bind_to_any_port(host); }
bool AnnotationServer::listen_after_bind() { return impl_->http.listen_after_bind(); }
void AnnotationServer::wait_until_ready() const { impl_->http.wait_until_ready(); }
void AnnotationServer::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace deco::annotation
