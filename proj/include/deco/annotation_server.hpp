#pragma once

#include "deco/annotation.hpp"

#include <memory>
#include <string>

namespace deco::annotation {

/// HTTP front end over an AnnotationStore.
///
///   GET  /health
///   GET  /template
///   GET  /brush-cache?radius=r
///   POST /tasks                      {image_id, labels, image_path?}
///   GET  /task/next?annotator=a
///   GET  /task/{id}
///   POST /task/{id}/annotation       {annotator, label, strokes, final_vertices, prompt_index?, feedback?}
///   POST /qa/review                  {task_id, verdict: ok|flag, notes, reviewer}
///   GET  /qa/agreement?image_set=a,b
///   POST /qualification/submit       {annotator, responses: {image_id: [vertices]}}
///   GET  /export
///
/// When the store has an auth token, every request must carry it in X-Auth-Token.
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationStore& store);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Blocks until stop().
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; serve with listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace deco::annotation
