#pragma once

#include "deco/contact_data.hpp"
#include "deco/geodesic.hpp"
#include "deco/mesh.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace deco::annotation {

inline constexpr int kApiSchemaVersion = 1;
/// Final prompt of every task.
inline constexpr const char* kSceneSupportedPrompt = "scene_supported";

std::vector<double> default_brush_radii();

/// Error carrying an HTTP-style status and a JSON detail payload.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message, nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(message), status_(status), detail_(std::move(detail)) {}
  int status() const { return status_; }
  const nlohmann::json& detail() const { return detail_; }

 private:
  int status_;
  nlohmann::json detail_;
};

enum class TaskState { Open, Submitted, Flagged, Reannotate, Finalized };
std::string to_string(TaskState state);

struct ReviewNote {
  std::string reviewer;
  std::string notes;
};

struct AnnotationTask {
  std::string task_id;
  std::string image_id;
  std::string image_path;
  std::vector<std::string> label_sequence;  // object labels, then the scene-supported prompt
  TaskState state = TaskState::Open;
  std::optional<std::string> assigned_to;
  int prompt_index = 0;
  std::vector<ObjectContact> object_contacts;
  VertexSet scene_supported;
  std::optional<std::string> feedback;
  std::optional<std::string> verdict;  // "ok" or "flag" for the current submission
  std::vector<ReviewNote> review_notes;
  std::optional<std::string> submitted_by;

  const std::string& current_prompt() const { return label_sequence.at(static_cast<std::size_t>(prompt_index)); }
  ContactRecord record() const;
};

nlohmann::json to_json(const AnnotationTask& task);

struct StrokeSubmission {
  std::string task_id;
  std::string annotator;
  std::string label;
  std::vector<Stroke> strokes;
  VertexSet final_vertices;
  std::optional<int> prompt_index;  // client's view of the prompt; stale values conflict
  std::optional<std::string> feedback;
};

nlohmann::json to_json(const StrokeSubmission& submission);
StrokeSubmission submission_from_json(const nlohmann::json& doc, const std::string& task_id);

struct ServiceOptions {
  std::vector<double> brush_radii = default_brush_radii();
  std::set<std::string> reviewers;
  std::set<std::string> prequalified;
  /// Ground truth for the qualification images.
  std::map<std::string, VertexSet> qualification_set;
  double qualification_threshold = 0.5;
  std::string auth_token;  // empty disables the shared-token check
  std::filesystem::path log_path;  // empty keeps state in memory only
};

/// Task queue, validation and review state. All public methods are thread-safe;
/// mutations are serialized and appended to the log before they return.
class AnnotationStore {
 public:
  AnnotationStore(TemplateMesh mesh, std::vector<std::string> vocabulary, ServiceOptions options = {});

  const TemplateMesh& mesh() const { return mesh_; }
  const BrushCache& brush_cache() const { return cache_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const ServiceOptions& options() const { return options_; }

  /// Adds one task; several tasks may share an image (for agreement studies).
  std::string add_task(const std::string& image_id, const std::vector<std::string>& object_labels,
                       const std::string& image_path = {});
  void qualify(const std::string& annotator);
  bool is_qualified(const std::string& annotator) const;
  bool is_reviewer(const std::string& reviewer) const;

  /// Assigns an open (or reopened) task; a task already assigned to this annotator is returned first.
  std::optional<AnnotationTask> next_task(const std::string& annotator);
  AnnotationTask submit(const StrokeSubmission& submission);
  AnnotationTask review(const std::string& task_id, const std::string& verdict, const std::string& notes,
                        const std::string& reviewer);

  /// Per image: Fleiss' kappa and pairwise IoU across submitted annotations.
  nlohmann::json agreement(const std::vector<std::string>& image_ids) const;
  /// IoU per qualification image, mean and pass flag. Passing qualifies the annotator.
  nlohmann::json submit_qualification(const std::string& annotator,
                                      const std::map<std::string, VertexSet>& responses);

  /// Finalized tasks only.
  ContactDataset export_dataset() const;

  AnnotationTask task(const std::string& task_id) const;
  std::vector<AnnotationTask> tasks() const;

 private:
  std::string add_task_locked(const std::string& image_id, const std::vector<std::string>& labels,
                              const std::string& image_path);
  std::optional<AnnotationTask> next_task_locked(const std::string& annotator);
  AnnotationTask submit_locked(const StrokeSubmission& s);
  AnnotationTask review_locked(const std::string& task_id, const std::string& verdict,
                               const std::string& notes, const std::string& reviewer);
  nlohmann::json qualification_locked(const std::string& annotator,
                                      const std::map<std::string, VertexSet>& responses);
  AnnotationTask& find(const std::string& task_id);
  void append(const nlohmann::json& event);
  void replay(const std::filesystem::path& path);

  TemplateMesh mesh_;
  BrushCache cache_;
  std::vector<std::string> vocabulary_;
  ServiceOptions options_;

  mutable std::mutex mutex_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> index_;
  std::set<std::string> qualified_;
  std::ofstream log_;
  bool replaying_ = false;
};

}  // namespace deco::annotation
