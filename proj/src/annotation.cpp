#include "deco/annotation.hpp"

#include "deco/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace deco::annotation {
namespace {

using nlohmann::json;

VertexSet canonical(VertexSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

VertexSet difference(const VertexSet& a, const VertexSet& b) {
  VertexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool safe_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." &&
         std::all_of(id.begin(), id.end(), [](unsigned char c) {
           return std::isalnum(c) || c == '_' || c == '-' || c == '.';
         });
}

std::string mode_name(BrushMode m) { return m == BrushMode::Draw ? "draw" : "erase"; }

BrushMode parse_mode(const std::string& s) {
  if (s == "draw") return BrushMode::Draw;
  if (s == "erase") return BrushMode::Erase;
  throw ServiceError(400, "stroke mode must be 'draw' or 'erase', got '" + s + "'");
}

}  // namespace

std::vector<double> default_brush_radii() { return {0.0, 0.05, 0.1, 0.2}; }

std::string to_string(TaskState s) {
  switch (s) {
    case TaskState::Open: return "open";
    case TaskState::Submitted: return "submitted";
    case TaskState::Flagged: return "flagged";
    case TaskState::Reannotate: return "reannotate";
    case TaskState::Finalized: return "finalized";
  }
  return "unknown";
}

ContactRecord AnnotationTask::record() const {
  ContactRecord r;
  r.image_id = image_id;
  r.image_path = image_path;
  r.object_contacts = object_contacts;
  r.scene_supported = scene_supported;
  r.annotator_id = submitted_by;
  r.feedback = feedback;
  canonicalize(r);
  return r;
}

json to_json(const AnnotationTask& t) {
  json contacts = json::array();
  for (const auto& oc : t.object_contacts) contacts.push_back({{"label", oc.label}, {"vertices", oc.vertices}});
  json notes = json::array();
  for (const auto& n : t.review_notes) notes.push_back({{"reviewer", n.reviewer}, {"notes", n.notes}});
  return {{"schema_version", kApiSchemaVersion},
          {"task_id", t.task_id},
          {"image_id", t.image_id},
          {"image_path", t.image_path},
          {"label_sequence", t.label_sequence},
          {"state", to_string(t.state)},
          {"assigned_to", t.assigned_to ? json(*t.assigned_to) : json(nullptr)},
          {"prompt_index", t.prompt_index},
          {"current_prompt", t.prompt_index < static_cast<int>(t.label_sequence.size())
                                 ? json(t.current_prompt())
                                 : json(nullptr)},
          {"object_contacts", contacts},
          {"scene_supported", t.scene_supported},
          {"feedback", t.feedback ? json(*t.feedback) : json(nullptr)},
          {"review_notes", notes}};
}

json to_json(const StrokeSubmission& s) {
  json strokes = json::array();
  for (const auto& st : s.strokes) {
    strokes.push_back({{"center", st.center}, {"radius", st.radius}, {"mode", mode_name(st.mode)}});
  }
  json doc = {{"task_id", s.task_id},
              {"annotator", s.annotator},
              {"label", s.label},
              {"strokes", strokes},
              {"final_vertices", s.final_vertices}};
  if (s.prompt_index) doc["prompt_index"] = *s.prompt_index;
  if (s.feedback) doc["feedback"] = *s.feedback;
  return doc;
}

StrokeSubmission submission_from_json(const json& doc, const std::string& task_id) {
  try {
    StrokeSubmission s;
    s.task_id = task_id;
    s.annotator = doc.at("annotator").get<std::string>();
    s.label = doc.at("label").get<std::string>();
    for (const auto& st : doc.at("strokes")) {
      s.strokes.push_back({st.at("center").get<int>(), st.at("radius").get<double>(),
                           parse_mode(st.value("mode", std::string("draw")))});
    }
    s.final_vertices = doc.at("final_vertices").get<VertexSet>();
    if (doc.contains("prompt_index") && !doc.at("prompt_index").is_null()) {
      s.prompt_index = doc.at("prompt_index").get<int>();
    }
    if (doc.contains("feedback") && !doc.at("feedback").is_null()) {
      s.feedback = doc.at("feedback").get<std::string>();
    }
    return s;
  } catch (const json::exception& e) {
    throw ServiceError(400, std::string("malformed stroke submission: ") + e.what());
  }
}

// ---- store ------------------------------------------------------------------

AnnotationStore::AnnotationStore(TemplateMesh mesh, std::vector<std::string> vocabulary,
                                 ServiceOptions options)
    : mesh_(std::move(mesh)),
      cache_(precompute_brush_cache(build_edge_graph(mesh_), options.brush_radii)),
      vocabulary_(std::move(vocabulary)),
      options_(std::move(options)),
      qualified_(options_.prequalified.begin(), options_.prequalified.end()) {
  for (const auto& [image, gt] : options_.qualification_set) {
    for (int v : gt) {
      if (v < 0 || v >= mesh_.vertices.rows()) {
        throw std::invalid_argument("qualification ground truth for " + image + " is out of range");
      }
    }
  }
  if (!options_.log_path.empty()) {
    if (std::filesystem::exists(options_.log_path)) replay(options_.log_path);
    if (options_.log_path.has_parent_path()) std::filesystem::create_directories(options_.log_path.parent_path());
    log_.open(options_.log_path, std::ios::app);
    if (!log_) throw std::runtime_error("cannot open annotation log " + options_.log_path.string());
  }
}

void AnnotationStore::append(const json& event) {
  if (replaying_ || !log_.is_open()) return;
  log_ << event.dump() << '\n';
  log_.flush();
}

void AnnotationStore::replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  int lineno = 0;
  replaying_ = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::parse_error&) {
      if (in.peek() == EOF) break;  // torn final write
      replaying_ = false;
      throw std::runtime_error("corrupt annotation log at line " + std::to_string(lineno));
    }
    const std::string type = e.at("event");
    if (type == "add_task") {
      add_task_locked(e.at("image_id"), e.at("labels"), e.value("image_path", ""));
    } else if (type == "qualify") {
      qualified_.insert(e.at("annotator").get<std::string>());
    } else if (type == "assign") {
      const auto t = next_task_locked(e.at("annotator"));
      if (!t || t->task_id != e.at("task_id")) {
        replaying_ = false;
        throw std::runtime_error("annotation log replay diverged at line " + std::to_string(lineno));
      }
    } else if (type == "submit") {
      submit_locked(submission_from_json(e.at("submission"), e.at("submission").at("task_id")));
    } else if (type == "review") {
      review_locked(e.at("task_id"), e.at("verdict"), e.at("notes"), e.at("reviewer"));
    } else if (type == "qualification") {
      std::map<std::string, VertexSet> responses = e.at("responses");
      qualification_locked(e.at("annotator"), responses);
    }
  }
  replaying_ = false;
}

AnnotationTask& AnnotationStore::find(const std::string& task_id) {
  const auto it = index_.find(task_id);
  if (it == index_.end()) throw ServiceError(404, "unknown task '" + task_id + "'");
  return tasks_[it->second];
}

std::string AnnotationStore::add_task(const std::string& image_id, const std::vector<std::string>& labels,
                                      const std::string& image_path) {
  std::lock_guard lock(mutex_);
  return add_task_locked(image_id, labels, image_path);
}

std::string AnnotationStore::add_task_locked(const std::string& image_id,
                                             const std::vector<std::string>& labels,
                                             const std::string& image_path) {
  if (!safe_id(image_id)) throw ServiceError(422, "invalid image id '" + image_id + "'");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (std::find(vocabulary_.begin(), vocabulary_.end(), l) == vocabulary_.end()) {
      throw ServiceError(422, "label '" + l + "' is not in the vocabulary");
    }
    if (!seen.insert(l).second) throw ServiceError(422, "label '" + l + "' repeated");
  }
  AnnotationTask t;
  char buf[32];
  std::snprintf(buf, sizeof buf, "task-%06zu", tasks_.size() + 1);
  t.task_id = buf;
  t.image_id = image_id;
  t.image_path = image_path.empty() ? "images/" + image_id + ".png" : image_path;
  t.label_sequence = labels;
  t.label_sequence.push_back(kSceneSupportedPrompt);
  index_[t.task_id] = tasks_.size();
  tasks_.push_back(t);
  append({{"event", "add_task"}, {"image_id", image_id}, {"labels", labels}, {"image_path", t.image_path}});
  return t.task_id;
}

void AnnotationStore::qualify(const std::string& annotator) {
  std::lock_guard lock(mutex_);
  if (qualified_.insert(annotator).second) append({{"event", "qualify"}, {"annotator", annotator}});
}

bool AnnotationStore::is_qualified(const std::string& annotator) const {
  std::lock_guard lock(mutex_);
  return qualified_.count(annotator) > 0;
}

bool AnnotationStore::is_reviewer(const std::string& reviewer) const {
  return options_.reviewers.count(reviewer) > 0;
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& annotator) {
  std::lock_guard lock(mutex_);
  return next_task_locked(annotator);
}

std::optional<AnnotationTask> AnnotationStore::next_task_locked(const std::string& annotator) {
  if (annotator.empty()) throw ServiceError(400, "annotator id required");
  if (!qualified_.count(annotator)) throw ServiceError(403, "annotator '" + annotator + "' is not qualified");
  for (const auto& t : tasks_) {
    if (t.state == TaskState::Open && t.assigned_to == annotator) return t;
  }
  // An annotator rates each image at most once so agreement compares distinct people.
  std::set<std::string> done;
  for (const auto& t : tasks_) {
    if (t.submitted_by == annotator || t.assigned_to == annotator) done.insert(t.image_id);
  }
  for (auto& t : tasks_) {
    const bool available = (t.state == TaskState::Open && !t.assigned_to) || t.state == TaskState::Reannotate;
    if (!available) continue;
    if (done.count(t.image_id) && t.submitted_by != annotator) continue;
    t.state = TaskState::Open;
    t.assigned_to = annotator;
    append({{"event", "assign"}, {"annotator", annotator}, {"task_id", t.task_id}});
    return t;
  }
  return std::nullopt;
}

AnnotationTask AnnotationStore::submit(const StrokeSubmission& s) {
  std::lock_guard lock(mutex_);
  return submit_locked(s);
}

AnnotationTask AnnotationStore::submit_locked(const StrokeSubmission& s) {
  AnnotationTask& t = find(s.task_id);
  if (t.state != TaskState::Open) {
    throw ServiceError(409, "task " + t.task_id + " is " + to_string(t.state) + ", not open",
                       {{"state", to_string(t.state)}});
  }
  if (t.assigned_to != s.annotator) {
    throw ServiceError(409, "task " + t.task_id + " is not assigned to '" + s.annotator + "'");
  }
  if (s.prompt_index && *s.prompt_index != t.prompt_index) {
    throw ServiceError(409, "stale prompt index", {{"prompt_index", t.prompt_index}});
  }
  if (s.label != t.current_prompt()) {
    throw ServiceError(409, "expected prompt '" + t.current_prompt() + "', got '" + s.label + "'",
                       {{"prompt_index", t.prompt_index}, {"current_prompt", t.current_prompt()}});
  }
  VertexSet replayed;
  try {
    replayed = replay_strokes(cache_, s.strokes);
  } catch (const std::invalid_argument& e) {
    throw ServiceError(422, e.what());
  }
  const VertexSet client = canonical(s.final_vertices);
  if (client != replayed) {
    throw ServiceError(422, "stroke replay does not match final_vertices",
                       {{"missing", difference(replayed, client)}, {"extra", difference(client, replayed)}});
  }
  if (s.label == kSceneSupportedPrompt) {
    t.scene_supported = replayed;
  } else if (!replayed.empty()) {
    t.object_contacts.push_back({s.label, replayed});
  }
  ++t.prompt_index;
  if (t.prompt_index == static_cast<int>(t.label_sequence.size())) {
    t.state = TaskState::Submitted;
    t.submitted_by = s.annotator;
    t.feedback = s.feedback;
    t.verdict.reset();
  }
  append({{"event", "submit"}, {"submission", to_json(s)}});
  return t;
}

AnnotationTask AnnotationStore::review(const std::string& task_id, const std::string& verdict,
                                       const std::string& notes, const std::string& reviewer) {
  std::lock_guard lock(mutex_);
  return review_locked(task_id, verdict, notes, reviewer);
}

AnnotationTask AnnotationStore::review_locked(const std::string& task_id, const std::string& verdict,
                                              const std::string& notes, const std::string& reviewer) {
  if (!is_reviewer(reviewer)) throw ServiceError(403, "'" + reviewer + "' is not a reviewer");
  if (verdict != "ok" && verdict != "flag") throw ServiceError(400, "verdict must be 'ok' or 'flag'");
  AnnotationTask& t = find(task_id);
  switch (t.state) {
    case TaskState::Open:
    case TaskState::Flagged:
      throw ServiceError(409, "task " + task_id + " has no submission to review",
                         {{"state", to_string(t.state)}});
    case TaskState::Finalized:
      if (verdict == "ok") return t;
      throw ServiceError(409, "task " + task_id + " is already finalized", {{"state", "finalized"}});
    case TaskState::Reannotate:
      if (verdict == "flag") return t;
      throw ServiceError(409, "task " + task_id + " is already flagged for re-annotation",
                         {{"state", "reannotate"}});
    case TaskState::Submitted:
      break;
  }
  t.verdict = verdict;
  if (verdict == "ok") {
    t.state = TaskState::Finalized;
  } else {
    t.state = TaskState::Flagged;
    t.review_notes.push_back({reviewer, notes});
    t.object_contacts.clear();
    t.scene_supported.clear();
    t.prompt_index = 0;
    t.assigned_to.reset();
    t.state = TaskState::Reannotate;
  }
  append({{"event", "review"}, {"task_id", task_id}, {"verdict", verdict}, {"notes", notes}, {"reviewer", reviewer}});
  return t;
}

nlohmann::json AnnotationStore::agreement(const std::vector<std::string>& image_ids) const {
  std::lock_guard lock(mutex_);
  if (image_ids.empty()) throw ServiceError(400, "image_set is empty");
  json images = json::object();
  for (const auto& image : image_ids) {
    std::vector<std::string> raters;
    std::vector<VertexSet> sets;
    for (const auto& t : tasks_) {
      if (t.image_id != image) continue;
      if (t.state != TaskState::Submitted && t.state != TaskState::Finalized) continue;
      raters.push_back(*t.submitted_by);
      sets.push_back(union_contact(t.record()));
    }
    if (sets.size() < 2) {
      throw ServiceError(422, "image '" + image + "' has " + std::to_string(sets.size()) +
                                  " submission(s); agreement needs at least 2",
                         {{"image_id", image}, {"submissions", sets.size()}});
    }
    const auto ratings = RatingMatrix::from_vertex_sets(sets, static_cast<int>(mesh_.vertices.rows()));
    json matrix = json::array();
    for (const auto& a : sets) {
      json row = json::array();
      for (const auto& b : sets) row.push_back(iou(a, b));
      matrix.push_back(row);
    }
    images[image] = {{"kappa", fleiss_kappa(ratings)}, {"annotators", raters}, {"iou", matrix}};
  }
  return {{"schema_version", kApiSchemaVersion}, {"images", images}};
}

nlohmann::json AnnotationStore::submit_qualification(const std::string& annotator,
                                                     const std::map<std::string, VertexSet>& responses) {
  std::lock_guard lock(mutex_);
  return qualification_locked(annotator, responses);
}

nlohmann::json AnnotationStore::qualification_locked(const std::string& annotator,
                                                     const std::map<std::string, VertexSet>& responses) {
  if (annotator.empty()) throw ServiceError(400, "annotator id required");
  if (options_.qualification_set.empty()) throw ServiceError(409, "no qualification set configured");
  for (const auto& [image, _] : responses) {
    if (!options_.qualification_set.count(image)) {
      throw ServiceError(422, "'" + image + "' is not a qualification image");
    }
  }
  json ious = json::object();
  std::vector<double> values;
  for (const auto& [image, gt] : options_.qualification_set) {
    const auto it = responses.find(image);
    const double v = it == responses.end() ? 0.0 : iou(it->second, gt);
    ious[image] = v;
    values.push_back(v);
  }
  const bool passed = qualification_gate(values, options_.qualification_threshold);
  if (passed) qualified_.insert(annotator);
  append({{"event", "qualification"}, {"annotator", annotator}, {"responses", responses}});
  return {{"schema_version", kApiSchemaVersion},
          {"annotator", annotator},
          {"ious", ious},
          {"mean_iou", std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size())},
          {"threshold", options_.qualification_threshold},
          {"passed", passed}};
}

ContactDataset AnnotationStore::export_dataset() const {
  std::lock_guard lock(mutex_);
  ContactDataset d;
  d.template_id = mesh_.id;
  d.num_vertices = static_cast<int>(mesh_.vertices.rows());
  d.vocabulary = vocabulary_;
  std::map<std::string, int> per_image;
  for (const auto& t : tasks_) {
    if (t.state == TaskState::Finalized) ++per_image[t.image_id];
  }
  auto& ids = d.splits["annotated"];
  for (const auto& t : tasks_) {
    if (t.state != TaskState::Finalized) continue;
    ContactRecord r = t.record();
    if (per_image[t.image_id] > 1) r.image_id += "." + t.task_id;
    ids.push_back(r.image_id);
    d.records.push_back(std::move(r));
  }
  validate_dataset(d);
  return d;
}

AnnotationTask AnnotationStore::task(const std::string& task_id) const {
  std::lock_guard lock(mutex_);
  return const_cast<AnnotationStore*>(this)->find(task_id);
}

std::vector<AnnotationTask> AnnotationStore::tasks() const {
  std::lock_guard lock(mutex_);
  return tasks_;
}

}  // namespace deco::annotation
