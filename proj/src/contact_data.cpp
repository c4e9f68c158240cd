#include "deco/contact_data.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace deco {
namespace fs = std::filesystem;
using nlohmann::json;

const ContactRecord& ContactDataset::record(const std::string& image_id) const {
  for (const auto& r : records) {
    if (r.image_id == image_id) return r;
  }
  throw DatasetError("unknown image id '" + image_id + "'");
}

std::vector<const ContactRecord*> ContactDataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw DatasetError("unknown split '" + name + "'");
  std::map<std::string, const ContactRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.image_id, &r);
  std::vector<const ContactRecord*> out;
  out.reserve(it->second.size());
  for (const auto& id : it->second) {
    auto found = by_id.find(id);
    if (found == by_id.end()) throw DatasetError("split '" + name + "' references unknown id " + id);
    out.push_back(found->second);
  }
  return out;
}

std::vector<std::string> default_vocabulary() { return {"ground", "chair", "wall", "cup"}; }

std::vector<std::string> load_vocabulary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open vocabulary file " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  return labels;
}

namespace {

void sort_unique(VertexSet& ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
}

void check_ids(const VertexSet& ids, int num_vertices, const std::string& what,
               const std::string& image_id) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= num_vertices) {
      throw DatasetError("record " + image_id + ": " + what + " vertex id " +
                         std::to_string(ids[i]) + " outside [0, " +
                         std::to_string(num_vertices) + ")");
    }
    if (i > 0 && ids[i] <= ids[i - 1]) {
      throw DatasetError("record " + image_id + ": " + what + " vertex ids not sorted/unique");
    }
  }
}

bool safe_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  }) && id != "." && id != "..";
}

}  // namespace

void canonicalize(ContactRecord& record) {
  for (auto& oc : record.object_contacts) sort_unique(oc.vertices);
  sort_unique(record.scene_supported);
}

void validate_record(const ContactRecord& record, int num_vertices,
                     const std::vector<std::string>& vocabulary) {
  if (!safe_id(record.image_id)) {
    throw DatasetError("invalid image id '" + record.image_id + "'");
  }
  for (const auto& oc : record.object_contacts) {
    if (std::find(vocabulary.begin(), vocabulary.end(), oc.label) == vocabulary.end()) {
      throw DatasetError("record " + record.image_id + ": label '" + oc.label +
                         "' not in vocabulary");
    }
    check_ids(oc.vertices, num_vertices, oc.label, record.image_id);
  }
  check_ids(record.scene_supported, num_vertices, "scene-supported", record.image_id);
}

void validate_dataset(const ContactDataset& dataset) {
  std::set<std::string> ids;
  for (const auto& r : dataset.records) {
    validate_record(r, dataset.num_vertices, dataset.vocabulary);
    if (!ids.insert(r.image_id).second) throw DatasetError("duplicate image id " + r.image_id);
  }
  std::set<std::string> used;
  for (const auto& [name, members] : dataset.splits) {
    for (const auto& id : members) {
      if (!ids.count(id)) throw DatasetError("split '" + name + "' references unknown id " + id);
      if (!used.insert(id).second) throw DatasetError("id " + id + " appears in several splits");
    }
  }
}

VertexSet union_contact(const ContactRecord& record) {
  VertexSet all = record.scene_supported;
  for (const auto& oc : record.object_contacts) {
    all.insert(all.end(), oc.vertices.begin(), oc.vertices.end());
  }
  sort_unique(all);
  return all;
}

VertexContactVector binarize(const ContactRecord& record, int num_vertices, BinarizeMode mode,
                             const std::string& label) {
  VertexContactVector out = VertexContactVector::Zero(num_vertices);
  auto mark = [&](const VertexSet& ids) {
    for (int v : ids) {
      if (v < 0 || v >= num_vertices) {
        throw DatasetError("record " + record.image_id + ": vertex id out of range");
      }
      out(v) = 1.0;
    }
  };
  switch (mode) {
    case BinarizeMode::Union:
      mark(record.scene_supported);
      for (const auto& oc : record.object_contacts) mark(oc.vertices);
      break;
    case BinarizeMode::SceneOnly:
      mark(record.scene_supported);
      break;
    case BinarizeMode::PerObject: {
      bool found = false;
      for (const auto& oc : record.object_contacts) {
        if (oc.label == label) {
          mark(oc.vertices);
          found = true;
        }
      }
      if (!found) {
        throw DatasetError("record " + record.image_id + " has no object label '" + label + "'");
      }
      break;
    }
  }
  return out;
}

VertexContactVector aggregate_contact_probability(const ContactDataset& dataset,
                                                  const std::string& split) {
  const auto members = dataset.split(split);
  if (members.empty()) throw DatasetError("split '" + split + "' is empty");
  VertexContactVector sum = VertexContactVector::Zero(dataset.num_vertices);
  for (const auto* r : members) sum += binarize(*r, dataset.num_vertices);
  return sum / static_cast<double>(members.size());
}

std::vector<int> part_contact_histogram(const ContactDataset& dataset, const TemplateMesh& mesh,
                                        int min_vertices) {
  if (min_vertices < 1) throw std::invalid_argument("min_vertices must be >= 1");
  std::vector<int> histogram(mesh.num_parts, 0);
  std::vector<int> per_part(mesh.num_parts);
  for (const auto& r : dataset.records) {
    std::fill(per_part.begin(), per_part.end(), 0);
    for (int v : union_contact(r)) ++per_part.at(mesh.part_labels.at(v));
    for (int p = 0; p < mesh.num_parts; ++p) {
      if (per_part[p] >= min_vertices) ++histogram[p];
    }
  }
  return histogram;
}

std::map<std::string, int> object_label_histogram(const ContactDataset& dataset) {
  std::map<std::string, int> histogram;
  for (const auto& r : dataset.records) {
    std::set<std::string> labels;
    for (const auto& oc : r.object_contacts) labels.insert(oc.label);
    for (const auto& l : labels) ++histogram[l];
  }
  return histogram;
}

// ---- serialization ----------------------------------------------------------

json to_json(const Camera& camera) {
  return {{"scale", camera.scale}, {"tx", camera.tx}, {"ty", camera.ty},
          {"height", camera.height}, {"width", camera.width}};
}

Camera camera_from_json(const json& doc) {
  Camera c;
  c.scale = doc.at("scale").get<double>();
  c.tx = doc.at("tx").get<double>();
  c.ty = doc.at("ty").get<double>();
  c.height = doc.at("height").get<int>();
  c.width = doc.at("width").get<int>();
  return c;
}

json to_json(const ContactRecord& record) {
  json doc;
  doc["image_id"] = record.image_id;
  doc["image_path"] = record.image_path;
  json objects = json::array();
  for (const auto& oc : record.object_contacts) {
    objects.push_back({{"label", oc.label}, {"vertices", oc.vertices}});
  }
  doc["object_contacts"] = std::move(objects);
  doc["scene_supported"] = record.scene_supported;
  doc["has_3d_labels"] = record.has_3d_labels;
  if (record.annotator_id) doc["annotator_id"] = *record.annotator_id;
  if (record.feedback) doc["feedback"] = *record.feedback;
  if (record.aux) {
    const auto& a = *record.aux;
    doc["aux"] = {{"camera", to_json(a.camera)},
                  {"body", a.body_path},
                  {"scene", a.scene_path},
                  {"scene_mask", a.scene_mask_path},
                  {"part_mask", a.part_mask_path},
                  {"contact_mask", a.contact_mask_path}};
  }
  return doc;
}

ContactRecord record_from_json(const json& doc) {
  ContactRecord r;
  r.image_id = doc.at("image_id").get<std::string>();
  r.image_path = doc.value("image_path", "");
  for (const auto& oc : doc.value("object_contacts", json::array())) {
    r.object_contacts.push_back(
        {oc.at("label").get<std::string>(), oc.at("vertices").get<VertexSet>()});
  }
  r.scene_supported = doc.value("scene_supported", VertexSet{});
  r.has_3d_labels = doc.value("has_3d_labels", true);
  if (doc.contains("annotator_id")) r.annotator_id = doc["annotator_id"].get<std::string>();
  if (doc.contains("feedback")) r.feedback = doc["feedback"].get<std::string>();
  if (doc.contains("aux")) {
    const auto& a = doc["aux"];
    SampleAux aux;
    aux.camera = camera_from_json(a.at("camera"));
    aux.body_path = a.value("body", "");
    aux.scene_path = a.value("scene", "");
    aux.scene_mask_path = a.value("scene_mask", "");
    aux.part_mask_path = a.value("part_mask", "");
    aux.contact_mask_path = a.value("contact_mask", "");
    r.aux = std::move(aux);
  }
  return r;
}

namespace {

json manifest(const ContactDataset& dataset) {
  json doc;
  doc["schema_version"] = kDatasetSchemaVersion;
  doc["template"] = {{"id", dataset.template_id},
                     {"num_vertices", dataset.num_vertices},
                     {"mesh", dataset.template_path}};
  doc["vocabulary"] = dataset.vocabulary;
  json ids = json::array();
  for (const auto& r : dataset.records) ids.push_back(r.image_id);
  doc["records"] = std::move(ids);
  doc["splits"] = json::object();
  for (const auto& [name, members] : dataset.splits) doc["splits"][name] = members;
  return doc;
}

ContactDataset from_manifest(const json& doc) {
  const int version = doc.value("schema_version", -1);
  if (version != kDatasetSchemaVersion) {
    throw DatasetError("schema-version mismatch: found " + std::to_string(version) +
                       ", expected " + std::to_string(kDatasetSchemaVersion));
  }
  ContactDataset d;
  const auto& t = doc.at("template");
  d.template_id = t.value("id", "");
  d.num_vertices = t.at("num_vertices").get<int>();
  d.template_path = t.value("mesh", "");
  d.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
  const json splits = doc.value("splits", json::object());
  for (const auto& [name, members] : splits.items()) {
    d.splits[name] = members.get<std::vector<std::string>>();
  }
  return d;
}

}  // namespace

json dataset_to_json(const ContactDataset& dataset) {
  json doc = manifest(dataset);
  json records = json::array();
  for (const auto& r : dataset.records) records.push_back(to_json(r));
  doc["records"] = std::move(records);
  return doc;
}

ContactDataset dataset_from_json(const json& doc) {
  ContactDataset d = from_manifest(doc);
  for (const auto& r : doc.at("records")) d.records.push_back(record_from_json(r));
  validate_dataset(d);
  return d;
}

void save_dataset(const ContactDataset& dataset, const fs::path& root) {
  validate_dataset(dataset);
  fs::create_directories(root / "annotations");
  for (const auto& r : dataset.records) {
    std::ofstream out(root / "annotations" / (r.image_id + ".json"));
    if (!out) throw DatasetError("cannot write annotation for " + r.image_id);
    out << to_json(r).dump(1) << '\n';
  }
  std::ofstream out(root / "index.json");
  if (!out) throw DatasetError("cannot write " + (root / "index.json").string());
  out << manifest(dataset).dump(2) << '\n';
}

ContactDataset load_dataset(const fs::path& root) {
  std::ifstream in(root / "index.json");
  if (!in) throw DatasetError("cannot open " + (root / "index.json").string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest: " + std::string(e.what()));
  }
  ContactDataset d = from_manifest(doc);
  for (const auto& id : doc.at("records")) {
    const auto name = id.get<std::string>();
    if (!safe_id(name)) throw DatasetError("invalid image id '" + name + "'");
    std::ifstream rin(root / "annotations" / (name + ".json"));
    if (!rin) throw DatasetError("missing annotation file for " + name);
    try {
      d.records.push_back(record_from_json(json::parse(rin)));
    } catch (const json::exception& e) {
      throw DatasetError("malformed annotation for " + name + ": " + e.what());
    }
    if (d.records.back().image_id != name) {
      throw DatasetError("annotation file for " + name + " carries id " +
                         d.records.back().image_id);
    }
  }
  validate_dataset(d);
  return d;
}

}  // namespace deco
