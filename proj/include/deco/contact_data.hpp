#pragma once

#include "deco/mesh.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deco {

inline constexpr int kDatasetSchemaVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-vertex contact, either binary (0/1) or probabilistic ([0,1]).
using VertexContactVector = Eigen::VectorXd;

struct ObjectContact {
  std::string label;
  VertexSet vertices;
  friend bool operator==(const ObjectContact&, const ObjectContact&) = default;
};

/// Weak-perspective camera anchoring the body to pixels. The body is already
/// expressed in camera coordinates (identity rotation, zero body translation).
struct Camera {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  int height = 64;
  int width = 64;
  friend bool operator==(const Camera&, const Camera&) = default;
};

/// Side data attached to synthetic records: everything the 2D losses need.
/// Paths are relative to the dataset root.
struct SampleAux {
  Camera camera;
  std::string body_path;         // posed body, PLY
  std::string scene_path;        // scene geometry, JSON
  std::string scene_mask_path;   // PNG label map
  std::string part_mask_path;    // PNG label map
  std::string contact_mask_path; // PNG, 0/255
  friend bool operator==(const SampleAux&, const SampleAux&) = default;
};

/// One annotated image: the dataset atom.
struct ContactRecord {
  std::string image_id;
  std::string image_path;
  std::vector<ObjectContact> object_contacts;
  VertexSet scene_supported;
  std::optional<std::string> annotator_id;
  std::optional<std::string> feedback;
  /// False for records that carry only 2D supervision; their 3D contact loss is skipped.
  bool has_3d_labels = true;
  std::optional<SampleAux> aux;

  friend bool operator==(const ContactRecord&, const ContactRecord&) = default;
};

struct ContactDataset {
  std::string template_id;
  int num_vertices = 0;
  std::vector<std::string> vocabulary;
  std::vector<ContactRecord> records;
  std::map<std::string, std::vector<std::string>> splits;
  /// Optional template mesh file (relative to the dataset root).
  std::string template_path;

  const ContactRecord& record(const std::string& image_id) const;
  std::vector<const ContactRecord*> split(const std::string& name) const;

  friend bool operator==(const ContactDataset&, const ContactDataset&) = default;
};

enum class BinarizeMode { Union, PerObject, SceneOnly };

std::vector<std::string> default_vocabulary();
std::vector<std::string> load_vocabulary(const std::filesystem::path& path);

/// Sorts and deduplicates every vertex list in place.
void canonicalize(ContactRecord& record);

/// Throws DatasetError on out-of-range ids, unsorted lists or unknown labels.
void validate_record(const ContactRecord& record, int num_vertices,
                     const std::vector<std::string>& vocabulary);
void validate_dataset(const ContactDataset& dataset);

VertexSet union_contact(const ContactRecord& record);

VertexContactVector binarize(const ContactRecord& record, int num_vertices,
                             BinarizeMode mode = BinarizeMode::Union,
                             const std::string& label = {});

VertexContactVector aggregate_contact_probability(const ContactDataset& dataset,
                                                  const std::string& split);

/// Per part: number of records whose union contact covers >= min_vertices of it.
std::vector<int> part_contact_histogram(const ContactDataset& dataset, const TemplateMesh& mesh,
                                        int min_vertices = 10);

/// Per label: number of records containing that label at least once.
std::map<std::string, int> object_label_histogram(const ContactDataset& dataset);

// ---- serialization ----------------------------------------------------------

nlohmann::json to_json(const ContactRecord& record);
ContactRecord record_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& doc);

/// Single-document form (manifest with inline records), used by the export endpoint.
nlohmann::json dataset_to_json(const ContactDataset& dataset);
ContactDataset dataset_from_json(const nlohmann::json& doc);

/// Directory form: `index.json` manifest plus `annotations/<image_id>.json`.
void save_dataset(const ContactDataset& dataset, const std::filesystem::path& root);
ContactDataset load_dataset(const std::filesystem::path& root);

}  // namespace deco
