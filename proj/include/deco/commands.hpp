#pragma once

// Implementations behind the `deco` command-line verbs.

#include "deco/contact_data.hpp"
#include "deco/metrics.hpp"
#include "deco/synth.hpp"
#include "deco/train.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace deco {

struct GenerateOptions {
  SynthConfig synth;
  int count = 20;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  std::filesystem::path out;
};

/// Writes a synthetic dataset plus `synth_config.json`.
ContactDataset cmd_generate(const GenerateOptions& options);

/// Template mesh of a dataset directory.
TemplateMesh load_dataset_template(const ContactDataset& dataset, const std::filesystem::path& root);

/// Copies `base` and sets input size, vertex, part and scene-channel counts from the dataset.
ModelConfig derive_model_config(const ModelConfig& base, const ContactDataset& dataset,
                                const std::filesystem::path& root);

struct TrainOptions {
  TrainConfig config;
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
};

/// Trains, writing `checkpoint.json` and `train_log.jsonl` into config.output_dir.
/// Returns the final checkpoint path.
std::filesystem::path cmd_train(const TrainOptions& options, std::ostream& progress);

struct EvalOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path dataset;
  std::string split = "test";
  /// Distance threshold (meters) for the geometric baseline; replaces the model when set.
  std::optional<double> baseline_threshold;
  double threshold = kDefaultContactThreshold;
  std::optional<std::filesystem::path> out;
};

MetricsReport cmd_eval(const EvalOptions& options);

struct InferOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::filesystem::path out_dir;
  /// Dataset providing the template mesh; defaults to the checkpoint's training dataset.
  std::optional<std::filesystem::path> dataset;
  /// Posed body to color instead of the rest template.
  std::optional<std::filesystem::path> body;
  double threshold = kDefaultContactThreshold;
};

/// Writes `contact.json` (probabilities) and `contact.ply` (vertex colors).
Eigen::VectorXd cmd_infer(const InferOptions& options);

struct StatsOptions {
  std::filesystem::path dataset;
  std::string split;  // empty: every record
  std::filesystem::path out_dir;
  int min_vertices = 10;
};

/// Writes `object_histogram.json`, `part_histogram.json`, `aggregate_contact.json`
/// and `aggregate_contact.ply`. Returns the combined statistics.
nlohmann::json cmd_stats(const StatsOptions& options);

}  // namespace deco
