#pragma once

#include "deco/contact_data.hpp"
#include "deco/losses.hpp"
#include "deco/model.hpp"
#include "deco/synth.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deco {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  std::string name = "adam";
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  OptimizerConfig optimizer;
  std::string dataset;       // dataset root
  std::string split = "train";
  std::string output_dir;    // checkpoints and log
  std::uint64_t seed = 0;    // shuffling
  int checkpoint_every = 1;  // epochs; 0 writes only the final checkpoint
  double splat_sigma = 1.5;

  /// 64x64 model, batch 8, lr 1e-3.
  static TrainConfig desk();
  /// 256x256 model, Adam lr 5e-5, batch 4, 12 epochs.
  static TrainConfig full_scale();
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);
TrainConfig load_train_config(const std::filesystem::path& path);

/// One record prepared for the losses. Members beyond `input` and `gt_contact`
/// are empty when the record has no 2D supervision.
struct TrainingSample {
  std::string id;
  nn::FeatureMap<double> input;
  Eigen::VectorXd gt_contact;
  bool has_3d_labels = true;
  Camera camera;
  Points2<double> pixels;          // projected body vertices
  Eigen::MatrixXd contact_mask;    // H x W, 0/1
  Eigen::VectorXi scene_labels;    // per pixel, row-major
  Eigen::VectorXi part_labels;

  bool has_2d_labels() const { return scene_labels.size() > 0; }
};

TrainingSample training_sample(const SynthSample& sample);
std::vector<TrainingSample> load_training_samples(const ContactDataset& dataset,
                                                  const std::filesystem::path& root,
                                                  const std::string& split);

/// Checks the samples against the model input size, vertex and channel counts.
void check_compatible(const ModelConfig& config, const std::vector<TrainingSample>& samples);

struct SampleLoss {
  LossComponents<double> components;
  double total = 0.0;
};

/// Loss of one sample; accumulates d(total)/d(params) * grad_scale into `grad` when given.
SampleLoss sample_loss(const Model& model, const TrainingSample& sample, const LossWeights& weights,
                       double splat_sigma, Model* grad = nullptr, double grad_scale = 1.0);

/// Mean rendered-contact-map BCE of the model's predictions against the 2D masks.
double rendered_map_bce(const Model& model, const std::vector<TrainingSample>& samples,
                        double splat_sigma);

class Adam {
 public:
  Adam() = default;
  Adam(const Model& shape, OptimizerConfig config);

  /// Clips `grad` in place, then updates `params`. Returns the pre-clip gradient norm.
  double step(Model& params, Model& grad);
  long steps() const { return step_; }

  nlohmann::json to_json() const;
  void load(const nlohmann::json& doc);

 private:
  OptimizerConfig config_;
  Model m_, v_;
  long step_ = 0;
};

double gradient_norm(const Model& grad);

struct LogRecord {
  std::string type;  // "step" or "epoch"
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
  std::optional<double> contact, pixel_anchor, scene_seg, part_seg;
  double grad_norm = 0.0;
};
nlohmann::json to_json(const LogRecord& record);

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<TrainingSample> samples);

  /// Runs until `config.optimizer.epochs` epochs are complete.
  void train(const std::function<void(const LogRecord&)>& on_log = {});
  /// One pass over the samples in an order fixed by (seed, epoch).
  LogRecord run_epoch(const std::function<void(const LogRecord&)>& on_log = {});

  const Model& model() const { return model_; }
  Model& model() { return model_; }
  int epoch() const { return epoch_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<TrainingSample>& samples() const { return samples_; }

  nlohmann::json checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores model, optimizer and epoch counter.
  void restore(const nlohmann::json& checkpoint);

 private:
  TrainConfig config_;
  std::vector<TrainingSample> samples_;
  Model model_;
  Adam adam_;
  int epoch_ = 0;
};

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Model parameters and config from a checkpoint file.
Model load_model(const std::filesystem::path& checkpoint);

std::vector<Eigen::VectorXd> predict(const Model& model, const std::vector<TrainingSample>& samples);

}  // namespace deco
