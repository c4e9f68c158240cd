#include "deco/train.hpp"

#include "deco/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace deco {
namespace {

Eigen::VectorXi flatten_row_major(const LabelMap& labels) {
  const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = labels;
  return Eigen::Map<const Eigen::VectorXi>(rm.data(), rm.size());
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> parameter_list(Model& model) {
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> out;
  model.visit([&](const std::string& name, Eigen::MatrixXd& m) { out.emplace_back(name, &m); });
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

TrainConfig TrainConfig::desk() { return {}; }

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.model = ModelConfig::full_scale();
  c.optimizer.learning_rate = 5e-5;
  c.optimizer.batch_size = 4;
  c.optimizer.epochs = 12;
  return c;
}

void TrainConfig::validate() const {
  model.validate();
  weights.validate();
  if (optimizer.name != "adam") throw std::invalid_argument("unsupported optimizer '" + optimizer.name + "'");
  if (!(optimizer.learning_rate > 0) || !std::isfinite(optimizer.learning_rate)) {
    throw std::invalid_argument("learning rate must be > 0");
  }
  if (optimizer.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (optimizer.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (!(splat_sigma > 0)) throw std::invalid_argument("splat_sigma must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"weights",
           {{"contact", c.weights.contact},
            {"pixel_anchor", c.weights.pixel_anchor},
            {"scene_seg", c.weights.scene_seg},
            {"part_seg", c.weights.part_seg}}},
          {"optimizer",
           {{"name", c.optimizer.name},
            {"learning_rate", c.optimizer.learning_rate},
            {"batch_size", c.optimizer.batch_size},
            {"epochs", c.optimizer.epochs},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon},
            {"grad_clip", c.optimizer.grad_clip}}},
          {"dataset", c.dataset},
          {"split", c.split},
          {"output_dir", c.output_dir},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"splat_sigma", c.splat_sigma}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig c = doc.value("profile", std::string("desk")) == "full" ? TrainConfig::full_scale()
                                                                        : TrainConfig::desk();
  if (doc.contains("model")) c.model = model_config_from_json(doc.at("model"));
  if (doc.contains("weights")) {
    const auto& w = doc.at("weights");
    c.weights.contact = w.value("contact", c.weights.contact);
    c.weights.pixel_anchor = w.value("pixel_anchor", c.weights.pixel_anchor);
    c.weights.scene_seg = w.value("scene_seg", c.weights.scene_seg);
    c.weights.part_seg = w.value("part_seg", c.weights.part_seg);
  }
  if (doc.contains("optimizer")) {
    const auto& o = doc.at("optimizer");
    c.optimizer.name = o.value("name", c.optimizer.name);
    c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
    c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
    c.optimizer.epochs = o.value("epochs", c.optimizer.epochs);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    c.optimizer.grad_clip = o.value("grad_clip", c.optimizer.grad_clip);
  }
  c.dataset = doc.value("dataset", c.dataset);
  c.split = doc.value("split", c.split);
  c.output_dir = doc.value("output_dir", c.output_dir);
  c.seed = doc.value("seed", c.seed);
  c.checkpoint_every = doc.value("checkpoint_every", c.checkpoint_every);
  c.splat_sigma = doc.value("splat_sigma", c.splat_sigma);
  c.validate();
  return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return train_config_from_json(read_json_file(path));
}

// ---- samples ----------------------------------------------------------------

TrainingSample training_sample(const SynthSample& s) {
  TrainingSample t;
  t.id = s.record.image_id;
  t.input = image_to_input<double>(quantize_8bit(s.image));
  t.gt_contact = s.gt_contact;
  t.has_3d_labels = s.record.has_3d_labels;
  t.camera = s.camera;
  t.pixels = project_weak_perspective(s.body.vertices, s.camera);
  t.contact_mask = s.gt_contact_mask_2d.cast<double>();
  t.scene_labels = flatten_row_major(s.gt_scene_mask);
  t.part_labels = flatten_row_major(s.gt_part_mask);
  return t;
}

std::vector<TrainingSample> load_training_samples(const ContactDataset& dataset,
                                                  const std::filesystem::path& root,
                                                  const std::string& split) {
  std::vector<TrainingSample> out;
  for (const ContactRecord* r : dataset.split(split)) {
    TrainingSample t;
    t.id = r->image_id;
    t.input = image_to_input<double>(read_png_rgb(root / r->image_path));
    t.gt_contact = binarize(*r, dataset.num_vertices);
    t.has_3d_labels = r->has_3d_labels;
    if (r->aux) {
      const SampleAux& aux = *r->aux;
      t.camera = aux.camera;
      const RawMesh body = read_mesh(root / aux.body_path);
      if (body.vertices.rows() != dataset.num_vertices) {
        throw DatasetError("posed body of " + r->image_id + " has the wrong vertex count");
      }
      t.pixels = project_weak_perspective(body.vertices, t.camera);
      t.contact_mask = read_label_png(root / aux.contact_mask_path, 255).cast<double>();
      t.scene_labels = flatten_row_major(read_label_png(root / aux.scene_mask_path));
      t.part_labels = flatten_row_major(read_label_png(root / aux.part_mask_path));
    }
    out.push_back(std::move(t));
  }
  return out;
}

void check_compatible(const ModelConfig& config, const std::vector<TrainingSample>& samples) {
  for (const auto& s : samples) {
    if (s.input.height != config.input_height || s.input.width != config.input_width) {
      throw TrainingError("sample " + s.id + " image size does not match the model input");
    }
    if (s.gt_contact.size() != config.num_vertices) {
      throw TrainingError("sample " + s.id + " has " + std::to_string(s.gt_contact.size()) +
                          " vertices, model expects " + std::to_string(config.num_vertices));
    }
    if (s.has_2d_labels()) {
      if (s.scene_labels.maxCoeff() >= config.scene_channels) {
        throw TrainingError("sample " + s.id + " scene labels exceed the model's scene channels");
      }
      if (s.part_labels.maxCoeff() > config.num_parts) {
        throw TrainingError("sample " + s.id + " part labels exceed the model's part count");
      }
    }
  }
}

// ---- losses -----------------------------------------------------------------

SampleLoss sample_loss(const Model& model, const TrainingSample& sample, const LossWeights& weights,
                       double splat_sigma, Model* grad, double grad_scale) {
  Model::Cache cache;
  const auto out = model.forward(sample.input, &cache);
  SampleLoss loss;
  OutputGradients<double> g;
  g.contact = Eigen::VectorXd::Zero(out.contact.size());
  if (sample.has_3d_labels) {
    const auto l = contact_bce(out.contact, sample.gt_contact);
    loss.components.contact = l.value;
    g.contact += weights.contact * l.grad;
  }
  if (sample.has_2d_labels()) {
    const auto pal = pal_loss(out.contact, sample.pixels, sample.contact_mask, sample.camera,
                              SplatOptions{splat_sigma});
    loss.components.pixel_anchor = pal.value;
    g.contact += weights.pixel_anchor * pal.grad;
    const auto ls = segmentation_ce(out.scene_logits, sample.scene_labels);
    loss.components.scene_seg = ls.value;
    g.scene_logits = weights.scene_seg * ls.grad;
    const auto lp = segmentation_ce(out.part_logits, sample.part_labels);
    loss.components.part_seg = lp.value;
    g.part_logits = weights.part_seg * lp.grad;
  }
  try {
    loss.total = total_loss(loss.components, weights);
  } catch (const std::domain_error& e) {
    throw TrainingError("sample " + sample.id + ": " + e.what());
  }
  if (grad) {
    g.contact *= grad_scale;
    g.scene_logits *= grad_scale;
    g.part_logits *= grad_scale;
    model.backward(g, cache, *grad);
  }
  return loss;
}

double rendered_map_bce(const Model& model, const std::vector<TrainingSample>& samples,
                        double splat_sigma) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : samples) {
    if (!s.has_2d_labels()) continue;
    const auto contact = model.forward(s.input).contact;
    sum += pal_loss(contact, s.pixels, s.contact_mask, s.camera, SplatOptions{splat_sigma}).value;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("rendered_map_bce: no samples with 2D labels");
  return sum / n;
}

// ---- optimizer --------------------------------------------------------------

double gradient_norm(const Model& grad) {
  double sq = 0.0;
  grad.visit([&](const std::string&, const Eigen::MatrixXd& m) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

Adam::Adam(const Model& shape, OptimizerConfig config)
    : config_(std::move(config)), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

double Adam::step(Model& params, Model& grad) {
  const double norm = gradient_norm(grad);
  if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm at step " + std::to_string(step_));
  const double clip = config_.grad_clip > 0 && norm > config_.grad_clip ? config_.grad_clip / norm : 1.0;
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  auto p = parameter_list(params), g = parameter_list(grad), m = parameter_list(m_), v = parameter_list(v_);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Eigen::ArrayXXd gi = g[i].second->array() * clip;
    m[i].second->array() = b1 * m[i].second->array() + (1 - b1) * gi;
    v[i].second->array() = b2 * v[i].second->array() + (1 - b2) * gi.square();
    p[i].second->array() -= config_.learning_rate * (m[i].second->array() / c1) /
                            ((v[i].second->array() / c2).sqrt() + config_.epsilon);
  }
  return norm;
}

nlohmann::json Adam::to_json() const {
  return {{"step", step_}, {"m", parameters_to_json(m_)}, {"v", parameters_to_json(v_)}};
}

void Adam::load(const nlohmann::json& doc) {
  step_ = doc.at("step").get<long>();
  parameters_from_json(m_, doc.at("m"));
  parameters_from_json(v_, doc.at("v"));
}

// ---- trainer ----------------------------------------------------------------

nlohmann::json to_json(const LogRecord& r) {
  return {{"type", r.type},
          {"epoch", r.epoch},
          {"step", r.step},
          {"loss", r.loss},
          {"contact", optional_json(r.contact)},
          {"pixel_anchor", optional_json(r.pixel_anchor)},
          {"scene_seg", optional_json(r.scene_seg)},
          {"part_seg", optional_json(r.part_seg)},
          {"grad_norm", r.grad_norm}};
}

Trainer::Trainer(TrainConfig config, std::vector<TrainingSample> samples)
    : config_(std::move(config)), samples_(std::move(samples)) {
  config_.validate();
  check_compatible(config_.model, samples_);
  model_ = Model(config_.model);
  adam_ = Adam(model_, config_.optimizer);
}

void Trainer::train(const std::function<void(const LogRecord&)>& on_log) {
  while (epoch_ < config_.optimizer.epochs) run_epoch(on_log);
}

LogRecord Trainer::run_epoch(const std::function<void(const LogRecord&)>& on_log) {
  if (samples_.empty()) throw TrainingError("no training samples");
  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config_.seed + static_cast<std::uint64_t>(epoch_));
  std::shuffle(order.begin(), order.end(), rng);

  struct Mean {
    double sum = 0;
    int n = 0;
    void add(const std::optional<double>& v) {
      if (v) sum += *v, ++n;
    }
    std::optional<double> get() const { return n ? std::optional<double>(sum / n) : std::nullopt; }
  };
  Mean e_total, e_c, e_pal, e_s, e_p;
  const auto batch = static_cast<std::size_t>(config_.optimizer.batch_size);
  Model grad = model_.zeros_like();
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const double scale = 1.0 / static_cast<double>(end - start);
    grad.set_zero();
    Mean b_total, b_c, b_pal, b_s, b_p;
    for (std::size_t i = start; i < end; ++i) {
      const auto loss = sample_loss(model_, samples_[order[i]], config_.weights, config_.splat_sigma, &grad, scale);
      b_total.add(loss.total);
      b_c.add(loss.components.contact);
      b_pal.add(loss.components.pixel_anchor);
      b_s.add(loss.components.scene_seg);
      b_p.add(loss.components.part_seg);
    }
    LogRecord rec;
    rec.type = "step";
    rec.epoch = epoch_;
    rec.grad_norm = adam_.step(model_, grad);
    rec.step = adam_.steps();
    rec.loss = *b_total.get();
    rec.contact = b_c.get();
    rec.pixel_anchor = b_pal.get();
    rec.scene_seg = b_s.get();
    rec.part_seg = b_p.get();
    e_total.add(rec.loss);
    e_c.add(rec.contact);
    e_pal.add(rec.pixel_anchor);
    e_s.add(rec.scene_seg);
    e_p.add(rec.part_seg);
    if (on_log) on_log(rec);
  }
  ++epoch_;
  LogRecord summary;
  summary.type = "epoch";
  summary.epoch = epoch_;
  summary.step = adam_.steps();
  summary.loss = *e_total.get();
  summary.contact = e_c.get();
  summary.pixel_anchor = e_pal.get();
  summary.scene_seg = e_s.get();
  summary.part_seg = e_p.get();
  if (on_log) on_log(summary);
  return summary;
}

nlohmann::json Trainer::checkpoint() const {
  return {{"format", "deco-checkpoint"},
          {"version", 1},
          {"config", to_json(config_)},
          {"model", to_json(config_.model)},
          {"epoch", epoch_},
          {"parameters", parameters_to_json(model_)},
          {"optimizer", adam_.to_json()}};
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << checkpoint().dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void Trainer::restore(const nlohmann::json& doc) {
  if (doc.value("format", "") != "deco-checkpoint") throw std::runtime_error("not a checkpoint");
  if (model_config_from_json(doc.at("model")) != config_.model) {
    throw TrainingError("checkpoint model config differs from the training config");
  }
  parameters_from_json(model_, doc.at("parameters"));
  adam_.load(doc.at("optimizer"));
  epoch_ = doc.at("epoch").get<int>();
}

Model load_model(const std::filesystem::path& path) {
  const auto doc = read_json_file(path);
  if (doc.value("format", "") != "deco-checkpoint") {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  Model model = Model::zeros(model_config_from_json(doc.at("model")));
  parameters_from_json(model, doc.at("parameters"));
  return model;
}

std::vector<Eigen::VectorXd> predict(const Model& model, const std::vector<TrainingSample>& samples) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.forward(s.input).contact);
  return out;
}

}  // namespace deco
