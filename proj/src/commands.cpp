#include "deco/commands.hpp"

#include "deco/geodesic.hpp"
#include "deco/image_io.hpp"

#include <fstream>
#include <iostream>

namespace deco {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// Records of `split`, or all records when `split` is empty.
std::vector<const ContactRecord*> select(const ContactDataset& d, const std::string& split) {
  if (!split.empty()) return d.split(split);
  std::vector<const ContactRecord*> out;
  for (const auto& r : d.records) out.push_back(&r);
  return out;
}

}  // namespace

ContactDataset cmd_generate(const GenerateOptions& o) {
  if (o.out.empty()) throw std::invalid_argument("generate: output directory required");
  const SynthWorld world(o.synth);
  ContactDataset d = write_synthetic_dataset(world, o.seed, o.count, o.out, o.train_fraction);
  write_json(o.out / "synth_config.json", to_json(o.synth));
  return d;
}

TemplateMesh load_dataset_template(const ContactDataset& dataset, const fs::path& root) {
  if (dataset.template_path.empty()) {
    throw DatasetError("dataset at " + root.string() + " does not ship a template mesh");
  }
  TemplateMesh mesh = load_template(root / dataset.template_path);
  if (mesh.num_vertices() != dataset.num_vertices) {
    throw DatasetError("template has " + std::to_string(mesh.num_vertices()) + " vertices, dataset declares " +
                       std::to_string(dataset.num_vertices));
  }
  return mesh;
}

ModelConfig derive_model_config(const ModelConfig& base, const ContactDataset& dataset, const fs::path& root) {
  if (dataset.records.empty()) throw DatasetError("dataset has no records");
  ModelConfig c = base;
  const RgbImage first = read_png_rgb(root / dataset.records.front().image_path);
  c.input_height = first.height();
  c.input_width = first.width();
  c.num_vertices = dataset.num_vertices;
  c.num_parts = load_dataset_template(dataset, root).num_parts;
  c.scene_channels = static_cast<int>(dataset.vocabulary.size()) + 1;
  c.validate();
  return c;
}

fs::path cmd_train(const TrainOptions& o, std::ostream& progress) {
  TrainConfig config = o.config;
  std::optional<json> resume_doc;
  if (o.resume) {
    resume_doc = read_json_file(*o.resume);
    if (config.dataset.empty()) {
      const TrainConfig saved = train_config_from_json(resume_doc->at("config"));
      config.dataset = saved.dataset;
      config.model = saved.model;
    }
  }
  if (config.dataset.empty()) throw std::invalid_argument("train: dataset path required");
  if (config.output_dir.empty()) throw std::invalid_argument("train: output directory required");
  const fs::path root = config.dataset;
  const ContactDataset dataset = load_dataset(root);
  if (resume_doc) {
    config.model = model_config_from_json(resume_doc->at("model"));
  } else {
    config.model = derive_model_config(config.model, dataset, root);
  }
  config.validate();
  auto samples = load_training_samples(dataset, root, config.split);

  Trainer trainer(config, std::move(samples));
  if (resume_doc) trainer.restore(*resume_doc);

  const fs::path out = config.output_dir;
  fs::create_directories(out);
  std::ofstream log(out / "train_log.jsonl", resume_doc ? std::ios::app : std::ios::trunc);
  const fs::path ckpt = out / "checkpoint.json";
  auto on_log = [&](const LogRecord& r) {
    log << to_json(r).dump() << '\n';
    if (r.type == "epoch") {
      log.flush();
      progress << "epoch " << r.epoch << "/" << config.optimizer.epochs << "  loss " << r.loss << '\n';
      if (config.checkpoint_every > 0 && r.epoch % config.checkpoint_every == 0) trainer.save_checkpoint(ckpt);
    }
  };
  try {
    trainer.train(on_log);
  } catch (const TrainingError& e) {
    log << json{{"type", "error"}, {"epoch", trainer.epoch()}, {"message", e.what()}}.dump() << '\n';
    throw;
  }
  trainer.save_checkpoint(ckpt);
  return ckpt;
}

MetricsReport cmd_eval(const EvalOptions& o) {
  const ContactDataset dataset = load_dataset(o.dataset);
  const TemplateMesh mesh = load_dataset_template(dataset, o.dataset);
  const EdgeGraph graph = build_edge_graph(mesh);
  const auto records = select(dataset, o.split);

  std::vector<Eigen::VectorXd> preds, gts;
  for (const auto* r : records) gts.push_back(binarize(*r, dataset.num_vertices));

  if (o.baseline_threshold) {
    for (const auto* r : records) {
      if (!r->aux) throw DatasetError("record " + r->image_id + " has no body/scene for the geometric baseline");
      const RawMesh body = read_mesh(o.dataset / r->aux->body_path);
      std::ifstream in(o.dataset / r->aux->scene_path);
      if (!in) throw DatasetError("missing scene file for " + r->image_id);
      const SceneGeometry scene = scene_from_json(json::parse(in));
      preds.push_back(geometric_contact(PosedBody{body.vertices, "file"}, scene, *o.baseline_threshold));
    }
  } else {
    if (!o.checkpoint) throw std::invalid_argument("eval: checkpoint or baseline threshold required");
    const Model model = load_model(*o.checkpoint);
    if (model.config().num_vertices != dataset.num_vertices) {
      throw DatasetError("checkpoint predicts " + std::to_string(model.config().num_vertices) +
                         " vertices, dataset template has " + std::to_string(dataset.num_vertices));
    }
    for (const auto* r : records) {
      preds.push_back(model.forward(image_to_input<double>(read_png_rgb(o.dataset / r->image_path))).contact);
    }
  }
  MetricsReport report = evaluate(preds, gts, mesh, graph, o.threshold);
  if (o.out) write_json(*o.out, to_json(report));
  return report;
}

Eigen::VectorXd cmd_infer(const InferOptions& o) {
  const json ckpt = read_json_file(o.checkpoint);
  Model model = Model::zeros(model_config_from_json(ckpt.at("model")));
  parameters_from_json(model, ckpt.at("parameters"));

  const RgbImage image = read_png_rgb(o.image);
  const Eigen::VectorXd probs = model.forward(image_to_input<double>(image)).contact;

  fs::path dataset_root;
  if (o.dataset) {
    dataset_root = *o.dataset;
  } else if (ckpt.contains("config")) {
    dataset_root = ckpt.at("config").value("dataset", std::string());
  }
  if (dataset_root.empty()) throw std::invalid_argument("infer: dataset with the template mesh required");
  const ContactDataset dataset = load_dataset(dataset_root);
  const TemplateMesh mesh = load_dataset_template(dataset, dataset_root);
  if (mesh.num_vertices() != probs.size()) throw DatasetError("template does not match the checkpoint");

  Vertices vertices = mesh.vertices;
  if (o.body) {
    RawMesh body = read_mesh(*o.body);
    if (body.vertices.rows() != mesh.vertices.rows()) throw DatasetError("posed body vertex count differs");
    vertices = std::move(body.vertices);
  }
  fs::create_directories(o.out_dir);
  VertexSet contact;
  for (Eigen::Index v = 0; v < probs.size(); ++v) {
    if (probs(v) >= o.threshold) contact.push_back(static_cast<int>(v));
  }
  write_json(o.out_dir / "contact.json", {{"image", o.image.string()},
                                          {"num_vertices", probs.size()},
                                          {"threshold", o.threshold},
                                          {"probabilities", std::vector<double>(probs.data(), probs.data() + probs.size())},
                                          {"contact_vertices", contact}});
  const VertexColors colors = contact_colors(probs);
  write_ply(o.out_dir / "contact.ply", vertices, mesh.triangles, &colors);
  return probs;
}

json cmd_stats(const StatsOptions& o) {
  const ContactDataset full = load_dataset(o.dataset);
  const TemplateMesh mesh = load_dataset_template(full, o.dataset);
  ContactDataset subset = full;
  subset.records.clear();
  for (const auto* r : select(full, o.split)) subset.records.push_back(*r);

  json objects = json::object();
  for (const auto& label : full.vocabulary) objects[label] = 0;
  for (const auto& [label, count] : object_label_histogram(subset)) objects[label] = count;

  json parts = json::object();
  const auto hist = part_contact_histogram(subset, mesh, o.min_vertices);
  for (int j = 0; j < mesh.num_parts; ++j) parts[part_name(j)] = hist[static_cast<std::size_t>(j)];

  Eigen::VectorXd probability = Eigen::VectorXd::Zero(full.num_vertices);
  for (const auto& r : subset.records) probability += binarize(r, full.num_vertices);
  if (!subset.records.empty()) probability /= static_cast<double>(subset.records.size());

  fs::create_directories(o.out_dir);
  write_json(o.out_dir / "object_histogram.json", objects);
  write_json(o.out_dir / "part_histogram.json", {{"min_vertices", o.min_vertices}, {"parts", parts}});
  const std::vector<double> prob(probability.data(), probability.data() + probability.size());
  write_json(o.out_dir / "aggregate_contact.json", {{"records", subset.records.size()}, {"probability", prob}});
  const VertexColors colors = contact_colors(probability);
  write_ply(o.out_dir / "aggregate_contact.ply", mesh.vertices, mesh.triangles, &colors);
  return {{"records", subset.records.size()},
          {"objects", objects},
          {"parts", parts},
          {"min_vertices", o.min_vertices},
          {"probability", prob}};
}

}  // namespace deco
