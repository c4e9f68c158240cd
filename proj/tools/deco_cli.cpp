// deco: synthetic data, training, evaluation, inference, statistics and the
// annotation server.

#include "deco/annotation_server.hpp"
#include "deco/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <csignal>
#include <set>
#include <iostream>
#include <sstream>

namespace {

using namespace deco;
namespace fs = std::filesystem;

annotation::AnnotationServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::set<std::string> split_csv(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

int serve(const fs::path& dataset_root, const std::string& split, int copies, const std::string& host, int port,
          const std::string& token, const std::string& reviewers, const std::string& annotators,
          const std::string& qualification, const std::string& log_path, std::vector<double> radii) {
  const ContactDataset dataset = load_dataset(dataset_root);
  TemplateMesh mesh = load_dataset_template(dataset, dataset_root);

  annotation::ServiceOptions options;
  if (!radii.empty()) options.brush_radii = std::move(radii);
  options.auth_token = token;
  options.reviewers = split_csv(reviewers);
  options.prequalified = split_csv(annotators);
  if (!qualification.empty()) {
    options.qualification_set = read_json_file(qualification).get<std::map<std::string, VertexSet>>();
  }
  if (!log_path.empty()) options.log_path = log_path;
  const bool fresh = log_path.empty() || !fs::exists(log_path);

  annotation::AnnotationStore store(std::move(mesh), dataset.vocabulary, options);
  if (fresh) {
    // Prompts come from the object labels already attached to each record.
    for (const ContactRecord* r : split.empty() ? dataset.split(dataset.splits.begin()->first) : dataset.split(split)) {
      std::vector<std::string> labels;
      for (const auto& oc : r->object_contacts) {
        if (std::find(labels.begin(), labels.end(), oc.label) == labels.end()) labels.push_back(oc.label);
      }
      for (int c = 0; c < copies; ++c) store.add_task(r->image_id, labels, r->image_path);
    }
  }
  annotation::AnnotationServer server(store);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "annotation server on http://" << host << ":" << port << " with " << store.tasks().size()
            << " tasks\n";
  const bool ok = server.listen(host, port);
  g_server = nullptr;
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deco: dense contact estimation toolkit"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  GenerateOptions gen_opts;
  std::string gen_config;
  std::string gen_template;
  int gen_image_size = 0;
  gen->add_option("--config", gen_config, "Synthetic-world config (JSON)");
  gen->add_option("--count", gen_opts.count, "Number of samples")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gen_opts.seed, "Base seed");
  gen->add_option("--train-fraction", gen_opts.train_fraction, "Fraction of samples in the train split")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--image-size", gen_image_size, "Square image size");
  gen->add_option("--template", gen_template, "Body template mesh (needs a .parts sidecar)");
  gen->add_option("--out", gen_opts.out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_config, train_dataset, train_out, train_profile = "desk", train_resume;
  int train_epochs = -1, train_batch = 0;
  double train_lr = 0;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("--config", train_config, "Training config (JSON)");
  train->add_option("--profile", train_profile, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  train->add_option("--dataset", train_dataset, "Dataset directory");
  train->add_option("--out", train_out, "Output directory for checkpoint and log");
  train->add_option("--epochs", train_epochs, "Epoch count");
  train->add_option("--batch", train_batch, "Batch size");
  train->add_option("--lr", train_lr, "Learning rate");
  train->add_option("--seed", train_seed, "Shuffle and init seed")->each([&](const std::string&) { train_seed_set = true; });
  train->add_option("--resume", train_resume, "Checkpoint to resume from");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or the geometric baseline");
  EvalOptions eval_opts;
  std::string eval_ckpt, eval_out;
  double eval_baseline = -1;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  eval->add_option("--dataset", eval_opts.dataset, "Dataset directory")->required();
  eval->add_option("--split", eval_opts.split, "Split name (empty: all records)");
  eval->add_option("--baseline-threshold", eval_baseline, "Geometric baseline distance in meters");
  eval->add_option("--threshold", eval_opts.threshold, "Probability threshold");
  eval->add_option("--out", eval_out, "Report output (JSON)");

  // infer
  auto* infer = app.add_subcommand("infer", "Per-vertex contact for one image");
  InferOptions infer_opts;
  std::string infer_dataset, infer_body;
  infer->add_option("--checkpoint", infer_opts.checkpoint, "Checkpoint file")->required();
  infer->add_option("--image", infer_opts.image, "Input PNG")->required();
  infer->add_option("--out", infer_opts.out_dir, "Output directory")->required();
  infer->add_option("--dataset", infer_dataset, "Dataset providing the template mesh");
  infer->add_option("--body", infer_body, "Posed body mesh to color");
  infer->add_option("--threshold", infer_opts.threshold, "Probability threshold");

  // stats
  auto* stats = app.add_subcommand("stats", "Dataset histograms and aggregate contact");
  StatsOptions stats_opts;
  stats->add_option("--dataset", stats_opts.dataset, "Dataset directory")->required();
  stats->add_option("--split", stats_opts.split, "Split name (default: all records)");
  stats->add_option("--min-vertices", stats_opts.min_vertices, "Vertices needed to count a part")
      ->check(CLI::PositiveNumber);
  stats->add_option("--out", stats_opts.out_dir, "Output directory")->required();

  // annotate-serve
  auto* serve_cmd = app.add_subcommand("annotate-serve", "Run the annotation HTTP service");
  std::string serve_dataset, serve_split, serve_host = "127.0.0.1", serve_token, serve_reviewers, serve_annotators,
                                          serve_qual, serve_log;
  int serve_port = 8080, serve_copies = 1;
  std::vector<double> serve_radii;
  serve_cmd->add_option("--dataset", serve_dataset, "Dataset with template mesh and images")->required();
  serve_cmd->add_option("--split", serve_split, "Split whose images become tasks");
  serve_cmd->add_option("--copies", serve_copies, "Tasks per image")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--host", serve_host, "Bind address");
  serve_cmd->add_option("--port", serve_port, "Port");
  serve_cmd->add_option("--token", serve_token, "Shared X-Auth-Token");
  serve_cmd->add_option("--reviewers", serve_reviewers, "Comma-separated reviewer ids");
  serve_cmd->add_option("--annotators", serve_annotators, "Comma-separated pre-qualified annotators");
  serve_cmd->add_option("--qualification", serve_qual, "Qualification ground truth JSON {image: [vertices]}");
  serve_cmd->add_option("--log", serve_log, "Append-only event log (JSONL)");
  serve_cmd->add_option("--radii", serve_radii, "Brush radii in meters");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      if (!gen_config.empty()) gen_opts.synth = synth_config_from_json(read_json_file(gen_config));
      if (gen_image_size > 0) gen_opts.synth.image_size = gen_image_size;
      if (!gen_template.empty()) gen_opts.synth.template_path = gen_template;
      const auto d = cmd_generate(gen_opts);
      std::cout << "wrote " << d.records.size() << " samples to " << gen_opts.out << '\n';
    } else if (*train) {
      TrainOptions o;
      o.config = train_config.empty() ? (train_profile == "full" ? TrainConfig::full_scale() : TrainConfig::desk())
                                      : load_train_config(train_config);
      if (!train_dataset.empty()) o.config.dataset = train_dataset;
      if (!train_out.empty()) o.config.output_dir = train_out;
      if (train_epochs >= 0) o.config.optimizer.epochs = train_epochs;
      if (train_batch > 0) o.config.optimizer.batch_size = train_batch;
      if (train_lr > 0) o.config.optimizer.learning_rate = train_lr;
      if (train_seed_set) {
        o.config.seed = train_seed;
        o.config.model.seed = train_seed;
      }
      if (!train_resume.empty()) o.resume = train_resume;
      const auto ckpt = cmd_train(o, std::cout);
      std::cout << "checkpoint " << ckpt.string() << '\n';
    } else if (*eval) {
      if (!eval_ckpt.empty()) eval_opts.checkpoint = eval_ckpt;
      if (eval_baseline >= 0) eval_opts.baseline_threshold = eval_baseline;
      if (!eval_out.empty()) eval_opts.out = eval_out;
      const auto report = cmd_eval(eval_opts);
      std::cout << to_json(report).dump(2) << '\n';
    } else if (*infer) {
      if (!infer_dataset.empty()) infer_opts.dataset = infer_dataset;
      if (!infer_body.empty()) infer_opts.body = infer_body;
      const auto probs = cmd_infer(infer_opts);
      std::cout << "wrote " << probs.size() << " vertex probabilities to " << infer_opts.out_dir << '\n';
    } else if (*stats) {
      const auto s = cmd_stats(stats_opts);
      std::cout << "records " << s.at("records") << "\nobjects " << s.at("objects").dump() << "\nparts "
                << s.at("parts").dump() << '\n';
    } else if (*serve_cmd) {
      return serve(serve_dataset, serve_split, serve_copies, serve_host, serve_port, serve_token, serve_reviewers,
                   serve_annotators, serve_qual, serve_log, serve_radii);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
