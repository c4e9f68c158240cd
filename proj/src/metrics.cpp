#include "deco/metrics.hpp"

#include "deco/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace deco {
namespace {

void check_lengths(const VertexContactVector& pred, const VertexContactVector& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("prediction has " + std::to_string(pred.size()) +
                                " vertices, ground truth has " + std::to_string(gt.size()));
  }
}

double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

VertexSet sorted_unique(VertexSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

// Distance from every vertex to the nearest gt contact vertex, in cm.
std::optional<Eigen::VectorXd> distance_to_gt_cm(const VertexContactVector& gt, const EdgeGraph& graph) {
  std::vector<int> sources;
  for (Eigen::Index v = 0; v < gt.size(); ++v) {
    if (gt(v) >= 0.5) sources.push_back(static_cast<int>(v));
  }
  if (sources.empty()) return std::nullopt;
  return geodesic_distances(graph, sources) * 100.0;
}

std::optional<double> optional_number(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

PrecisionRecallF1 scores_from_counts(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0 && c.tp + c.fn == 0) return {1.0, 1.0, 1.0};
  PrecisionRecallF1 s;
  s.precision = ratio(c.tp, c.tp + c.fp);
  s.recall = ratio(c.tp, c.tp + c.fn);
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

ConfusionCounts confusion_counts(const VertexContactVector& pred, const VertexContactVector& gt,
                                 double threshold) {
  check_lengths(pred, gt);
  ConfusionCounts c;
  for (Eigen::Index v = 0; v < pred.size(); ++v) {
    const bool p = pred(v) >= threshold;
    const bool g = gt(v) >= 0.5;
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
  }
  return c;
}

PrecisionRecallF1 precision_recall_f1(const VertexContactVector& pred, const VertexContactVector& gt,
                                      double threshold) {
  return scores_from_counts(confusion_counts(pred, gt, threshold));
}

PrecisionRecallF1 precision_recall_f1(const VertexSet& pred, const VertexSet& gt) {
  const VertexSet p = sorted_unique(pred), g = sorted_unique(gt);
  VertexSet common;
  std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(common));
  const long tp = static_cast<long>(common.size());
  return scores_from_counts({tp, static_cast<long>(p.size()) - tp, static_cast<long>(g.size()) - tp});
}

std::optional<double> geodesic_error_cm(const VertexContactVector& pred, const VertexContactVector& gt,
                                        const EdgeGraph& graph, double threshold) {
  check_lengths(pred, gt);
  if (graph.num_vertices() != pred.size()) {
    throw std::invalid_argument("geodesic_error_cm: graph does not match the vertex count");
  }
  std::vector<int> false_positives;
  for (Eigen::Index v = 0; v < pred.size(); ++v) {
    if (pred(v) >= threshold && gt(v) < 0.5) false_positives.push_back(static_cast<int>(v));
  }
  if (false_positives.empty()) return 0.0;
  const auto dist = distance_to_gt_cm(gt, graph);
  if (!dist) return std::nullopt;
  double sum = 0.0;
  for (int v : false_positives) sum += (*dist)(v);
  return sum / static_cast<double>(false_positives.size());
}

double iou(const VertexSet& a, const VertexSet& b) {
  const VertexSet x = sorted_unique(a), y = sorted_unique(b);
  if (x.empty() && y.empty()) return 1.0;
  VertexSet common;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
  const double inter = static_cast<double>(common.size());
  return inter / (static_cast<double>(x.size() + y.size()) - inter);
}

int RatingMatrix::raters() const { return counts.rows() == 0 ? 0 : counts.row(0).sum(); }

RatingMatrix RatingMatrix::from_vertex_sets(std::span<const VertexSet> submissions, int num_vertices) {
  RatingMatrix m;
  m.counts = Eigen::MatrixXi::Zero(num_vertices, 2);
  m.counts.col(0).setConstant(static_cast<int>(submissions.size()));
  for (const auto& s : submissions) {
    for (int v : sorted_unique(s)) {
      if (v < 0 || v >= num_vertices) throw std::out_of_range("vertex id out of range");
      --m.counts(v, 0);
      ++m.counts(v, 1);
    }
  }
  return m;
}

double fleiss_kappa(const RatingMatrix& ratings) {
  const Eigen::MatrixXi& r = ratings.counts;
  if (r.rows() == 0 || r.cols() == 0) throw std::invalid_argument("fleiss_kappa: no items");
  if ((r.array() < 0).any()) throw std::invalid_argument("fleiss_kappa: negative count");
  const int n = r.row(0).sum();
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    if (r.row(i).sum() != n) throw std::invalid_argument("fleiss_kappa: items have different rater counts");
  }
  if (n < 2) throw std::invalid_argument("fleiss_kappa: needs at least 2 raters");
  const double items = static_cast<double>(r.rows());
  const Eigen::ArrayXXd c = r.cast<double>().array();
  const Eigen::ArrayXd p_item = ((c * (c - 1.0)).rowwise().sum()) / (n * (n - 1.0));
  const double p_bar = p_item.mean();
  const Eigen::ArrayXd p_cat = c.colwise().sum().transpose() / (items * n);
  const double p_e = p_cat.square().sum();
  if (p_e >= 1.0) return 1.0;
  return (p_bar - p_e) / (1.0 - p_e);
}

bool qualification_gate(std::span<const double> ious, double threshold) {
  if (ious.empty()) throw std::invalid_argument("qualification_gate: no IoU values");
  const double mean = std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
  return mean >= threshold;
}

std::string part_name(int part) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "part_%02d", part);
  return buf;
}

MetricsReport evaluate(std::span<const VertexContactVector> predictions,
                       std::span<const VertexContactVector> ground_truth, const TemplateMesh& mesh,
                       const EdgeGraph& graph, double threshold) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("evaluate: prediction and ground-truth counts differ");
  }
  const auto nv = mesh.vertices.rows();
  MetricsReport report;
  report.threshold = threshold;
  report.sample_count = static_cast<int>(predictions.size());

  std::vector<ConfusionCounts> part_counts(static_cast<std::size_t>(mesh.num_parts));
  std::vector<double> part_geo_sum(part_counts.size(), 0.0);
  std::vector<long> part_geo_n(part_counts.size(), 0);
  std::vector<bool> part_geo_undefined(part_counts.size(), false);
  double geo_sum = 0.0;
  int geo_n = 0;

  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const auto& pred = predictions[s];
    const auto& gt = ground_truth[s];
    if (pred.size() != nv || gt.size() != nv) {
      throw std::invalid_argument("evaluate: sample " + std::to_string(s) +
                                  " does not match the template vertex count");
    }
    const auto scores = precision_recall_f1(pred, gt, threshold);
    report.precision += scores.precision;
    report.recall += scores.recall;
    report.f1 += scores.f1;

    const auto dist = distance_to_gt_cm(gt, graph);
    long fp = 0;
    double fp_sum = 0.0;
    for (Eigen::Index v = 0; v < nv; ++v) {
      const bool p = pred(v) >= threshold, g = gt(v) >= 0.5;
      auto& pc = part_counts[static_cast<std::size_t>(mesh.part_labels[static_cast<std::size_t>(v)])];
      pc.tp += p && g;
      pc.fp += p && !g;
      pc.fn += !p && g;
      if (p && !g) {
        const auto part = static_cast<std::size_t>(mesh.part_labels[static_cast<std::size_t>(v)]);
        ++fp;
        if (dist) {
          fp_sum += (*dist)(v);
          part_geo_sum[part] += (*dist)(v);
          ++part_geo_n[part];
        } else {
          part_geo_undefined[part] = true;
        }
      }
    }
    if (fp == 0) {
      ++geo_n;
    } else if (dist) {
      geo_sum += fp_sum / static_cast<double>(fp);
      ++geo_n;
    }
  }

  if (!predictions.empty()) {
    const double n = static_cast<double>(predictions.size());
    report.precision /= n;
    report.recall /= n;
    report.f1 /= n;
  }
  if (geo_n > 0) report.geodesic_error_cm = geo_sum / geo_n;
  for (int j = 0; j < mesh.num_parts; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const auto s = scores_from_counts(part_counts[idx]);
    PartMetrics pm{s.precision, s.recall, s.f1, std::nullopt};
    if (part_geo_n[idx] > 0) {
      pm.geodesic_error_cm = part_geo_sum[idx] / static_cast<double>(part_geo_n[idx]);
    } else if (!part_geo_undefined[idx]) {
      pm.geodesic_error_cm = 0.0;
    }
    report.per_part[part_name(j)] = pm;
  }
  return report;
}

nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json parts = nlohmann::json::object();
  for (const auto& [name, p] : r.per_part) {
    parts[name] = {{"precision", p.precision},
                   {"recall", p.recall},
                   {"f1", p.f1},
                   {"geodesic_error_cm", opt(p.geodesic_error_cm)}};
  }
  return {{"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"geodesic_error_cm", opt(r.geodesic_error_cm)},
          {"geodesic_direction", "false_positive_to_nearest_gt"},
          {"empty_set_convention", "P=R=F1=1 when pred and gt are both empty; geodesic 0 without false positives"},
          {"threshold", r.threshold},
          {"sample_count", r.sample_count},
          {"per_part", parts}};
}

MetricsReport metrics_report_from_json(const nlohmann::json& doc) {
  MetricsReport r;
  r.precision = doc.at("precision").get<double>();
  r.recall = doc.at("recall").get<double>();
  r.f1 = doc.at("f1").get<double>();
  r.geodesic_error_cm = optional_number(doc.at("geodesic_error_cm"));
  r.threshold = doc.value("threshold", kDefaultContactThreshold);
  r.sample_count = doc.at("sample_count").get<int>();
  for (const auto& [name, p] : doc.at("per_part").items()) {
    r.per_part[name] = {p.at("precision").get<double>(), p.at("recall").get<double>(),
                        p.at("f1").get<double>(), optional_number(p.at("geodesic_error_cm"))};
  }
  return r;
}

}  // namespace deco
