#pragma once

#include "deco/contact_data.hpp"
#include "deco/mesh.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace deco {

/// Predicted probabilities at or above this value count as contact.
inline constexpr double kDefaultContactThreshold = 0.5;

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  friend bool operator==(const PrecisionRecallF1&, const PrecisionRecallF1&) = default;
};

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0;
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

/// Both sets empty gives (1, 1, 1). An undefined ratio is 0; f1 is 0 when P + R = 0.
PrecisionRecallF1 scores_from_counts(const ConfusionCounts& counts);

/// `pred` is thresholded at `threshold` (inclusive), `gt` at 0.5.
ConfusionCounts confusion_counts(const VertexContactVector& pred, const VertexContactVector& gt,
                                 double threshold = kDefaultContactThreshold);
PrecisionRecallF1 precision_recall_f1(const VertexContactVector& pred,
                                      const VertexContactVector& gt,
                                      double threshold = kDefaultContactThreshold);
PrecisionRecallF1 precision_recall_f1(const VertexSet& pred, const VertexSet& gt);

/// Mean geodesic distance (cm) from each false-positive vertex to the nearest gt
/// contact vertex. 0 with no false positives; nullopt when gt is empty but false
/// positives exist. Graph edge lengths are in meters.
std::optional<double> geodesic_error_cm(const VertexContactVector& pred,
                                        const VertexContactVector& gt, const EdgeGraph& graph,
                                        double threshold = kDefaultContactThreshold);

/// |a ∩ b| / |a ∪ b|, 1 when both are empty. Inputs need not be sorted.
double iou(const VertexSet& a, const VertexSet& b);

/// items x categories; every row sums to the rater count.
struct RatingMatrix {
  Eigen::MatrixXi counts;
  int raters() const;
  /// Two categories (no contact, contact) per vertex from one vertex set per rater.
  static RatingMatrix from_vertex_sets(std::span<const VertexSet> submissions, int num_vertices);
};

/// Standard Fleiss' kappa; 1 when the chance agreement is 1.
/// Throws std::invalid_argument for no items, fewer than 2 raters or uneven rows.
double fleiss_kappa(const RatingMatrix& ratings);

/// Pass iff the mean IoU is at least `threshold`. Throws on an empty list.
bool qualification_gate(std::span<const double> ious, double threshold = 0.5);

struct PartMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> geodesic_error_cm;
  friend bool operator==(const PartMetrics&, const PartMetrics&) = default;
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> geodesic_error_cm;
  std::map<std::string, PartMetrics> per_part;
  int sample_count = 0;
  double threshold = kDefaultContactThreshold;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

std::string part_name(int part);

/// Averages per-sample scores over the samples; per-part entries pool counts
/// over all samples restricted to the part's vertices.
MetricsReport evaluate(std::span<const VertexContactVector> predictions,
                       std::span<const VertexContactVector> ground_truth, const TemplateMesh& mesh,
                       const EdgeGraph& graph, double threshold = kDefaultContactThreshold);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const nlohmann::json& doc);

}  // namespace deco
