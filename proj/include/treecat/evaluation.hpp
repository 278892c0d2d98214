#pragma once

// Detection, species and change metrics, and the lesion harness.

#include "treecat/crf_model.hpp"
#include "treecat/scene_store.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace treecat {

inline constexpr double kMatchRadiusM = 4.0;

// --- detection ---------------------------------------------------------------

struct MatchPair {
  std::size_t detection = 0;
  std::size_t truth = 0;
  double distance_m = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> false_positives;  // detection indices
  std::vector<std::size_t> false_negatives;  // ground-truth indices
};

/// One-to-one matching. Detections are visited by descending score (input
/// order among equal scores); each claims the nearest unclaimed tree within
/// `radius` meters.
MatchResult match_detections(std::span<const DetectionRecord> detections, std::span<const GroundTruthTree> truth,
                             double radius = kMatchRadiusM);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per distinct score, descending
  double average_precision = 0.0;
  std::size_t ground_truth = 0;
};

/// Precision and recall at every distinct score threshold; AP is the area
/// under the all-points precision envelope.
PrCurve pr_curve_and_map(std::span<const DetectionRecord> detections, std::span<const GroundTruthTree> truth,
                         double radius = kMatchRadiusM);

/// Threshold with the best F1 when detections are ranked by `scores`
/// (parallel to `detections`). Ties go to higher precision, then to the
/// lower threshold. The returned value sits halfway between the lowest
/// accepted and the highest rejected score; -inf when the best cut keeps
/// every detection (or there are none).
double best_f1_threshold(std::span<const double> scores, std::span<const DetectionRecord> detections,
                         std::span<const GroundTruthTree> truth, double radius = kMatchRadiusM);

void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve);

/// mAP of greedy inference on `inst` with the acceptance threshold disabled.
double detection_map(const CrfInstance& inst, const CrfModel& model, std::span<const GroundTruthTree> truth,
                     double radius = kMatchRadiusM);

// --- lesions -------------------------------------------------------------------

struct LesionScene {
  CrfInstance instance;
  std::vector<GroundTruthTree> truth;
};

struct LesionConfig {
  std::vector<double> grid = default_scalar_grid();
  int max_rounds = 5;
  double radius = kMatchRadiusM;
  int jobs = 1;
};

struct LesionRow {
  std::string variant;
  CrfModel model;         // after re-searching the remaining scalars
  double validation_map = 0.0;
  double test_map = 0.0;
};

/// full, no-aerial, no-streetview, no-map, no-spatial (hard suppression
/// instead of the learned spacing prior) and no-crf-learning (all scalars
/// 1). Every variant except the last re-searches its remaining scalars on
/// `validation`; all are scored on `test`.
std::vector<LesionRow> lesion_suite(const CrfModel& base, const LesionScene& validation, const LesionScene& test,
                                    const LesionConfig& config = {});

// --- species -------------------------------------------------------------------

struct SpeciesMetrics {
  double dataset_precision = 0.0;
  double average_class_precision = 0.0;
  std::vector<std::string> classes;  // by descending true count, then name
  std::vector<std::size_t> class_counts;
  std::vector<double> class_precision;
  // Entry n-1 restricts samples to the n most frequent true classes.
  std::vector<double> cumulative_dataset_precision;
  std::vector<double> cumulative_average_class_precision;
};

/// Per-class precision is correct predictions of the class over all
/// predictions of it (0 if never predicted); the average is unweighted over
/// the true classes. Predictions outside the true classes and `extra_classes`
/// throw UnknownLabel.
SpeciesMetrics species_metrics(std::span<const std::string> predicted, std::span<const std::string> truth,
                               std::span<const std::string> extra_classes = {});

// --- change --------------------------------------------------------------------

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix(std::vector<std::string> labels, CountMatrix counts);

  const std::vector<std::string>& labels() const { return labels_; }
  const CountMatrix& counts() const { return counts_; }

  std::int64_t total() const { return counts_.sum(); }
  double precision(std::size_t c) const;
  double recall(std::size_t c) const;
  /// Trace over total.
  double moa() const;

  /// same/new/removed collapsed to same/changed.
  ConfusionMatrix collapse_binary() const;

 private:
  std::vector<std::string> labels_;
  CountMatrix counts_;
};

/// Labels are compared after trimming and lowercasing. Unknown labels throw
/// UnknownLabel.
ConfusionMatrix change_metrics(std::span<const std::pair<std::string, std::string>> truth_predicted,
                               const std::vector<std::string>& classes);

}  // namespace treecat
