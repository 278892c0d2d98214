#pragma once

// Detection-set CRF over fused candidates:
//
//   log p(T) = sum_t k1 psi(t) + k2 phi(t) + k3 Lambda(t, T\t) + k4 Omega(t)
//
// psi/phi are the aerial and street scores, Omega = beta[Q_m(d_m)] the road
// distance prior, Lambda = alpha[Q_s(d_s)] the spacing prior on the distance
// to the closest other member (or a hard suppression radius in nms mode).
// The global normalizer is dropped.

#include "treecat/geo_projection.hpp"
#include "treecat/multiview_fusion.hpp"
#include "treecat/scene_store.hpp"
#include "treecat/score_provider.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace treecat {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// 0.5, 1, 2, ..., 64 m.
std::vector<double> default_bin_edges();

/// Piecewise-constant function of a distance. Edges e_1 < ... < e_{n-1}
/// split [0, inf) into n bins; bin 0 is [0, e_1), the last is [e_{n-1}, inf).
struct PriorHistogram {
  std::vector<double> edges = default_bin_edges();
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(Eigen::Index(default_bin_edges().size() + 1));

  std::size_t bins() const { return edges.size() + 1; }
  std::size_t bin_of(double d) const;
  double at(double d) const { return weights[Eigen::Index(bin_of(d))]; }
  /// Distances at or beyond this value share the last bin.
  double saturation() const { return edges.back(); }
  void validate() const;
};

enum class SpatialMode { Learned, Nms };

struct CrfModel {
  Eigen::Vector4d k = Eigen::Vector4d::Ones();  // aerial, street, spatial, map
  PriorHistogram spatial;                       // alpha
  PriorHistogram map;                           // beta
  double tau2 = kNegInf;
  SpatialMode mode = SpatialMode::Learned;
  double tau_nms = 4.0;
  ScoreProviderConfig provider;

  void validate() const;
};

/// Candidates prepared for inference: planar positions and the unweighted
/// static terms (psi, phi, beta[Q_m]) per candidate, in id order.
struct CrfInstance {
  std::vector<std::int64_t> ids;
  std::vector<GeoPoint> geo;
  std::vector<Eigen::Vector2d> xy;
  Eigen::Matrix<double, Eigen::Dynamic, 3> terms;

  std::size_t size() const { return ids.size(); }
};

CrfInstance make_crf_instance(std::span<const CandidateTree> candidates, const PriorHistogram& map_prior,
                              const LocalFrame& frame);

double static_score(const CandidateTree& t, const CrfModel& model);
double static_score(const CrfInstance& inst, std::size_t i, const CrfModel& model);

/// Spatial potential for a distance to the closest other member
/// (+inf for none), already weighted by k3.
double spatial_value(double d_s, const CrfModel& model);
double spatial_term(const Eigen::Vector2d& t, std::span<const Eigen::Vector2d> others, const CrfModel& model);

/// Full log-potential of the subset `members` (indices into `inst`).
double objective(const CrfInstance& inst, std::span<const std::size_t> members, const CrfModel& model);

struct GreedyResult {
  std::vector<std::size_t> members;  // in acceptance order
  std::vector<double> gains;         // marginal gain of each accepted step
  double objective = 0.0;
};

/// Adds the candidate with the largest marginal gain while that gain is
/// positive. Candidates whose static score is below tau2 are never added.
/// Equal gains go to the smaller id.
GreedyResult greedy_infer(const CrfInstance& inst, const CrfModel& model);

/// Accepted members as output records. Each record's score is the member's
/// own term of the objective.
std::vector<DetectionRecord> to_detections(const CrfInstance& inst, const GreedyResult& result,
                                           const CrfModel& model);

// --- training ----------------------------------------------------------------

struct PriorFitConfig {
  double lambda = 0.1;
  int max_iterations = 100;
  double tolerance = 1e-12;
};

struct PriorFit {
  Eigen::VectorXd weights;
  std::vector<double> loss_history;   // regularized negative log-likelihood
  std::vector<std::string> warnings;  // bins the data cannot pin down
};

/// Per-bin logistic regression on one-hot bin indicators (no intercept),
/// maximizing sum log s(w.Q) over positives + sum log(1 - s(w.Q)) over
/// negatives - lambda |w|^2 by damped Newton steps.
PriorFit fit_prior_histogram(std::span<const double> positives, std::span<const double> negatives,
                             const std::vector<double>& edges, const PriorFitConfig& config = {});

/// Scalar grid swept by the coordinate search.
std::vector<double> default_scalar_grid();

struct ScalarSearchResult {
  Eigen::Vector4d k;
  double score = 0.0;          // metric at k
  double initial_score = 0.0;  // metric at the starting point
  int rounds = 0;
  int evaluations = 0;
};

/// Coordinate ascent over the scalars flagged in `active`, starting from
/// all-ones on active scalars (inactive ones keep their value in `base`).
/// A value replaces the current one only when it strictly improves
/// `metric`. Stops after a round without change or after `max_rounds`.
ScalarSearchResult search_scalars(const CrfModel& base, const std::function<double(const CrfModel&)>& metric,
                                  std::span<const double> grid, const std::array<bool, 4>& active,
                                  int max_rounds = 5);

// --- persistence -------------------------------------------------------------

void write_model(const std::filesystem::path& path, const CrfModel& model);
CrfModel read_model(const std::filesystem::path& path);

}  // namespace treecat
