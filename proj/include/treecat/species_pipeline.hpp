#pragma once

// Species classification on per-view feature vectors: the aerial view and
// street views at three zoom levels are concatenated and fed to a
// one-vs-rest linear SVM.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace treecat {

/// Concatenation order.
inline const std::array<std::string, 4> kSpeciesViews{"aerial", "street_40", "street_80", "street_110"};

struct FeatureVector {
  std::string tree_id;
  std::map<std::string, Eigen::VectorXd> views;
};

/// Views in kSpeciesViews order. Throws MissingView.
Eigen::VectorXd concat_features(const FeatureVector& fv);

/// Labeled (or unlabeled) feature matrix as stored on disk.
struct FeatureDataset {
  std::array<int, 4> view_dims{};
  std::vector<std::string> classes;  // vocabulary; may be empty
  std::vector<std::string> ids;
  std::vector<std::string> labels;   // empty, or one per row
  Eigen::MatrixXd features;          // rows are samples

  int dim() const { return view_dims[0] + view_dims[1] + view_dims[2] + view_dims[3]; }
  FeatureVector row(Eigen::Index i) const;
};

/// JSON header at `header_path` plus a float32 little-endian payload next to
/// it (named in the header).
void write_feature_dataset(const std::filesystem::path& header_path, const FeatureDataset& data);
FeatureDataset read_feature_dataset(const std::filesystem::path& header_path);

struct SpeciesTrainConfig {
  int epochs = 50;
  double learning_rate = 0.01;
  double lambda = 1e-4;
  std::uint64_t seed = 0;
};

struct SpeciesModel {
  std::vector<std::string> classes;
  Eigen::MatrixXd weights;  // classes x dim
  Eigen::VectorXd bias;
  SpeciesTrainConfig config;
  std::vector<double> objective_history;  // mean over classes, per epoch
};

/// One-vs-rest hinge loss with L2 penalty on the weights, trained by
/// stochastic subgradient steps with rate eta / (1 + eta lambda t). Each
/// class keeps the averaged iterate with the lowest objective seen at an
/// epoch boundary.
SpeciesModel train_linear(const Eigen::MatrixXd& features, std::span<const std::string> labels,
                          const SpeciesTrainConfig& config);

struct SpeciesPrediction {
  std::string label;
  Eigen::VectorXd scores;  // one per class, in model order
};

/// Highest linear score; ties go to the earlier class.
SpeciesPrediction predict_species(const SpeciesModel& model, const Eigen::VectorXd& x);

/// JSON header plus raw float64 little-endian weights (row-major) and biases.
void write_species_model(const std::filesystem::path& path, const SpeciesModel& model);
SpeciesModel read_species_model(const std::filesystem::path& path);

}  // namespace treecat
