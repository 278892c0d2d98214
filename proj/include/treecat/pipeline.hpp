#pragma once

// Stage-level glue shared by the command-line tool and the benchmarks:
// scene directories, map preprocessing, fusion, training and inference.

#include "treecat/crf_model.hpp"
#include "treecat/evaluation.hpp"
#include "treecat/map_prior.hpp"
#include "treecat/multiview_fusion.hpp"
#include "treecat/scene_store.hpp"
#include "treecat/synth_bench.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace treecat {

inline constexpr const char* kSceneManifestName = "scene.json";
inline constexpr const char* kDistanceFieldName = "roads.dist";
inline constexpr const char* kCandidatesName = "candidates.jsonl";
inline constexpr const char* kDetectionsName = "detections.geojson";

struct SceneData {
  std::filesystem::path dir;
  SceneManifest manifest;
  std::vector<GroundTruthTree> truth;
  ViewIndex views;
  std::vector<Proposal> proposals;
};

/// Reads `<dir>/scene.json` and the files it names. Proposals are checked
/// against the view index.
SceneData load_scene(const std::filesystem::path& dir);

/// Writes a synthetic scene in the standard file formats.
void write_synth_scene(const std::filesystem::path& dir, const SynthScene& scene, const SynthObservations& obs);

/// Road mask cleanup followed by the exact distance transform.
DistanceField preprocess_map(const MapRaster& raster);

struct FuseConfig {
  double tau1 = kNegInf;
  ScoreProviderConfig provider;
  int jobs = 1;
};

struct FuseOutput {
  std::vector<CandidateTree> candidates;
  std::size_t proposals_kept = 0;
  std::size_t pooled = 0;
  std::vector<std::string> warnings;
};

FuseOutput fuse_scene(const SceneData& scene, const DistanceField& roads, const FuseConfig& config);

/// Negatives for the spacing prior.
///   candidates: fused candidates that are not the closest candidate of any
///               tree, at their distance to the nearest tree
///   uniform:    random locations at least `exclusion_m` from every tree
enum class SpatialNegatives { Candidates, Uniform };

struct TrainConfig {
  std::uint64_t seed = 0;
  std::vector<double> edges = default_bin_edges();
  PriorFitConfig prior;
  double negative_ratio = 3.0;
  double exclusion_m = 4.0;
  SpatialNegatives spatial_negatives = SpatialNegatives::Candidates;
  std::vector<double> grid = default_scalar_grid();
  int max_rounds = 5;
  SpatialMode mode = SpatialMode::Learned;
  double tau_nms = 4.0;
  double match_radius = kMatchRadiusM;
  bool select_tau2 = true;
  ScoreProviderConfig provider;
};

/// Candidates and ground truth of one scene, ready for inference.
struct LabeledScene {
  std::vector<CandidateTree> candidates;
  std::vector<GroundTruthTree> truth;
  DistanceField roads;
  AerialFrame aerial;
  GeoPoint anchor;
};

struct TrainReport {
  CrfModel model;
  PriorFit spatial_fit;
  PriorFit map_fit;
  std::size_t spatial_positives = 0, spatial_negatives = 0;
  std::size_t map_positives = 0, map_negatives = 0;
  ScalarSearchResult search;
  double validation_map = 0.0;
};

/// Fits both priors on `train`, searches the scalars on `validation`, and
/// picks tau2 there by F1 over static scores.
TrainReport train_model(const LabeledScene& train, const LabeledScene& validation, const TrainConfig& config);

CrfInstance make_scene_instance(const LabeledScene& scene, const CrfModel& model);

/// Greedy inference with the model's own tau2.
std::vector<DetectionRecord> infer_detections(const std::vector<CandidateTree>& candidates, const CrfModel& model,
                                              const GeoPoint& anchor);

}  // namespace treecat
