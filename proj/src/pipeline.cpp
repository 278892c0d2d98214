#include "treecat/pipeline.hpp"

#include "cell_grid.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace treecat {

namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Nearest-point queries against a fixed planar point set.
class NearestPoints {
 public:
  NearestPoints(std::vector<Eigen::Vector2d> pts, double cell) : pts_(std::move(pts)), grid_(cell), cell_(cell) {
    for (std::size_t i = 0; i < pts_.size(); ++i) grid_.insert(i, pts_[i]);
  }

  /// Index and distance of the nearest point other than `skip`.
  std::pair<std::size_t, double> nearest(const Eigen::Vector2d& p, std::size_t skip = SIZE_MAX) const {
    std::size_t best = SIZE_MAX;
    double best_d = kInf;
    // Widen the search ring until a hit is guaranteed to be the nearest,
    // then fall back to a full scan.
    for (int reach = 1; reach <= 8; reach *= 2) {
      grid_.for_each_near(p, reach, [&](std::size_t i) {
        if (i == skip) return;
        const double d = (pts_[i] - p).norm();
        if (d < best_d || (d == best_d && i < best)) {
          best = i;
          best_d = d;
        }
      });
      if (best_d <= double(reach) * cell_) return {best, best_d};
    }
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      if (i == skip) continue;
      const double d = (pts_[i] - p).norm();
      if (d < best_d || (d == best_d && i < best)) {
        best = i;
        best_d = d;
      }
    }
    return {best, best_d};
  }

 private:
  std::vector<Eigen::Vector2d> pts_;
  detail::CellGrid grid_;
  double cell_;
};

struct LocalBox {
  Eigen::Vector2d lo, hi;
};

LocalBox aerial_box(const AerialFrame& aerial, const LocalFrame& frame) {
  const Eigen::Vector2d nw = frame.to_local(mercator_pixel_to_geo({aerial.x_min, aerial.y_min}, aerial.zoom));
  const Eigen::Vector2d se = frame.to_local(mercator_pixel_to_geo({aerial.x_max, aerial.y_max}, aerial.zoom));
  return {nw.cwiseMin(se), nw.cwiseMax(se)};
}

// Uniform locations in the aerial frame at least `exclusion` from every
// tree, with a finite road distance sample.
std::vector<Eigen::Vector2d> uniform_negatives(const LabeledScene& scene, const LocalFrame& frame,
                                               const NearestPoints& trees, std::size_t count, double exclusion,
                                               std::mt19937_64& rng) {
  const LocalBox box = aerial_box(scene.aerial, frame);
  std::uniform_real_distribution<double> ux(box.lo.x(), box.hi.x()), uy(box.lo.y(), box.hi.y());
  std::vector<Eigen::Vector2d> out;
  for (std::size_t attempts = 0; out.size() < count && attempts < 1000 * (count + 1); ++attempts) {
    const Eigen::Vector2d p(ux(rng), uy(rng));
    if (trees.nearest(p).second < exclusion) continue;
    try {
      (void)road_distance_at(scene.roads, frame.to_geo(p));
    } catch (const Error& e) {
      if (e.code() != Errc::OutsideExtent) throw;
      continue;
    }
    out.push_back(p);
  }
  return out;
}

template <typename T>
void subsample(std::vector<T>& v, std::size_t count, std::mt19937_64& rng) {
  if (v.size() <= count) return;
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(count);
}

}  // namespace

SceneData load_scene(const fs::path& dir) {
  SceneData s;
  s.dir = dir;
  s.manifest = load_scene_manifest(dir / kSceneManifestName);
  const fs::path inventory = dir / s.manifest.inventory;
  if (fs::exists(inventory)) s.truth = load_inventory(inventory);
  s.views = ViewIndex(s.manifest.aerial, load_panorama_index(dir / s.manifest.panoramas));
  s.proposals = load_proposals(dir / s.manifest.proposals);
  validate_proposals(s.views, s.proposals);
  return s;
}

void write_synth_scene(const fs::path& dir, const SynthScene& scene, const SynthObservations& obs) {
  SceneManifest m;
  m.anchor = scene.anchor;
  m.aerial = scene.views.aerial();
  write_inventory(dir / m.inventory, scene.trees);
  write_panorama_index(dir / m.panoramas, scene.views.panoramas());
  write_proposals(dir / m.proposals, obs.proposals);
  write_map_raster(dir / m.map_raster, scene.map);
  write_scene_manifest(dir / kSceneManifestName, m);
}

DistanceField preprocess_map(const MapRaster& raster) {
  const Mask roads = binarize_roads(raster);
  return distance_transform(roads, raster.geometry, raster_pixel_size(raster.geometry, raster.values.rows()));
}

FuseOutput fuse_scene(const SceneData& scene, const DistanceField& roads, const FuseConfig& config) {
  if (config.provider.kind != "file_backed") {
    throw Error(Errc::InvalidArgument, "scene fusion needs a file_backed provider, got '" + config.provider.kind + "'");
  }
  FuseOutput out;
  const auto kept = collect_proposals(scene.proposals, config.tau1);
  out.proposals_kept = kept.size();
  PoolResult pooled = pool_to_geo(scene.views, kept);
  out.pooled = pooled.points.size();
  out.warnings = std::move(pooled.warnings);
  // The provider sees every proposal: re-scoring asks the detector about a
  // location regardless of the proposal threshold.
  const FileBackedScoreProvider provider(scene.views, scene.proposals, config.provider);
  RescoreResult rescored = rescore_candidates(pooled.points, scene.views, provider, roads, config.jobs);
  out.candidates = std::move(rescored.candidates);
  out.warnings.insert(out.warnings.end(), rescored.warnings.begin(), rescored.warnings.end());
  return out;
}

CrfInstance make_scene_instance(const LabeledScene& scene, const CrfModel& model) {
  return make_crf_instance(scene.candidates, model.map, LocalFrame(scene.anchor));
}

TrainReport train_model(const LabeledScene& train, const LabeledScene& validation, const TrainConfig& config) {
  if (train.truth.empty()) throw Error(Errc::EmptyGroundTruth, "training scene has no ground-truth trees");
  if (validation.truth.empty()) throw Error(Errc::EmptyGroundTruth, "validation scene has no ground-truth trees");
  if (!(config.negative_ratio > 0.0) || !(config.exclusion_m >= 0.0)) {
    throw Error(Errc::InvalidArgument, "negative_ratio must be > 0 and exclusion_m >= 0");
  }
  std::mt19937_64 rng(config.seed);
  const LocalFrame frame(train.anchor);
  std::vector<Eigen::Vector2d> tree_xy;
  for (const auto& t : train.truth) tree_xy.push_back(frame.to_local(t.geo));
  const NearestPoints trees(tree_xy, 16.0);
  const std::size_t wanted = std::size_t(std::ceil(config.negative_ratio * double(tree_xy.size())));

  // Spacing prior: each true tree against its closest other true tree.
  std::vector<double> spatial_pos, spatial_neg;
  for (std::size_t i = 0; i < tree_xy.size(); ++i) spatial_pos.push_back(trees.nearest(tree_xy[i], i).second);
  if (config.spatial_negatives == SpatialNegatives::Candidates) {
    std::vector<Eigen::Vector2d> cand_xy;
    for (const auto& c : train.candidates) cand_xy.push_back(frame.to_local(c.geo));
    std::vector<char> representative(cand_xy.size(), 0);
    if (!cand_xy.empty()) {
      const NearestPoints cands(cand_xy, 16.0);
      for (const auto& t : tree_xy) {
        const auto [i, d] = cands.nearest(t);
        if (d <= config.match_radius) representative[i] = 1;
      }
    }
    for (std::size_t i = 0; i < cand_xy.size(); ++i) {
      if (!representative[i]) spatial_neg.push_back(trees.nearest(cand_xy[i]).second);
    }
  } else {
    for (const auto& p : uniform_negatives(train, frame, trees, wanted, config.exclusion_m, rng)) {
      spatial_neg.push_back(trees.nearest(p).second);
    }
  }
  subsample(spatial_neg, wanted, rng);

  // Road prior: true trees against uniform background locations.
  std::vector<double> map_pos, map_neg;
  for (const auto& t : train.truth) map_pos.push_back(road_distance_at(train.roads, t.geo));
  for (const auto& p : uniform_negatives(train, frame, trees, wanted, config.exclusion_m, rng)) {
    map_neg.push_back(road_distance_at(train.roads, frame.to_geo(p)));
  }

  TrainReport report;
  report.spatial_fit = fit_prior_histogram(spatial_pos, spatial_neg, config.edges, config.prior);
  report.map_fit = fit_prior_histogram(map_pos, map_neg, config.edges, config.prior);
  report.spatial_positives = spatial_pos.size();
  report.spatial_negatives = spatial_neg.size();
  report.map_positives = map_pos.size();
  report.map_negatives = map_neg.size();

  CrfModel& model = report.model;
  model.spatial.edges = config.edges;
  model.spatial.weights = report.spatial_fit.weights;
  model.map.edges = config.edges;
  model.map.weights = report.map_fit.weights;
  model.mode = config.mode;
  model.tau_nms = config.tau_nms;
  model.provider = config.provider;
  model.tau2 = kNegInf;
  model.validate();

  const CrfInstance val = make_scene_instance(validation, model);
  auto metric = [&](const CrfModel& m) { return detection_map(val, m, validation.truth, config.match_radius); };
  const std::array<bool, 4> active{true, true, config.mode == SpatialMode::Learned, true};
  report.search = search_scalars(model, metric, config.grid, active, config.max_rounds);
  model.k = report.search.k;
  report.validation_map = report.search.score;

  if (config.select_tau2) {
    const GreedyResult g = greedy_infer(val, model);
    const auto detections = to_detections(val, g, model);
    std::vector<double> statics;
    for (std::size_t i : g.members) statics.push_back(static_score(val, i, model));
    model.tau2 = best_f1_threshold(statics, detections, validation.truth, config.match_radius);
  }
  return report;
}

std::vector<DetectionRecord> infer_detections(const std::vector<CandidateTree>& candidates, const CrfModel& model,
                                              const GeoPoint& anchor) {
  const CrfInstance inst = make_crf_instance(candidates, model.map, LocalFrame(anchor));
  return to_detections(inst, greedy_infer(inst, model), model);
}

}  // namespace treecat
