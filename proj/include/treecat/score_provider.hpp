#pragma once

// Detector scores as a service: "what does the detector say about this box
// in this view?". Stands in for re-running a CNN at back-projected
// locations.

#include "treecat/geo_projection.hpp"
#include "treecat/scene_store.hpp"

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace treecat {

struct ScoreProviderConfig {
  std::string kind = "file_backed";  // file_backed | synthetic
  double sigma_px = 25.0;
  double floor = -5.0;
};

class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;

  /// Deterministic, finite, and never below the configured floor.
  /// Throws UnknownView for views the provider was not built with.
  virtual double query_score(std::string_view view_id, const PixelBox& box) const = 0;

  /// Score reported where the detector sees nothing.
  virtual double floor() const = 0;
};

/// Gaussian-kernel surrogate built from a proposal file. With floor s0 and
/// bandwidth sigma:
///
///   score = s0 + max_j max(0, s_j - s0) * exp(-d_j^2 / (2 sigma^2))
///
/// where d_j is the center distance to proposal j of the queried view
/// (horizontally wrapped for panoramas). Box size is ignored.
class FileBackedScoreProvider final : public ScoreProvider {
 public:
  FileBackedScoreProvider(const ViewIndex& index, std::span<const Proposal> proposals,
                          ScoreProviderConfig config = {});

  double query_score(std::string_view view_id, const PixelBox& box) const override;
  double floor() const override { return config_.floor; }
  const ScoreProviderConfig& config() const { return config_; }

 private:
  struct Peak {
    double x, y, score;
  };
  struct View {
    double wrap_width = 0.0;
    std::vector<Peak> peaks;
  };

  ScoreProviderConfig config_;
  std::unordered_map<std::string, View> views_;
};

/// Object planted at a known ground position with per-view-kind scores.
struct PlantedObject {
  GeoPoint geo;
  double aerial_score = 0.0;
  double street_score = 0.0;
};

/// Synthetic provider: projects planted objects into the queried view and
/// applies the same kernel as the file-backed provider. Street views are
/// compared at the ground-contact pixel.
class PlantedScoreProvider final : public ScoreProvider {
 public:
  PlantedScoreProvider(const ViewIndex& index, std::vector<PlantedObject> objects, ScoreProviderConfig config = {});

  double query_score(std::string_view view_id, const PixelBox& box) const override;
  double floor() const override { return config_.floor; }

 private:
  const ViewIndex* index_;
  std::vector<PlantedObject> objects_;
  ScoreProviderConfig config_;
};

}  // namespace treecat
