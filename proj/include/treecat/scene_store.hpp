#pragma once

// Data model and file formats for inventories, panorama indices, proposals
// and detection outputs.
//
//   inventory      CSV: id,lat_deg,lng_deg,species,epoch,type
//   panoramas      JSON Lines, one CameraPose per line (degrees)
//   proposals      JSON Lines: view_id, x, y, w, h, score
//   detections     GeoJSON FeatureCollection of Point features
//   scene.json     manifest tying the files of one scene together
//
// Files hold degrees; everything in memory is radians.

#include "treecat/geo_projection.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace treecat {

struct GroundTruthTree {
  std::string id;
  GeoPoint geo;
  std::optional<std::string> species;
  std::optional<std::string> epoch;

  friend bool operator==(const GroundTruthTree&, const GroundTruthTree&) = default;
};

struct Proposal {
  std::string view_id;
  PixelBox box;
  double score = 0.0;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

/// Global-frame Mercator window covered by the aerial imagery.
struct AerialFrame {
  std::string id = "aerial";
  int zoom = 20;
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(const PixelPoint& p) const {
    return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
  }
};

/// All views of a scene: the aerial frame plus the panoramas.
class ViewIndex {
 public:
  ViewIndex() = default;
  ViewIndex(AerialFrame aerial, std::vector<CameraPose> panoramas);

  const AerialFrame& aerial() const { return aerial_; }
  const std::vector<CameraPose>& panoramas() const { return panoramas_; }

  bool is_aerial(std::string_view view_id) const { return view_id == aerial_.id; }
  /// nullptr when `view_id` is not a panorama of this index.
  const CameraPose* find_panorama(std::string_view view_id) const;
  bool contains(std::string_view view_id) const;

 private:
  AerialFrame aerial_;
  std::vector<CameraPose> panoramas_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// One accepted tree. Potential contributions are already weighted by the
/// model scalars, so `score` is their sum.
struct DetectionRecord {
  std::string id;
  GeoPoint geo;
  double score = 0.0;
  double aerial = 0.0;
  double street = 0.0;
  double spatial = 0.0;
  double map = 0.0;
  std::optional<std::string> species;

  double contribution_sum() const { return aerial + street + spatial + map; }
  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

/// Lowercases and collapses internal whitespace runs to single spaces.
std::string normalize_species(std::string_view label);

std::vector<GroundTruthTree> load_inventory(const std::filesystem::path& path);
void write_inventory(const std::filesystem::path& path, std::span<const GroundTruthTree> trees);

std::vector<CameraPose> load_panorama_index(const std::filesystem::path& path);
void write_panorama_index(const std::filesystem::path& path, std::span<const CameraPose> poses);

std::vector<Proposal> load_proposals(const std::filesystem::path& path);
void write_proposals(const std::filesystem::path& path, std::span<const Proposal> proposals);

/// Throws UnknownView for the first proposal whose view is not in `index`.
void validate_proposals(const ViewIndex& index, std::span<const Proposal> proposals);

/// Panorama with the smallest ground distance to `t`; ties go to the
/// smallest id.
const CameraPose& nearest_panorama(const GeoPoint& t, const ViewIndex& index);

void write_detections(const std::filesystem::path& path, std::span<const DetectionRecord> detections);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

/// Files and frames making up one scene directory.
struct SceneManifest {
  GeoPoint anchor;
  AerialFrame aerial;
  std::string inventory = "inventory.csv";
  std::string panoramas = "panoramas.jsonl";
  std::string proposals = "proposals.jsonl";
  std::string map_raster = "map.pgm";
  std::string features;  // optional species feature header
};

SceneManifest load_scene_manifest(const std::filesystem::path& path);
void write_scene_manifest(const std::filesystem::path& path, const SceneManifest& manifest);

}  // namespace treecat
