#pragma once

// Aligns detections of two acquisition epochs into per-location pairs and
// builds stratified splits for change classification.

#include "treecat/geo_projection.hpp"
#include "treecat/scene_store.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace treecat {

enum class ChangeLabel { Same, New, Removed };

const char* change_label_name(ChangeLabel label);
/// Accepts same/unchanged, new and removed, case-insensitively.
ChangeLabel parse_change_label(std::string_view text);

struct ChangePair {
  std::string id;
  GeoPoint geo;
  bool present_in_a = false;
  bool present_in_b = false;
  std::string epoch_a;
  std::string epoch_b;
  std::string detection_a;  // source detection ids, empty when absent
  std::string detection_b;
  std::optional<ChangeLabel> label;
};

struct PairingResult {
  std::vector<ChangePair> pairs;
  std::size_t matched = 0;
  std::size_t only_a = 0;
  std::size_t only_b = 0;
  std::size_t suppressed = 0;  // dropped as double entries
};

/// Cross-epoch pairs within `radius` are accepted greedily by descending
/// combined score (then shorter distance); a matched pair sits at the
/// midpoint. Leftovers become single-epoch pairs. Finally pairs closer than
/// `radius` to a higher-priority pair (matched first, then by score) are
/// suppressed. Swapping the epochs only swaps the presence flags.
PairingResult pair_epochs(std::span<const DetectionRecord> a, std::span<const DetectionRecord> b, double radius = 4.0,
                          const std::string& epoch_a = "a", const std::string& epoch_b = "b");

struct SplitConfig {
  double train = 0.64;
  double validation = 0.16;
  double test = 0.20;
  int folds = 5;
  std::uint64_t seed = 0;
  bool balance = false;  // subsample every class to the smallest class
};

struct ChangeSplits {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::vector<std::vector<std::string>> folds;  // partition of train + validation
  std::vector<std::string> warnings;
};

/// Split sizes follow the ratios by largest remainder over the whole set;
/// each class gets the floor or ceiling of its own share. Labels come from
/// `labels` (by pair id), falling back to the pair's own label.
ChangeSplits assemble_change_dataset(std::span<const ChangePair> pairs,
                                     const std::map<std::string, ChangeLabel>& labels, const SplitConfig& config);

void write_change_pairs(const std::filesystem::path& path, std::span<const ChangePair> pairs);
std::vector<ChangePair> read_change_pairs(const std::filesystem::path& path);

/// JSON Lines of {"pair_id", "label"}; used for ground truth and predictions.
void write_change_labels(const std::filesystem::path& path, const std::map<std::string, ChangeLabel>& labels);
std::map<std::string, ChangeLabel> read_change_labels(const std::filesystem::path& path);

void write_split_manifest(const std::filesystem::path& path, const ChangeSplits& splits, const SplitConfig& config);

}  // namespace treecat
