#pragma once

// Multi-view proposal workflow: per-view proposals are projected to the
// ground, pooled, and every pooled location is re-scored in the aerial view
// and in its nearest panorama.

#include "treecat/geo_projection.hpp"
#include "treecat/map_prior.hpp"
#include "treecat/scene_store.hpp"
#include "treecat/score_provider.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace treecat {

struct CandidateTree {
  std::int64_t id = 0;
  GeoPoint geo;
  double aerial_score = 0.0;  // psi
  double street_score = 0.0;  // phi, from the nearest panorama
  std::string panorama_id;    // empty when the scene has no panoramas
  double road_distance_m = 0.0;
  std::string source;         // view of the originating proposal

  friend bool operator==(const CandidateTree&, const CandidateTree&) = default;
};

struct PooledPoint {
  GeoPoint geo;
  std::string source;
};

struct PoolResult {
  std::vector<PooledPoint> points;
  std::vector<std::string> warnings;  // one per dropped proposal
};

struct RescoreResult {
  std::vector<CandidateTree> candidates;
  std::vector<std::string> warnings;  // one per excluded point
};

/// Proposals with score >= tau1, in input order.
std::vector<Proposal> collect_proposals(std::span<const Proposal> proposals, double tau1);

/// Aerial proposals map through their box center, street proposals through
/// the ground contact at the bottom of the box. Proposals above the horizon
/// are dropped with a warning. Multiplicity is preserved.
PoolResult pool_to_geo(const ViewIndex& index, std::span<const Proposal> proposals);

/// Scores every point in the aerial view and in its nearest panorama, and
/// samples the road distance. Points outside the aerial frame or the
/// distance field are excluded with a warning. Output is sorted by
/// (lat, lng, source) and numbered from 0 in that order.
RescoreResult rescore_candidates(std::span<const PooledPoint> points, const ViewIndex& index,
                                 const ScoreProvider& provider, const DistanceField& roads, int jobs = 1);

void write_candidates(const std::filesystem::path& path, std::span<const CandidateTree> candidates);
std::vector<CandidateTree> read_candidates(const std::filesystem::path& path);

}  // namespace treecat
