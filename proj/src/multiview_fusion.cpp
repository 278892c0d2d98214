#include "treecat/multiview_fusion.hpp"

#include "io_util.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <thread>
#include <tuple>

namespace treecat {

using nlohmann::json;

std::vector<Proposal> collect_proposals(std::span<const Proposal> proposals, double tau1) {
  if (std::isnan(tau1)) throw Error(Errc::InvalidArgument, "tau1 is NaN");
  std::vector<Proposal> kept;
  for (const auto& p : proposals) {
    if (p.score >= tau1) kept.push_back(p);
  }
  return kept;
}

PoolResult pool_to_geo(const ViewIndex& index, std::span<const Proposal> proposals) {
  PoolResult out;
  out.points.reserve(proposals.size());
  for (const auto& p : proposals) {
    if (index.is_aerial(p.view_id)) {
      out.points.push_back({degree_representable(mercator_pixel_to_geo(p.box.center(), index.aerial().zoom)), p.view_id});
      continue;
    }
    const CameraPose* cam = index.find_panorama(p.view_id);
    if (cam == nullptr) throw Error(Errc::UnknownView, "proposal for unknown view '" + p.view_id + "'");
    try {
      out.points.push_back({degree_representable(streetview_pixel_to_geo(p.box.bottom_center(), *cam)), p.view_id});
    } catch (const Error& e) {
      if (e.code() != Errc::NoGroundIntersection) throw;
      out.warnings.push_back("dropped proposal in view '" + p.view_id + "': " + e.what());
    }
  }
  return out;
}

namespace {

std::optional<CandidateTree> rescore_one(const PooledPoint& p, const ViewIndex& index,
                                         const ScoreProvider& provider, const DistanceField& roads,
                                         std::string& warning) {
  const AerialFrame& frame = index.aerial();
  const PixelPoint a = mercator_geo_to_pixel(p.geo, frame.zoom);
  if (!frame.contains(a)) {
    warning = "excluded point from '" + p.source + "': outside the aerial frame";
    return std::nullopt;
  }
  CandidateTree c;
  c.geo = p.geo;
  c.source = p.source;
  c.aerial_score = provider.query_score(frame.id, make_aerial_box(p.geo, frame.zoom));
  try {
    c.road_distance_m = road_distance_at(roads, p.geo);
  } catch (const Error& e) {
    if (e.code() != Errc::OutsideExtent) throw;
    warning = "excluded point from '" + p.source + "': " + e.what();
    return std::nullopt;
  }
  c.street_score = provider.floor();
  if (!index.panoramas().empty()) {
    const CameraPose& cam = nearest_panorama(p.geo, index);
    c.panorama_id = cam.id;
    try {
      c.street_score = provider.query_score(cam.id, make_street_box(p.geo, cam));
    } catch (const Error& e) {
      if (e.code() != Errc::ZeroRange) throw;
    }
  }
  return c;
}

}  // namespace

RescoreResult rescore_candidates(std::span<const PooledPoint> points, const ViewIndex& index,
                                 const ScoreProvider& provider, const DistanceField& roads, int jobs) {
  std::vector<const PooledPoint*> order;
  order.reserve(points.size());
  for (const auto& p : points) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const PooledPoint* a, const PooledPoint* b) {
    return std::tie(a->geo.lat, a->geo.lng, a->source) < std::tie(b->geo.lat, b->geo.lng, b->source);
  });

  const std::size_t n = order.size();
  std::vector<std::optional<CandidateTree>> slots(n);
  std::vector<std::string> warnings(n);
  const std::size_t workers = std::clamp<std::size_t>(jobs < 1 ? 1 : std::size_t(jobs), 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(workers);

  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < n; i += workers) {
        slots[i] = rescore_one(*order[i], index, provider, roads, warnings[i]);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RescoreResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      slots[i]->id = std::int64_t(out.candidates.size());
      out.candidates.push_back(std::move(*slots[i]));
    } else {
      out.warnings.push_back(std::move(warnings[i]));
    }
  }
  return out;
}

void write_candidates(const std::filesystem::path& path, std::span<const CandidateTree> candidates) {
  auto out = detail::open_output(path);
  for (const auto& c : candidates) {
    json j = {{"id", c.id},
              {"lat_deg", exact_degrees(c.geo.lat)},
              {"lng_deg", exact_degrees(c.geo.lng)},
              {"aerial", c.aerial_score},
              {"street", c.street_score},
              {"panorama", c.panorama_id},
              {"road_distance_m", std::isfinite(c.road_distance_m) ? json(c.road_distance_m) : json(nullptr)},
              {"source", c.source}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

std::vector<CandidateTree> read_candidates(const std::filesystem::path& path) {
  std::vector<CandidateTree> out;
  for (const auto& [line, j] : detail::read_json_lines(path)) {
    const std::string where = detail::location(path, line);
    CandidateTree c;
    c.id = detail::json_field<std::int64_t>(j, "id", where);
    c.geo = GeoPoint::from_degrees(detail::json_field<double>(j, "lat_deg", where),
                                   detail::json_field<double>(j, "lng_deg", where));
    c.aerial_score = detail::json_field<double>(j, "aerial", where);
    c.street_score = detail::json_field<double>(j, "street", where);
    c.panorama_id = detail::json_field<std::string>(j, "panorama", where);
    // null marks a scene without roads
    c.road_distance_m = j.contains("road_distance_m") && j["road_distance_m"].is_null()
                            ? std::numeric_limits<double>::infinity()
                            : detail::json_field<double>(j, "road_distance_m", where);
    c.source = detail::json_field<std::string>(j, "source", where);
    if (!std::isfinite(c.aerial_score) || !std::isfinite(c.street_score) || !(c.road_distance_m >= 0.0)) {
      throw Error(Errc::ParseError, where + ": scores must be finite and road distance non-negative");
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace treecat
