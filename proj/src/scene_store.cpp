#include "treecat/scene_store.hpp"

#include "io_util.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_set>

namespace treecat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kMaxLatDeg = 85.0511287798066;

GeoPoint checked_geo(double lat_deg, double lng_deg, const std::string& where) {
  if (!std::isfinite(lat_deg) || !std::isfinite(lng_deg)) {
    throw Error(Errc::InvalidCoordinate, where + ": non-finite coordinate");
  }
  const GeoPoint g{deg2rad(lat_deg), deg2rad(lng_deg)};
  if (std::abs(lat_deg) > kMaxLatDeg || std::abs(g.lat) > kMaxMercatorLat) {
    throw Error(Errc::InvalidCoordinate, where + ": latitude " + detail::format_double(lat_deg) +
                                             " outside the Web Mercator band");
  }
  if (lng_deg < -180.0 || lng_deg > 180.0) {
    throw Error(Errc::InvalidCoordinate, where + ": longitude " + detail::format_double(lng_deg) +
                                             " outside [-180, 180]");
  }
  return {g.lat, wrap_longitude(g.lng)};
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

ViewIndex::ViewIndex(AerialFrame aerial, std::vector<CameraPose> panoramas)
    : aerial_(std::move(aerial)), panoramas_(std::move(panoramas)) {
  for (std::size_t i = 0; i < panoramas_.size(); ++i) {
    const auto& id = panoramas_[i].id;
    if (id == aerial_.id || !by_id_.emplace(id, i).second) {
      throw Error(Errc::DuplicateView, "view id '" + id + "' appears more than once");
    }
  }
}

const CameraPose* ViewIndex::find_panorama(std::string_view view_id) const {
  auto it = by_id_.find(std::string(view_id));
  return it == by_id_.end() ? nullptr : &panoramas_[it->second];
}

bool ViewIndex::contains(std::string_view view_id) const {
  return is_aerial(view_id) || find_panorama(view_id) != nullptr;
}

std::string normalize_species(std::string_view label) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : label) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

// --- inventory --------------------------------------------------------------

std::vector<GroundTruthTree> load_inventory(const fs::path& path) {
  auto in = detail::open_input(path);
  std::vector<GroundTruthTree> trees;
  std::string line;
  std::size_t n = 0;
  std::map<std::string, std::size_t> column;
  while (std::getline(in, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const std::string where = detail::location(path, n);
    auto fields = detail::split_csv(line, where);
    if (column.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) column[lower(detail::trim(fields[i]))] = i;
      for (const char* key : {"id", "lat_deg", "lng_deg"}) {
        if (!column.contains(key)) throw Error(Errc::ParseError, where + ": header lacks column '" + key + "'");
      }
      continue;
    }
    auto get = [&](const char* key) -> std::string {
      auto it = column.find(key);
      if (it == column.end()) return {};
      if (it->second >= fields.size()) {
        throw Error(Errc::ParseError, where + ": expected at least " + std::to_string(it->second + 1) + " fields");
      }
      return detail::trim(fields[it->second]);
    };
    const std::string type = lower(get("type"));
    if (!type.empty() && type != "tree") continue;

    GroundTruthTree t;
    t.id = get("id");
    if (t.id.empty()) throw Error(Errc::ParseError, where + ": empty id");
    const double lat = detail::parse_double(get("lat_deg"), where + " lat_deg");
    const double lng = detail::parse_double(get("lng_deg"), where + " lng_deg");
    t.geo = checked_geo(lat, lng, where);
    if (auto s = normalize_species(get("species")); !s.empty()) t.species = s;
    if (auto e = get("epoch"); !e.empty()) t.epoch = e;
    trees.push_back(std::move(t));
  }
  return trees;
}

void write_inventory(const fs::path& path, std::span<const GroundTruthTree> trees) {
  auto out = detail::open_output(path);
  out << "id,lat_deg,lng_deg,species,epoch,type\n";
  for (const auto& t : trees) {
    out << detail::quote_csv(t.id) << ',' << detail::format_double(exact_degrees(t.geo.lat)) << ','
        << detail::format_double(exact_degrees(t.geo.lng)) << ',' << detail::quote_csv(t.species.value_or(""))
        << ',' << detail::quote_csv(t.epoch.value_or("")) << ",tree\n";
  }
  if (!out) throw Error(Errc::IoError, "failed writing '" + path.string() + "'");
}

// --- panoramas ----------------------------------------------------------------

std::vector<CameraPose> load_panorama_index(const fs::path& path) {
  std::vector<CameraPose> poses;
  std::unordered_set<std::string> seen;
  for (const auto& [n, row] : detail::read_json_lines(path)) {
    const std::string where = detail::location(path, n);
    CameraPose p;
    p.id = detail::json_field<std::string>(row, "id", where);
    p.geo = checked_geo(detail::json_field<double>(row, "lat_deg", where),
                        detail::json_field<double>(row, "lng_deg", where), where);
    const double yaw_deg = detail::json_field<double>(row, "yaw_deg", where);
    if (!(yaw_deg >= 0.0 && yaw_deg < 360.0)) {
      throw Error(Errc::ParseError, where + ": yaw_deg must lie in [0, 360)");
    }
    p.yaw = deg2rad(yaw_deg);
    p.height_m = detail::json_field<double>(row, "height_m", where);
    p.width_px = detail::json_field<int>(row, "width_px", where);
    p.height_px = detail::json_field<int>(row, "height_px", where);
    if (!(p.height_m > 0.0) || p.width_px <= 0 || p.height_px <= 0) {
      throw Error(Errc::ParseError, where + ": camera height and panorama size must be positive");
    }
    if (auto it = row.find("epoch"); it != row.end() && it->is_string()) p.epoch = it->get<std::string>();
    if (!seen.insert(p.id).second) throw Error(Errc::DuplicateView, where + ": duplicate view id '" + p.id + "'");
    poses.push_back(std::move(p));
  }
  return poses;
}

void write_panorama_index(const fs::path& path, std::span<const CameraPose> poses) {
  auto out = detail::open_output(path);
  for (const auto& p : poses) {
    json row = {{"id", p.id},
                {"lat_deg", exact_degrees(p.geo.lat)},
                {"lng_deg", exact_degrees(p.geo.lng)},
                {"yaw_deg", exact_degrees(p.yaw)},
                {"height_m", p.height_m},
                {"width_px", p.width_px},
                {"height_px", p.height_px},
                {"epoch", p.epoch}};
    out << row.dump() << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing '" + path.string() + "'");
}

// --- proposals ----------------------------------------------------------------

std::vector<Proposal> load_proposals(const fs::path& path) {
  std::vector<Proposal> proposals;
  for (const auto& [n, row] : detail::read_json_lines(path)) {
    const std::string where = detail::location(path, n);
    Proposal p;
    p.view_id = detail::json_field<std::string>(row, "view_id", where);
    p.box.x = detail::json_field<double>(row, "x", where);
    p.box.y = detail::json_field<double>(row, "y", where);
    p.box.w = detail::json_field<double>(row, "w", where);
    p.box.h = detail::json_field<double>(row, "h", where);
    p.score = detail::json_field<double>(row, "score", where);
    if (!std::isfinite(p.score)) throw Error(Errc::ParseError, where + ": score must be finite");
    if (!(p.box.w > 0.0) || !(p.box.h > 0.0) || !std::isfinite(p.box.x) || !std::isfinite(p.box.y)) {
      throw Error(Errc::ParseError, where + ": box needs finite center and positive size");
    }
    proposals.push_back(std::move(p));
  }
  return proposals;
}

void write_proposals(const fs::path& path, std::span<const Proposal> proposals) {
  auto out = detail::open_output(path);
  for (const auto& p : proposals) {
    json row = {{"view_id", p.view_id}, {"x", p.box.x}, {"y", p.box.y},
                {"w", p.box.w},         {"h", p.box.h}, {"score", p.score}};
    out << row.dump() << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing '" + path.string() + "'");
}

void validate_proposals(const ViewIndex& index, std::span<const Proposal> proposals) {
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (!index.contains(proposals[i].view_id)) {
      throw Error(Errc::UnknownView,
                  "proposal " + std::to_string(i + 1) + " refers to unknown view '" + proposals[i].view_id + "'");
    }
  }
}

const CameraPose& nearest_panorama(const GeoPoint& t, const ViewIndex& index) {
  const auto& poses = index.panoramas();
  if (poses.empty()) throw Error(Errc::EmptyIndex, "no panoramas to choose from");
  const CameraPose* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& p : poses) {
    const EnuVector e = enu_from_geo(t, p);
    const double d = std::hypot(e.x(), e.y());
    if (d < best_d || (d == best_d && p.id < best->id)) {
      best = &p;
      best_d = d;
    }
  }
  return *best;
}

// --- detections -----------------------------------------------------------------

void write_detections(const fs::path& path, std::span<const DetectionRecord> detections) {
  json features = json::array();
  for (const auto& d : detections) {
    json props = {{"score", d.score}, {"aerial", d.aerial}, {"street", d.street},
                  {"spatial", d.spatial}, {"map", d.map}};
    if (d.species) props["species"] = *d.species;
    features.push_back({{"type", "Feature"},
                        {"id", d.id},
                        {"geometry",
                         {{"type", "Point"},
                          {"coordinates", {exact_degrees(d.geo.lng), exact_degrees(d.geo.lat)}}}},
                        {"properties", props}});
  }
  json doc = {{"type", "FeatureCollection"}, {"features", features}};
  auto out = detail::open_output(path);
  out << doc.dump() << '\n';
  if (!out) throw Error(Errc::IoError, "failed writing '" + path.string() + "'");
}

std::vector<DetectionRecord> read_detections(const fs::path& path) {
  const json doc = detail::read_json_file(path);
  const std::string where = path.string();
  if (detail::json_field<std::string>(doc, "type", where) != "FeatureCollection") {
    throw Error(Errc::ParseError, where + ": not a FeatureCollection");
  }
  std::vector<DetectionRecord> out;
  const json features = detail::json_field<json>(doc, "features", where);
  if (!features.is_array()) throw Error(Errc::ParseError, where + ": features must be an array");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const std::string fw = where + " feature " + std::to_string(i);
    const json geom = detail::json_field<json>(f, "geometry", fw);
    if (detail::json_field<std::string>(geom, "type", fw) != "Point") {
      throw Error(Errc::ParseError, fw + ": geometry is not a Point");
    }
    const auto coords = detail::json_field<std::vector<double>>(geom, "coordinates", fw);
    if (coords.size() < 2) throw Error(Errc::ParseError, fw + ": Point needs two coordinates");
    DetectionRecord d;
    d.id = detail::json_field<std::string>(f, "id", fw);
    d.geo = checked_geo(coords[1], coords[0], fw);
    const json props = detail::json_field<json>(f, "properties", fw);
    d.score = detail::json_field<double>(props, "score", fw);
    d.aerial = detail::json_field<double>(props, "aerial", fw);
    d.street = detail::json_field<double>(props, "street", fw);
    d.spatial = detail::json_field<double>(props, "spatial", fw);
    d.map = detail::json_field<double>(props, "map", fw);
    if (auto it = props.find("species"); it != props.end() && it->is_string()) d.species = it->get<std::string>();
    if (std::abs(d.score - d.contribution_sum()) > 1e-9 * std::max(1.0, std::abs(d.score))) {
      throw Error(Errc::ParseError, fw + ": score does not equal the sum of its potential contributions");
    }
    out.push_back(std::move(d));
  }
  return out;
}

// --- manifest --------------------------------------------------------------------

SceneManifest load_scene_manifest(const fs::path& path) {
  const json doc = detail::read_json_file(path);
  const std::string where = path.string();
  SceneManifest m;
  const json anchor = detail::json_field<json>(doc, "anchor", where);
  m.anchor = checked_geo(detail::json_field<double>(anchor, "lat_deg", where),
                         detail::json_field<double>(anchor, "lng_deg", where), where);
  const json a = detail::json_field<json>(doc, "aerial", where);
  m.aerial.id = detail::json_field<std::string>(a, "id", where);
  m.aerial.zoom = detail::json_field<int>(a, "zoom", where);
  m.aerial.x_min = detail::json_field<double>(a, "x_min", where);
  m.aerial.y_min = detail::json_field<double>(a, "y_min", where);
  m.aerial.x_max = detail::json_field<double>(a, "x_max", where);
  m.aerial.y_max = detail::json_field<double>(a, "y_max", where);
  const json files = detail::json_field<json>(doc, "files", where);
  m.inventory = detail::json_field<std::string>(files, "inventory", where);
  m.panoramas = detail::json_field<std::string>(files, "panoramas", where);
  m.proposals = detail::json_field<std::string>(files, "proposals", where);
  m.map_raster = detail::json_field<std::string>(files, "map_raster", where);
  if (files.contains("features")) m.features = detail::json_field<std::string>(files, "features", where);
  return m;
}

void write_scene_manifest(const fs::path& path, const SceneManifest& m) {
  json doc = {{"format_version", 1},
              {"anchor", {{"lat_deg", exact_degrees(m.anchor.lat)}, {"lng_deg", exact_degrees(m.anchor.lng)}}},
              {"aerial",
               {{"id", m.aerial.id},
                {"zoom", m.aerial.zoom},
                {"x_min", m.aerial.x_min},
                {"y_min", m.aerial.y_min},
                {"x_max", m.aerial.x_max},
                {"y_max", m.aerial.y_max}}},
              {"files",
               {{"inventory", m.inventory},
                {"panoramas", m.panoramas},
                {"proposals", m.proposals},
                {"map_raster", m.map_raster},
                {"features", m.features}}}};
  detail::write_json_file(path, doc);
}

}  // namespace treecat
