#include "treecat/temporal_change.hpp"

#include "cell_grid.hpp"
#include "io_util.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

namespace treecat {

using nlohmann::json;

namespace {

constexpr std::array<ChangeLabel, 3> kLabels{ChangeLabel::Same, ChangeLabel::New, ChangeLabel::Removed};

bool geo_less(const GeoPoint& x, const GeoPoint& y) { return std::tie(x.lat, x.lng) < std::tie(y.lat, y.lng); }

struct Edge {
  std::size_t i, j;  // into a, b
  double combined;
  double distance;
  GeoPoint lo, hi;   // endpoints in geo order, for symmetric tie-breaking
};

struct Emitted {
  ChangePair pair;
  Eigen::Vector2d xy;
  double score;
};

// 0/1 increments x[r][c] with row sums `need_row` and column sums
// `need_col`, using only cells listed in `prefer[r]` (earlier preferred).
// Solved as a max flow source -> rows -> cells -> columns -> sink.
std::vector<std::vector<int>> controlled_rounding(const std::vector<int>& need_row, const std::vector<int>& need_col,
                                                  const std::vector<std::vector<std::size_t>>& prefer) {
  const std::size_t rows = need_row.size(), cols = need_col.size();
  const std::size_t n = rows + cols + 2, src = n - 2, sink = n - 1;
  std::vector<std::vector<int>> cap(n, std::vector<int>(n, 0));
  for (std::size_t r = 0; r < rows; ++r) {
    cap[src][r] = need_row[r];
    for (std::size_t c : prefer[r]) cap[r][rows + c] = 1;
  }
  for (std::size_t c = 0; c < cols; ++c) cap[rows + c][sink] = need_col[c];

  // Neighbor order: preferred cells first for row nodes.
  auto neighbors = [&](std::size_t u) {
    std::vector<std::size_t> out;
    if (u < rows) {
      for (std::size_t c : prefer[u]) out.push_back(rows + c);
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
  };
  std::vector<char> seen(n);
  std::function<bool(std::size_t)> push = [&](std::size_t u) {
    if (u == sink) return true;
    seen[u] = 1;
    for (std::size_t v : neighbors(u)) {
      if (seen[v] || cap[u][v] <= 0) continue;
      if (push(v)) {
        --cap[u][v];
        ++cap[v][u];
        return true;
      }
    }
    return false;
  };
  int flow = 0;
  for (;;) {
    std::fill(seen.begin(), seen.end(), 0);
    if (!push(src)) break;
    ++flow;
  }
  if (flow != std::accumulate(need_row.begin(), need_row.end(), 0)) {
    throw Error(Errc::InvariantViolation, "stratified split rounding has no solution");
  }
  std::vector<std::vector<int>> x(rows, std::vector<int>(cols, 0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c : prefer[r]) x[r][c] = cap[rows + c][r];
  }
  return x;
}

}  // namespace

const char* change_label_name(ChangeLabel label) {
  switch (label) {
    case ChangeLabel::Same: return "same";
    case ChangeLabel::New: return "new";
    case ChangeLabel::Removed: return "removed";
  }
  return "?";
}

ChangeLabel parse_change_label(std::string_view text) {
  std::string s = detail::trim(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "same" || s == "unchanged") return ChangeLabel::Same;
  if (s == "new") return ChangeLabel::New;
  if (s == "removed") return ChangeLabel::Removed;
  throw Error(Errc::UnknownLabel, "unknown change label '" + std::string(text) + "'");
}

PairingResult pair_epochs(std::span<const DetectionRecord> a, std::span<const DetectionRecord> b, double radius,
                          const std::string& epoch_a, const std::string& epoch_b) {
  if (!(radius > 0.0)) throw Error(Errc::InvalidArgument, "pair radius must be positive");
  PairingResult out;
  if (a.empty() && b.empty()) return out;

  // Anchor at the smallest location of the union so the frame does not
  // depend on which epoch is called "a".
  GeoPoint anchor = a.empty() ? b.front().geo : a.front().geo;
  for (const auto& d : a) anchor = geo_less(d.geo, anchor) ? d.geo : anchor;
  for (const auto& d : b) anchor = geo_less(d.geo, anchor) ? d.geo : anchor;
  const LocalFrame frame(anchor);
  std::vector<Eigen::Vector2d> xa, xb;
  for (const auto& d : a) xa.push_back(frame.to_local(d.geo));
  for (const auto& d : b) xb.push_back(frame.to_local(d.geo));

  detail::CellGrid grid_b(radius);
  for (std::size_t j = 0; j < b.size(); ++j) grid_b.insert(j, xb[j]);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < a.size(); ++i) {
    grid_b.for_each_near(xa[i], 1, [&](std::size_t j) {
      const double dist = (xa[i] - xb[j]).norm();
      if (dist > radius) return;
      const bool a_first = !geo_less(b[j].geo, a[i].geo);
      edges.push_back({i, j, a[i].score + b[j].score, dist, a_first ? a[i].geo : b[j].geo,
                       a_first ? b[j].geo : a[i].geo});
    });
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    if (x.combined != y.combined) return x.combined > y.combined;
    if (x.distance != y.distance) return x.distance < y.distance;
    if (geo_less(x.lo, y.lo) != geo_less(y.lo, x.lo)) return geo_less(x.lo, y.lo);
    return geo_less(x.hi, y.hi);
  });

  std::vector<Emitted> emitted;
  std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
  for (const Edge& e : edges) {
    if (used_a[e.i] || used_b[e.j]) continue;
    used_a[e.i] = used_b[e.j] = 1;
    ChangePair p;
    p.geo = degree_representable({0.5 * (a[e.i].geo.lat + b[e.j].geo.lat), 0.5 * (a[e.i].geo.lng + b[e.j].geo.lng)});
    p.present_in_a = p.present_in_b = true;
    p.detection_a = a[e.i].id;
    p.detection_b = b[e.j].id;
    emitted.push_back({p, 0.5 * (xa[e.i] + xb[e.j]), e.combined});
    ++out.matched;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (used_a[i]) continue;
    ChangePair p;
    p.geo = a[i].geo;
    p.present_in_a = true;
    p.detection_a = a[i].id;
    emitted.push_back({p, xa[i], a[i].score});
    ++out.only_a;
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (used_b[j]) continue;
    ChangePair p;
    p.geo = b[j].geo;
    p.present_in_b = true;
    p.detection_b = b[j].id;
    emitted.push_back({p, xb[j], b[j].score});
    ++out.only_b;
  }

  // Double-entry suppression in priority order.
  std::sort(emitted.begin(), emitted.end(), [](const Emitted& x, const Emitted& y) {
    const bool xm = x.pair.present_in_a && x.pair.present_in_b, ym = y.pair.present_in_a && y.pair.present_in_b;
    if (xm != ym) return xm;
    if (x.score != y.score) return x.score > y.score;
    return geo_less(x.pair.geo, y.pair.geo);
  });
  detail::CellGrid kept_grid(radius);
  std::vector<const Emitted*> kept;
  for (const Emitted& e : emitted) {
    bool clash = false;
    kept_grid.for_each_near(e.xy, 1, [&](std::size_t k) { clash = clash || (kept[k]->xy - e.xy).norm() < radius; });
    if (clash) {
      ++out.suppressed;
      continue;
    }
    kept_grid.insert(kept.size(), e.xy);
    kept.push_back(&e);
  }

  std::sort(kept.begin(), kept.end(), [](const Emitted* x, const Emitted* y) { return geo_less(x->pair.geo, y->pair.geo); });
  for (std::size_t k = 0; k < kept.size(); ++k) {
    ChangePair p = kept[k]->pair;
    p.id = "pair-" + std::to_string(k);
    p.epoch_a = epoch_a;
    p.epoch_b = epoch_b;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

ChangeSplits assemble_change_dataset(std::span<const ChangePair> pairs,
                                     const std::map<std::string, ChangeLabel>& labels, const SplitConfig& config) {
  const std::array<double, 3> raw_ratio{config.train, config.validation, config.test};
  const double ratio_sum = raw_ratio[0] + raw_ratio[1] + raw_ratio[2];
  if (!(raw_ratio[0] >= 0.0 && raw_ratio[1] >= 0.0 && raw_ratio[2] >= 0.0 && ratio_sum > 0.0) || config.folds < 1) {
    throw Error(Errc::InvalidArgument, "split ratios must be non-negative with a positive sum, folds >= 1");
  }
  ChangeSplits out;

  std::array<std::vector<std::string>, 3> by_class;
  for (const auto& p : pairs) {
    auto it = labels.find(p.id);
    const std::optional<ChangeLabel> label = it != labels.end() ? std::optional(it->second) : p.label;
    if (!label) throw Error(Errc::UnlabeledPair, "pair '" + p.id + "' has no label");
    by_class[std::size_t(*label)].push_back(p.id);
  }
  std::mt19937_64 rng(config.seed);
  for (auto& ids : by_class) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
  }

  if (config.balance) {
    std::size_t present = 0, smallest = std::numeric_limits<std::size_t>::max();
    for (const auto& ids : by_class) {
      if (ids.empty()) continue;
      ++present;
      smallest = std::min(smallest, ids.size());
    }
    if (present < 2) {
      out.warnings.push_back("balancing needs at least two classes; no subsampling done");
    } else {
      for (auto& ids : by_class) {
        if (ids.size() > smallest) ids.resize(smallest);
      }
    }
  }

  // Global split sizes by largest remainder.
  std::size_t total = 0;
  for (const auto& ids : by_class) total += ids.size();
  std::array<double, 3> ratio{};
  for (std::size_t s = 0; s < 3; ++s) ratio[s] = raw_ratio[s] / ratio_sum;
  std::array<int, 3> target{};
  std::array<std::size_t, 3> order{0, 1, 2};
  int assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    target[s] = int(std::floor(double(total) * ratio[s]));
    assigned += target[s];
  }
  auto frac = [&](std::size_t s) { return double(total) * ratio[s] - std::floor(double(total) * ratio[s]); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac(x) > frac(y); });
  for (std::size_t k = 0; assigned < int(total); ++k, ++assigned) ++target[order[k % 3]];

  // Per-class floors plus a 0/1 rounding matrix that meets both margins.
  std::vector<std::array<int, 3>> cell(3);
  std::vector<int> need_row(3), need_col(3);
  std::vector<std::vector<std::size_t>> prefer(3);
  for (std::size_t c = 0; c < 3; ++c) {
    int row_sum = 0;
    std::vector<std::pair<double, std::size_t>> fr;
    for (std::size_t s = 0; s < 3; ++s) {
      const double ideal = double(by_class[c].size()) * ratio[s];
      cell[c][s] = int(std::floor(ideal));
      row_sum += cell[c][s];
      if (ideal > std::floor(ideal)) fr.push_back({ideal - std::floor(ideal), s});
    }
    std::stable_sort(fr.begin(), fr.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    for (const auto& f : fr) prefer[c].push_back(f.second);
    need_row[c] = int(by_class[c].size()) - row_sum;
  }
  for (std::size_t s = 0; s < 3; ++s) {
    need_col[s] = target[s];
    for (std::size_t c = 0; c < 3; ++c) need_col[s] -= cell[c][s];
  }
  const auto extra = controlled_rounding(need_row, need_col, prefer);

  std::array<std::vector<std::string>*, 3> dest{&out.train, &out.validation, &out.test};
  std::vector<std::string> pool_by_class;
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t at = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t take = std::size_t(cell[c][s] + extra[c][s]);
      dest[s]->insert(dest[s]->end(), by_class[c].begin() + long(at), by_class[c].begin() + long(at + take));
      if (s < 2) pool_by_class.insert(pool_by_class.end(), by_class[c].begin() + long(at), by_class[c].begin() + long(at + take));
      at += take;
    }
  }

  // Folds over train + validation, dealt class by class.
  out.folds.assign(std::size_t(config.folds), {});
  for (std::size_t k = 0; k < pool_by_class.size(); ++k) out.folds[k % std::size_t(config.folds)].push_back(pool_by_class[k]);
  return out;
}

void write_change_pairs(const std::filesystem::path& path, std::span<const ChangePair> pairs) {
  auto out = detail::open_output(path);
  for (const auto& p : pairs) {
    json j = {{"id", p.id},
              {"lat_deg", exact_degrees(p.geo.lat)},
              {"lng_deg", exact_degrees(p.geo.lng)},
              {"present_in_a", p.present_in_a},
              {"present_in_b", p.present_in_b},
              {"epoch_a", p.epoch_a},
              {"epoch_b", p.epoch_b},
              {"detection_a", p.detection_a},
              {"detection_b", p.detection_b}};
    if (p.label) j["label"] = change_label_name(*p.label);
    out << j.dump() << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

std::vector<ChangePair> read_change_pairs(const std::filesystem::path& path) {
  std::vector<ChangePair> out;
  for (const auto& [line, j] : detail::read_json_lines(path)) {
    const std::string where = detail::location(path, line);
    ChangePair p;
    p.id = detail::json_field<std::string>(j, "id", where);
    p.geo = GeoPoint::from_degrees(detail::json_field<double>(j, "lat_deg", where),
                                   detail::json_field<double>(j, "lng_deg", where));
    p.present_in_a = detail::json_field<bool>(j, "present_in_a", where);
    p.present_in_b = detail::json_field<bool>(j, "present_in_b", where);
    p.epoch_a = detail::json_field<std::string>(j, "epoch_a", where);
    p.epoch_b = detail::json_field<std::string>(j, "epoch_b", where);
    p.detection_a = j.value("detection_a", "");
    p.detection_b = j.value("detection_b", "");
    if (j.contains("label")) p.label = parse_change_label(detail::json_field<std::string>(j, "label", where));
    if (!p.present_in_a && !p.present_in_b) throw Error(Errc::ParseError, where + ": pair present in neither epoch");
    out.push_back(std::move(p));
  }
  return out;
}

void write_change_labels(const std::filesystem::path& path, const std::map<std::string, ChangeLabel>& labels) {
  auto out = detail::open_output(path);
  for (const auto& [id, label] : labels) out << json{{"pair_id", id}, {"label", change_label_name(label)}}.dump() << '\n';
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

std::map<std::string, ChangeLabel> read_change_labels(const std::filesystem::path& path) {
  std::map<std::string, ChangeLabel> out;
  for (const auto& [line, j] : detail::read_json_lines(path)) {
    const std::string where = detail::location(path, line);
    const auto id = detail::json_field<std::string>(j, "pair_id", where);
    const auto label = detail::json_field<std::string>(j, "label", where);
    if (!out.emplace(id, parse_change_label(label)).second) {
      throw Error(Errc::ParseError, where + ": duplicate pair id '" + id + "'");
    }
  }
  return out;
}

void write_split_manifest(const std::filesystem::path& path, const ChangeSplits& splits, const SplitConfig& config) {
  json doc = {{"seed", config.seed},
              {"ratios", {{"train", config.train}, {"validation", config.validation}, {"test", config.test}}},
              {"balance", config.balance},
              {"train", splits.train},
              {"validation", splits.validation},
              {"test", splits.test},
              {"folds", splits.folds}};
  detail::write_json_file(path, doc);
}

}  // namespace treecat
