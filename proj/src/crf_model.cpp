#include "treecat/crf_model.hpp"

#include "cell_grid.hpp"
#include "io_util.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace treecat {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxPriorWeight = 30.0;
constexpr int kModelFormatVersion = 1;

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

json histogram_to_json(const PriorHistogram& h) {
  return {{"edges", h.edges}, {"weights", std::vector<double>(h.weights.begin(), h.weights.end())}};
}

PriorHistogram histogram_from_json(const json& j, const std::string& where) {
  PriorHistogram h;
  h.edges = detail::json_field<std::vector<double>>(j, "edges", where);
  const auto w = detail::json_field<std::vector<double>>(j, "weights", where);
  h.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), Eigen::Index(w.size()));
  return h;
}

json threshold_to_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::vector<double> default_bin_edges() { return {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0}; }

std::size_t PriorHistogram::bin_of(double d) const {
  return std::size_t(std::upper_bound(edges.begin(), edges.end(), d) - edges.begin());
}

void PriorHistogram::validate() const {
  if (edges.empty()) throw Error(Errc::InvalidArgument, "histogram needs at least one bin edge");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!(edges[i] > 0.0) || !std::isfinite(edges[i]) || (i > 0 && !(edges[i] > edges[i - 1]))) {
      throw Error(Errc::InvalidArgument, "histogram edges must be positive, finite and strictly increasing");
    }
  }
  if (std::size_t(weights.size()) != bins()) {
    throw Error(Errc::InvalidArgument, "histogram has " + std::to_string(weights.size()) + " weights for " +
                                           std::to_string(bins()) + " bins");
  }
  if (!weights.allFinite()) throw Error(Errc::InvalidArgument, "histogram weights must be finite");
}

void CrfModel::validate() const {
  if (!k.allFinite() || (k.array() < 0.0).any()) {
    throw Error(Errc::InvalidArgument, "potential scalars must be finite and non-negative");
  }
  spatial.validate();
  map.validate();
  if (std::isnan(tau2) || tau2 == kInf) throw Error(Errc::InvalidArgument, "tau2 must be a number below +inf");
  if (mode == SpatialMode::Nms && !(tau_nms > 0.0 && std::isfinite(tau_nms))) {
    throw Error(Errc::InvalidArgument, "nms radius must be positive");
  }
}

CrfInstance make_crf_instance(std::span<const CandidateTree> candidates, const PriorHistogram& map_prior,
                              const LocalFrame& frame) {
  CrfInstance inst;
  const auto n = Eigen::Index(candidates.size());
  inst.terms.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const CandidateTree& c = candidates[std::size_t(i)];
    inst.ids.push_back(c.id);
    inst.geo.push_back(c.geo);
    inst.xy.push_back(frame.to_local(c.geo));
    inst.terms.row(i) << c.aerial_score, c.street_score, map_prior.at(c.road_distance_m);
  }
  return inst;
}

double static_score(const CandidateTree& t, const CrfModel& model) {
  return model.k[0] * t.aerial_score + model.k[1] * t.street_score + model.k[3] * model.map.at(t.road_distance_m);
}

double static_score(const CrfInstance& inst, std::size_t i, const CrfModel& model) {
  const auto r = inst.terms.row(Eigen::Index(i));
  return model.k[0] * r[0] + model.k[1] * r[1] + model.k[3] * r[2];
}

double spatial_value(double d_s, const CrfModel& model) {
  if (model.mode == SpatialMode::Nms) return d_s < model.tau_nms ? kNegInf : 0.0;
  return model.k[2] * model.spatial.at(d_s);
}

double spatial_term(const Eigen::Vector2d& t, std::span<const Eigen::Vector2d> others, const CrfModel& model) {
  double d = kInf;
  for (const auto& o : others) d = std::min(d, (t - o).norm());
  return spatial_value(d, model);
}

double objective(const CrfInstance& inst, std::span<const std::size_t> members, const CrfModel& model) {
  double total = 0.0;
  for (std::size_t a : members) {
    double d = kInf;
    for (std::size_t b : members) {
      if (b != a) d = std::min(d, (inst.xy[a] - inst.xy[b]).norm());
    }
    total += static_score(inst, a, model) + spatial_value(d, model);
  }
  return total;
}

GreedyResult greedy_infer(const CrfInstance& inst, const CrfModel& model) {
  const std::size_t n = inst.size();
  const double reach = model.mode == SpatialMode::Nms ? model.tau_nms : model.spatial.saturation();

  std::vector<double> base(n);
  std::vector<char> eligible(n), member(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    base[i] = static_score(inst, i, model);
    eligible[i] = base[i] >= model.tau2;
  }

  detail::CellGrid all(reach), members(reach);
  for (std::size_t i = 0; i < n; ++i) all.insert(i, inst.xy[i]);
  std::vector<double> nn(n, kInf);  // nearest other member, for members
  const double isolated = spatial_value(kInf, model);

  // Marginal gain of adding c: its own terms plus the change to members
  // whose nearest neighbor becomes c. Members farther than `reach` cannot
  // change any binned value.
  auto gain_of = [&](std::size_t c) {
    double dc = kInf, delta = 0.0;
    bool forbidden = false;
    members.for_each_near(inst.xy[c], 1, [&](std::size_t m) {
      const double dist = (inst.xy[c] - inst.xy[m]).norm();
      dc = std::min(dc, dist);
      if (dist < nn[m]) {
        const double now = spatial_value(dist, model);
        if (now == kNegInf) forbidden = true;
        else delta += now - spatial_value(nn[m], model);
      }
    });
    const double own = spatial_value(dc, model);
    if (forbidden || own == kNegInf) return kNegInf;
    return base[c] + own + delta;
  };

  std::vector<double> gain(n, kNegInf);
  for (std::size_t i = 0; i < n; ++i) {
    if (eligible[i]) gain[i] = base[i] + isolated;
  }

  GreedyResult result;
  for (;;) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!eligible[i] || member[i]) continue;
      if (best == n || gain[i] > gain[best] || (gain[i] == gain[best] && inst.ids[i] < inst.ids[best])) best = i;
    }
    if (best == n || !(gain[best] > 0.0)) break;

    const std::size_t t = best;
    result.members.push_back(t);
    result.gains.push_back(gain[t]);
    result.objective += gain[t];
    member[t] = 1;
    members.for_each_near(inst.xy[t], 1, [&](std::size_t m) {
      const double dist = (inst.xy[t] - inst.xy[m]).norm();
      nn[m] = std::min(nn[m], dist);
      nn[t] = std::min(nn[t], dist);
    });
    members.insert(t, inst.xy[t]);
    all.for_each_near(inst.xy[t], 2, [&](std::size_t c) {
      if (eligible[c] && !member[c]) gain[c] = gain_of(c);
    });
  }
  return result;
}

std::vector<DetectionRecord> to_detections(const CrfInstance& inst, const GreedyResult& result,
                                           const CrfModel& model) {
  std::vector<DetectionRecord> out;
  out.reserve(result.members.size());
  for (std::size_t a : result.members) {
    double d = kInf;
    for (std::size_t b : result.members) {
      if (b != a) d = std::min(d, (inst.xy[a] - inst.xy[b]).norm());
    }
    const auto r = inst.terms.row(Eigen::Index(a));
    DetectionRecord rec;
    rec.id = std::to_string(inst.ids[a]);
    rec.geo = inst.geo[a];
    rec.aerial = model.k[0] * r[0];
    rec.street = model.k[1] * r[1];
    rec.spatial = spatial_value(d, model);
    rec.map = model.k[3] * r[2];
    rec.score = rec.contribution_sum();
    out.push_back(std::move(rec));
  }
  return out;
}

PriorFit fit_prior_histogram(std::span<const double> positives, std::span<const double> negatives,
                             const std::vector<double>& edges, const PriorFitConfig& config) {
  if (positives.empty() || negatives.empty()) {
    throw Error(Errc::EmptyData, "prior fitting needs at least one positive and one negative sample");
  }
  if (!(config.lambda >= 0.0) || config.max_iterations < 0) {
    throw Error(Errc::InvalidArgument, "prior fitting needs lambda >= 0 and a non-negative iteration count");
  }
  PriorHistogram shape;
  shape.edges = edges;
  shape.weights = Eigen::VectorXd::Zero(Eigen::Index(edges.size() + 1));
  shape.validate();

  const Eigen::Index nb = shape.weights.size();
  Eigen::VectorXd pos = Eigen::VectorXd::Zero(nb), neg = Eigen::VectorXd::Zero(nb);
  for (double d : positives) pos[Eigen::Index(shape.bin_of(d))] += 1.0;
  for (double d : negatives) neg[Eigen::Index(shape.bin_of(d))] += 1.0;

  PriorFit fit;
  fit.weights = Eigen::VectorXd::Zero(nb);
  const double lambda = config.lambda;
  auto bin_loss = [&](Eigen::Index i, double w) {
    return pos[i] * softplus(-w) + neg[i] * softplus(w) + lambda * w * w;
  };
  auto total_loss = [&] {
    double l = 0.0;
    for (Eigen::Index i = 0; i < nb; ++i) l += bin_loss(i, fit.weights[i]);
    return l;
  };

  if (lambda == 0.0) {
    for (Eigen::Index i = 0; i < nb; ++i) {
      if (pos[i] == 0.0 || neg[i] == 0.0) {
        fit.warnings.push_back("bin " + std::to_string(i) + " has " + (pos[i] == 0.0 ? "no positive" : "no negative") +
                               " samples; its weight is unbounded without regularization");
      }
    }
  }

  fit.loss_history.push_back(total_loss());
  for (int it = 0; it < config.max_iterations; ++it) {
    double largest_step = 0.0;
    for (Eigen::Index i = 0; i < nb; ++i) {
      const double w = fit.weights[i];
      const double g = -pos[i] * sigmoid(-w) + neg[i] * sigmoid(w) + 2.0 * lambda * w;
      const double h = (pos[i] + neg[i]) * sigmoid(w) * sigmoid(-w) + 2.0 * lambda;
      if (h <= 0.0 || g == 0.0) continue;
      double step = -g / h;
      const double before = bin_loss(i, w);
      double next = std::clamp(w + step, -kMaxPriorWeight, kMaxPriorWeight);
      while (bin_loss(i, next) > before && std::abs(next - w) > 1e-15) {
        step *= 0.5;
        next = std::clamp(w + step, -kMaxPriorWeight, kMaxPriorWeight);
      }
      if (bin_loss(i, next) > before) continue;
      largest_step = std::max(largest_step, std::abs(next - w));
      fit.weights[i] = next;
    }
    fit.loss_history.push_back(total_loss());
    if (largest_step < config.tolerance) break;
  }
  return fit;
}

std::vector<double> default_scalar_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}; }

ScalarSearchResult search_scalars(const CrfModel& base, const std::function<double(const CrfModel&)>& metric,
                                  std::span<const double> grid, const std::array<bool, 4>& active,
                                  int max_rounds) {
  for (double v : grid) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::InvalidArgument, "scalar grid values must be >= 0");
  }
  CrfModel model = base;
  for (int i = 0; i < 4; ++i) {
    if (active[std::size_t(i)]) model.k[i] = 1.0;
  }

  ScalarSearchResult out;
  std::map<std::array<double, 4>, double> cache;
  auto evaluate = [&](const Eigen::Vector4d& k) {
    const std::array<double, 4> key{k[0], k[1], k[2], k[3]};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    CrfModel trial = model;
    trial.k = k;
    ++out.evaluations;
    return cache[key] = metric(trial);
  };

  double current = evaluate(model.k);
  out.initial_score = current;
  for (int round = 0; round < max_rounds; ++round) {
    ++out.rounds;
    bool changed = false;
    for (int i = 0; i < 4; ++i) {
      if (!active[std::size_t(i)]) continue;
      for (double v : grid) {
        if (v == model.k[i]) continue;
        Eigen::Vector4d k = model.k;
        k[i] = v;
        const double score = evaluate(k);
        if (score > current) {
          current = score;
          model.k = k;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  out.k = model.k;
  out.score = current;
  return out;
}

void write_model(const std::filesystem::path& path, const CrfModel& model) {
  model.validate();
  json j = {{"format_version", kModelFormatVersion},
            {"k", {model.k[0], model.k[1], model.k[2], model.k[3]}},
            {"spatial_prior", histogram_to_json(model.spatial)},
            {"map_prior", histogram_to_json(model.map)},
            {"tau2", threshold_to_json(model.tau2)},
            {"spatial_mode", model.mode == SpatialMode::Nms ? "nms" : "learned"},
            {"tau_nms", model.tau_nms},
            {"provider",
             {{"kind", model.provider.kind}, {"sigma_px", model.provider.sigma_px}, {"floor", model.provider.floor}}}};
  detail::write_json_file(path, j);
}

CrfModel read_model(const std::filesystem::path& path) {
  const json j = detail::read_json_file(path);
  const std::string where = path.string();
  const int version = detail::json_field<int>(j, "format_version", where);
  if (version != kModelFormatVersion) {
    throw Error(Errc::ParseError, where + ": unsupported model format_version " + std::to_string(version));
  }
  CrfModel m;
  const auto k = detail::json_field<std::vector<double>>(j, "k", where);
  if (k.size() != 4) throw Error(Errc::ParseError, where + ": 'k' must hold four scalars");
  m.k = Eigen::Vector4d(k[0], k[1], k[2], k[3]);
  m.spatial = histogram_from_json(detail::json_field<json>(j, "spatial_prior", where), where + ": spatial_prior");
  m.map = histogram_from_json(detail::json_field<json>(j, "map_prior", where), where + ": map_prior");
  const json tau2 = detail::json_field<json>(j, "tau2", where);
  m.tau2 = tau2.is_null() ? kNegInf : detail::json_field<double>(j, "tau2", where);
  const auto mode = detail::json_field<std::string>(j, "spatial_mode", where);
  if (mode != "learned" && mode != "nms") throw Error(Errc::ParseError, where + ": unknown spatial_mode '" + mode + "'");
  m.mode = mode == "nms" ? SpatialMode::Nms : SpatialMode::Learned;
  m.tau_nms = detail::json_field<double>(j, "tau_nms", where);
  const json p = detail::json_field<json>(j, "provider", where);
  m.provider.kind = detail::json_field<std::string>(p, "kind", where + ": provider");
  m.provider.sigma_px = detail::json_field<double>(p, "sigma_px", where + ": provider");
  m.provider.floor = detail::json_field<double>(p, "floor", where + ": provider");
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(Errc::ParseError, where + ": " + e.what());
  }
  return m;
}

}  // namespace treecat
