#include "treecat/evaluation.hpp"

#include "cell_grid.hpp"
#include "io_util.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

namespace treecat {

namespace {

std::vector<std::size_t> by_descending_score(std::span<const DetectionRecord> detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  return order;
}

// Matching in visiting order; `claimed_by[g]` is the detection index or npos.
MatchResult match_in_order(std::span<const DetectionRecord> detections, std::span<const GroundTruthTree> truth,
                           std::span<const std::size_t> order, double radius) {
  if (!(radius > 0.0)) throw Error(Errc::InvalidArgument, "match radius must be positive");
  MatchResult out;
  if (truth.empty()) {
    out.false_positives.assign(order.begin(), order.end());
    return out;
  }
  const LocalFrame frame(truth.front().geo);
  std::vector<Eigen::Vector2d> gt_xy;
  detail::CellGrid grid(radius);
  for (std::size_t g = 0; g < truth.size(); ++g) {
    gt_xy.push_back(frame.to_local(truth[g].geo));
    grid.insert(g, gt_xy.back());
  }
  std::vector<char> claimed(truth.size(), 0);
  for (std::size_t d : order) {
    const Eigen::Vector2d p = frame.to_local(detections[d].geo);
    std::size_t best = truth.size();
    double best_dist = std::numeric_limits<double>::infinity();
    grid.for_each_near(p, 1, [&](std::size_t g) {
      if (claimed[g]) return;
      const double dist = (p - gt_xy[g]).norm();
      if (dist > radius) return;
      if (dist < best_dist || (dist == best_dist && g < best)) {
        best = g;
        best_dist = dist;
      }
    });
    if (best == truth.size()) {
      out.false_positives.push_back(d);
    } else {
      claimed[best] = 1;
      out.pairs.push_back({d, best, best_dist});
    }
  }
  for (std::size_t g = 0; g < truth.size(); ++g) {
    if (!claimed[g]) out.false_negatives.push_back(g);
  }
  return out;
}

std::string canonical_label(std::string_view s) {
  std::string out = detail::trim(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

MatchResult match_detections(std::span<const DetectionRecord> detections, std::span<const GroundTruthTree> truth,
                             double radius) {
  const auto order = by_descending_score(detections);
  return match_in_order(detections, truth, order, radius);
}

PrCurve pr_curve_and_map(std::span<const DetectionRecord> detections, std::span<const GroundTruthTree> truth,
                         double radius) {
  if (truth.empty()) throw Error(Errc::EmptyGroundTruth, "precision/recall needs at least one ground-truth tree");
  const auto order = by_descending_score(detections);
  const MatchResult match = match_in_order(detections, truth, order, radius);
  std::vector<char> is_tp(detections.size(), 0);
  for (const auto& p : match.pairs) is_tp[p.detection] = 1;

  PrCurve curve;
  curve.ground_truth = truth.size();
  const double n_gt = double(truth.size());
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t d = order[i];
    (is_tp[d] ? tp : fp) += 1;
    const bool group_end = i + 1 == order.size() || detections[order[i + 1]].score != detections[d].score;
    if (!group_end) continue;
    curve.points.push_back({detections[d].score, double(tp) / double(tp + fp), double(tp) / n_gt, tp, fp});
  }

  // All-points envelope: precision at recall r is the best precision at any
  // recall >= r.
  double envelope = 0.0, area = 0.0;
  std::vector<double> env(curve.points.size());
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    envelope = std::max(envelope, curve.points[i].precision);
    env[i] = envelope;
  }
  std::size_t prev_tp = 0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    area += double(curve.points[i].tp - prev_tp) * env[i];
    prev_tp = curve.points[i].tp;
  }
  curve.average_precision = area / n_gt;
  return curve;
}

double best_f1_threshold(std::span<const double> scores, std::span<const DetectionRecord> detections,
                         std::span<const GroundTruthTree> truth, double radius) {
  if (scores.size() != detections.size()) {
    throw Error(Errc::DimensionMismatch, "one ranking score per detection required");
  }
  if (detections.empty()) return kNegInf;
  std::vector<DetectionRecord> ranked(detections.begin(), detections.end());
  for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].score = scores[i];
  const PrCurve curve = pr_curve_and_map(ranked, truth, radius);

  double best_f1 = -1.0, best_precision = -1.0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    const double f1 = p.precision + p.recall > 0.0 ? 2.0 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
    // Points come in descending threshold order, so ">=" on precision keeps
    // moving toward the lower threshold on a full tie.
    if (f1 > best_f1 || (f1 == best_f1 && p.precision >= best_precision)) {
      best_f1 = f1;
      best_precision = p.precision;
      best = i;
    }
  }
  // Cut halfway to the first rejected score; nothing to reject means no cut.
  if (best + 1 >= curve.points.size()) return kNegInf;
  return 0.5 * (curve.points[best].threshold + curve.points[best + 1].threshold);
}

void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve) {
  auto out = detail::open_output(path);
  out << "threshold,precision,recall\n";
  for (const auto& p : curve.points) {
    out << detail::format_double(p.threshold) << ',' << detail::format_double(p.precision) << ','
        << detail::format_double(p.recall) << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

double detection_map(const CrfInstance& inst, const CrfModel& model, std::span<const GroundTruthTree> truth,
                     double radius) {
  CrfModel open = model;
  open.tau2 = kNegInf;
  const auto detections = to_detections(inst, greedy_infer(inst, open), open);
  return pr_curve_and_map(detections, truth, radius).average_precision;
}

std::vector<LesionRow> lesion_suite(const CrfModel& base, const LesionScene& validation, const LesionScene& test,
                                    const LesionConfig& config) {
  struct Variant {
    const char* name;
    int disabled;  // scalar forced to 0, or -1
    bool nms;
    bool search;
  };
  const std::array<Variant, 6> variants{{{"full", -1, false, true},
                                         {"no-aerial", 0, false, true},
                                         {"no-streetview", 1, false, true},
                                         {"no-map", 3, false, true},
                                         {"no-spatial", -1, true, true},
                                         {"no-crf-learning", -1, false, false}}};

  std::vector<LesionRow> rows(variants.size());
  auto run = [&](std::size_t v) {
    const Variant& var = variants[v];
    CrfModel model = base;
    std::array<bool, 4> active{true, true, true, true};
    if (var.disabled >= 0) {
      model.k[var.disabled] = 0.0;
      active[std::size_t(var.disabled)] = false;
    }
    if (var.nms) {
      model.mode = SpatialMode::Nms;
      active[2] = false;  // the hard radius ignores k3
    }
    auto metric = [&](const CrfModel& m) {
      return detection_map(validation.instance, m, validation.truth, config.radius);
    };
    if (var.search) {
      model.k = search_scalars(model, metric, config.grid, active, config.max_rounds).k;
    } else {
      model.k.setOnes();
    }
    rows[v] = {var.name, model, metric(model), detection_map(test.instance, model, test.truth, config.radius)};
  };

  const std::size_t workers = std::clamp<std::size_t>(std::size_t(std::max(config.jobs, 1)), 1, variants.size());
  std::vector<std::exception_ptr> errors(variants.size());
  auto guarded = [&](std::size_t v) {
    try {
      run(v);
    } catch (...) {
      errors[v] = std::current_exception();
    }
  };
  if (workers == 1) {
    for (std::size_t v = 0; v < variants.size(); ++v) guarded(v);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t v = w; v < variants.size(); v += workers) guarded(v);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

SpeciesMetrics species_metrics(std::span<const std::string> predicted, std::span<const std::string> truth,
                               std::span<const std::string> extra_classes) {
  if (predicted.empty()) throw Error(Errc::EmptyPredictions, "species metrics need at least one prediction");
  if (predicted.size() != truth.size()) {
    throw Error(Errc::DimensionMismatch, "one prediction per ground-truth label required");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& t : truth) ++counts[t];
  for (const auto& p : predicted) {
    if (!counts.contains(p) && std::find(extra_classes.begin(), extra_classes.end(), p) == extra_classes.end()) {
      throw Error(Errc::UnknownLabel, "predicted species '" + p + "' is not a known class");
    }
  }

  SpeciesMetrics m;
  for (const auto& [name, n] : counts) m.classes.push_back(name);
  std::stable_sort(m.classes.begin(), m.classes.end(),
                   [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    rank[m.classes[i]] = i;
    m.class_counts.push_back(counts[m.classes[i]]);
  }

  // Metrics over samples whose true class ranks below `top`.
  auto evaluate = [&](std::size_t top, std::vector<double>* per_class) {
    std::vector<double> hits(top, 0.0), calls(top, 0.0);
    double correct = 0.0, total = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (rank[truth[i]] >= top) continue;
      total += 1.0;
      const bool ok = predicted[i] == truth[i];
      correct += ok;
      auto it = rank.find(predicted[i]);
      if (it != rank.end() && it->second < top) {
        calls[it->second] += 1.0;
        hits[it->second] += ok;
      }
    }
    double sum = 0.0;
    std::vector<double> precision(top);
    for (std::size_t c = 0; c < top; ++c) {
      precision[c] = calls[c] > 0.0 ? hits[c] / calls[c] : 0.0;
      sum += precision[c];
    }
    if (per_class != nullptr) *per_class = precision;
    return std::pair{correct / total, sum / double(top)};
  };

  std::tie(m.dataset_precision, m.average_class_precision) = evaluate(m.classes.size(), &m.class_precision);
  for (std::size_t n = 1; n <= m.classes.size(); ++n) {
    const auto [dp, acp] = evaluate(n, nullptr);
    m.cumulative_dataset_precision.push_back(dp);
    m.cumulative_average_class_precision.push_back(acp);
  }
  return m;
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels, CountMatrix counts)
    : labels_(std::move(labels)), counts_(std::move(counts)) {
  const auto n = Eigen::Index(labels_.size());
  if (n == 0 || counts_.rows() != n || counts_.cols() != n) {
    throw Error(Errc::DimensionMismatch, "confusion matrix must be square over its labels");
  }
  if ((counts_.array() < 0).any()) throw Error(Errc::InvalidArgument, "confusion counts must be non-negative");
}

double ConfusionMatrix::precision(std::size_t c) const {
  const auto col = counts_.col(Eigen::Index(c)).sum();
  return col > 0 ? double(counts_(Eigen::Index(c), Eigen::Index(c))) / double(col) : 0.0;
}

double ConfusionMatrix::recall(std::size_t c) const {
  const auto row = counts_.row(Eigen::Index(c)).sum();
  return row > 0 ? double(counts_(Eigen::Index(c), Eigen::Index(c))) / double(row) : 0.0;
}

double ConfusionMatrix::moa() const {
  const auto n = total();
  return n > 0 ? double(counts_.trace()) / double(n) : 0.0;
}

ConfusionMatrix ConfusionMatrix::collapse_binary() const {
  std::vector<Eigen::Index> target(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == "same") target[i] = 0;
    else if (labels_[i] == "new" || labels_[i] == "removed" || labels_[i] == "changed") target[i] = 1;
    else throw Error(Errc::UnknownLabel, "cannot collapse label '" + labels_[i] + "'");
  }
  CountMatrix out = CountMatrix::Zero(2, 2);
  for (std::size_t r = 0; r < labels_.size(); ++r) {
    for (std::size_t c = 0; c < labels_.size(); ++c) {
      out(target[r], target[c]) += counts_(Eigen::Index(r), Eigen::Index(c));
    }
  }
  return ConfusionMatrix({"same", "changed"}, out);
}

ConfusionMatrix change_metrics(std::span<const std::pair<std::string, std::string>> truth_predicted,
                               const std::vector<std::string>& classes) {
  std::vector<std::string> labels;
  for (const auto& c : classes) labels.push_back(canonical_label(c));
  auto index_of = [&](const std::string& raw) {
    const std::string label = canonical_label(raw);
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw Error(Errc::UnknownLabel, "change label '" + raw + "' is not a known class");
    return Eigen::Index(it - labels.begin());
  };
  CountMatrix counts = CountMatrix::Zero(Eigen::Index(labels.size()), Eigen::Index(labels.size()));
  for (const auto& [t, p] : truth_predicted) counts(index_of(t), index_of(p)) += 1;
  return ConfusionMatrix(labels, counts);
}

}  // namespace treecat
