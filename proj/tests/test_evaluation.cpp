#include "test_util.hpp"
#include "treecat/error.hpp"
#include "treecat/evaluation.hpp"
#include "treecat/geo_projection.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace treecat;

namespace {

const LocalFrame kFrame(GeoPoint::from_degrees(34.15, -118.14));

GroundTruthTree truth_at(double x, double y, int i) {
  GroundTruthTree t;
  t.id = "gt" + std::to_string(i);
  t.geo = kFrame.to_geo({x, y});
  return t;
}

DetectionRecord det_at(double x, double y, double score, int i) {
  DetectionRecord d;
  d.id = "d" + std::to_string(i);
  d.geo = kFrame.to_geo({x, y});
  d.score = score;
  d.aerial = score;
  return d;
}

// All-points AP from ranked hit flags. Equal scores form one threshold.
double oracle_ap(std::vector<std::pair<double, bool>> ranked, std::size_t gt) {
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> prec, rec;
  double tp = 0, n = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    tp += ranked[i].second;
    n += 1;
    if (i + 1 < ranked.size() && ranked[i + 1].first == ranked[i].first) continue;
    prec.push_back(tp / n);
    rec.push_back(tp / double(gt));
  }
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const double best = *std::max_element(prec.begin() + long(i), prec.end());
    ap += (rec[i] - prev_r) * best;
    prev_r = rec[i];
  }
  return ap;
}

struct Scene {
  std::vector<GroundTruthTree> truth;
  std::vector<DetectionRecord> dets;
};

Scene random_scene(std::mt19937_64& rng) {
  Scene s;
  std::uniform_real_distribution<double> u(0.0, 200.0), jitter(-3.0, 3.0), score(-2.0, 5.0);
  std::bernoulli_distribution found(0.8);
  const int n = 10 + int(rng() % 30);
  for (int i = 0; i < n; ++i) {
    const double x = u(rng), y = u(rng);
    s.truth.push_back(truth_at(x, y, i));
    if (found(rng)) s.dets.push_back(det_at(x + jitter(rng), y + jitter(rng), score(rng), int(s.dets.size())));
  }
  for (int i = 0; i < n / 3; ++i) s.dets.push_back(det_at(u(rng), u(rng), score(rng), int(s.dets.size())));
  return s;
}

ConfusionMatrix from_counts(const std::vector<std::string>& labels, const std::vector<std::vector<int>>& counts) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    for (std::size_t p = 0; p < labels.size(); ++p) {
      for (int k = 0; k < counts[t][p]; ++k) rows.emplace_back(labels[t], labels[p]);
    }
  }
  return change_metrics(rows, labels);
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("hand computed average precision") {
  const std::vector<GroundTruthTree> truth{truth_at(0, 0, 0), truth_at(20, 0, 1)};
  const std::vector<DetectionRecord> dets{det_at(0.5, 0, 0.9, 0), det_at(50, 50, 0.8, 1), det_at(20, 1, 0.7, 2)};
  const PrCurve c = pr_curve_and_map(dets, truth);
  CHECK(c.average_precision == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-12));
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[1].precision == 0.5);
  CHECK(c.points[2].recall == 1.0);
  CHECK(c.ground_truth == 2);
}

TEST_CASE("a tree is matched only once") {
  const std::vector<GroundTruthTree> truth{truth_at(0, 0, 0)};
  const std::vector<DetectionRecord> dets{det_at(1, 0, 0.5, 0), det_at(0, 1, 0.9, 1)};
  const MatchResult m = match_detections(dets, truth);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].detection == 1);  // the higher score claims first
  CHECK(m.false_positives == std::vector<std::size_t>{0});
  CHECK(m.false_negatives.empty());
}

TEST_CASE("matching respects the radius and prefers the nearest tree") {
  const std::vector<GroundTruthTree> truth{truth_at(0, 0, 0), truth_at(3, 0, 1)};
  const std::vector<DetectionRecord> dets{det_at(2, 0, 1.0, 0), det_at(-4.5, 0, 0.5, 1)};
  const MatchResult m = match_detections(dets, truth);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].truth == 1);
  CHECK(m.pairs[0].distance_m == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(m.false_negatives == std::vector<std::size_t>{0});
  CHECK(match_detections(dets, truth, 5.0).pairs.size() == 2);
}

TEST_CASE("curve and AP agree with an independent computation") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const Scene s = random_scene(rng);
    const MatchResult m = match_detections(s.dets, s.truth);
    CHECK(m.pairs.size() + m.false_positives.size() == s.dets.size());
    CHECK(m.pairs.size() + m.false_negatives.size() == s.truth.size());
    std::vector<bool> hit(s.dets.size(), false);
    std::vector<bool> used(s.truth.size(), false);
    for (const auto& p : m.pairs) {
      CHECK(p.distance_m <= kMatchRadiusM);
      CHECK_FALSE(used[p.truth]);
      used[p.truth] = true;
      hit[p.detection] = true;
    }
    std::vector<std::pair<double, bool>> ranked;
    for (std::size_t i = 0; i < s.dets.size(); ++i) ranked.emplace_back(s.dets[i].score, hit[i]);
    const PrCurve c = pr_curve_and_map(s.dets, s.truth);
    CHECK(c.average_precision == doctest::Approx(oracle_ap(ranked, s.truth.size())).epsilon(1e-12));
    for (const auto& pt : c.points) {
      CHECK(pt.precision >= 0.0);
      CHECK(pt.precision <= 1.0);
      CHECK(pt.recall <= 1.0);
      const auto kept = std::count_if(s.dets.begin(), s.dets.end(), [&](const auto& d) { return d.score >= pt.threshold; });
      CHECK(pt.tp + pt.fp == std::size_t(kept));
      CHECK(pt.recall == doctest::Approx(double(pt.tp) / double(s.truth.size())));
    }
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].threshold < c.points[i - 1].threshold);
      CHECK(c.points[i].recall >= c.points[i - 1].recall);
    }
  }
}

TEST_CASE("AP is invariant under increasing score transforms") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    Scene s = random_scene(rng);
    const double before = pr_curve_and_map(s.dets, s.truth).average_precision;
    for (auto& d : s.dets) d.score = std::exp(0.7 * d.score) + 3.0;
    CHECK(pr_curve_and_map(s.dets, s.truth).average_precision == before);
  }
}

TEST_CASE("empty inputs") {
  const std::vector<GroundTruthTree> truth{truth_at(0, 0, 0)};
  CHECK(pr_curve_and_map({}, truth).average_precision == 0.0);
  const std::vector<DetectionRecord> dets{det_at(0, 0, 1.0, 0)};
  CHECK_THROWS_AS(pr_curve_and_map(dets, {}), Error);
}

TEST_CASE("best F1 threshold sits between accepted and rejected scores") {
  const std::vector<GroundTruthTree> truth{truth_at(0, 0, 0), truth_at(20, 0, 1)};
  std::vector<DetectionRecord> dets{det_at(0, 0, 0, 0), det_at(20, 0, 0, 1), det_at(60, 0, 0, 2), det_at(90, 0, 0, 3)};
  const std::vector<double> scores{5.0, 4.0, 3.0, 2.0};
  CHECK(best_f1_threshold(scores, dets, truth) == 3.5);

  const std::vector<double> all_true{5.0, 4.0};
  const std::vector<DetectionRecord> good{dets[0], dets[1]};
  CHECK(best_f1_threshold(all_true, good, truth) == kNegInf);
  CHECK(best_f1_threshold({}, {}, truth) == kNegInf);

  const std::vector<GroundTruthTree> three{truth_at(0, 0, 0), truth_at(20, 0, 1), truth_at(40, 0, 2)};
  const std::vector<DetectionRecord> mixed{det_at(0, 0, 0, 0), det_at(70, 0, 0, 1), det_at(20, 0, 0, 2)};
  const std::vector<double> s3{3.0, 2.0, 1.0};
  // keep 1: P 1, R 1/3, F1 0.5; keep 3: P 2/3, R 2/3, F1 2/3. Highest F1 wins.
  CHECK(best_f1_threshold(s3, mixed, three) == kNegInf);
}

TEST_CASE("binary change confusion matrix") {
  const ConfusionMatrix m = from_counts({"same", "changed"}, {{183, 17}, {21, 258}});
  CHECK(m.total() == 479);
  CHECK(m.precision(0) == doctest::Approx(0.897).epsilon(5e-4 / 0.897));
  CHECK(m.precision(1) == doctest::Approx(0.938).epsilon(5e-4 / 0.938));
  CHECK(m.recall(0) == doctest::Approx(0.915).epsilon(5e-4 / 0.915));
  CHECK(m.recall(1) == doctest::Approx(0.925).epsilon(5e-4 / 0.925));
  CHECK(m.moa() == doctest::Approx(441.0 / 479.0).epsilon(1e-12));
  CHECK(std::abs(m.moa() - 0.92) < 5e-3);
}

TEST_CASE("three-class change confusion matrix and its binary collapse") {
  const ConfusionMatrix m = from_counts({"same", "new", "removed"}, {{182, 5, 13}, {4, 119, 8}, {10, 2, 136}});
  CHECK(m.total() == 479);
  const std::array<double, 3> precision{0.929, 0.944, 0.866}, recall{0.910, 0.908, 0.919};
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(std::abs(m.precision(c) - precision[c]) < 5e-4);
    CHECK(std::abs(m.recall(c) - recall[c]) < 5e-4);
  }
  CHECK(m.moa() == doctest::Approx(437.0 / 479.0).epsilon(1e-12));
  CHECK(std::abs(m.moa() - 0.91) < 5e-3);

  const ConfusionMatrix b = m.collapse_binary();
  CHECK(b.labels() == std::vector<std::string>{"same", "changed"});
  CHECK(b.counts()(0, 0) == 182);
  CHECK(b.counts()(0, 1) == 18);
  CHECK(b.counts()(1, 0) == 14);
  CHECK(b.counts()(1, 1) == 265);
}

TEST_CASE("change labels are normalized and validated") {
  const std::vector<std::pair<std::string, std::string>> rows{{" Same", "NEW "}, {"removed", "removed"}};
  const ConfusionMatrix m = change_metrics(rows, {"same", "new", "removed"});
  CHECK(m.counts()(0, 1) == 1);
  CHECK(m.counts()(2, 2) == 1);
  const std::vector<std::pair<std::string, std::string>> bad{{"same", "moved"}};
  CHECK_THROWS_AS(change_metrics(bad, {"same", "new", "removed"}), Error);
  const ConfusionMatrix zero({"same", "new"}, CountMatrix::Zero(2, 2));
  CHECK(zero.precision(0) == 0.0);
}

TEST_CASE("species metrics by hand") {
  const std::vector<std::string> truth{"a", "a", "a", "b", "b", "c"};
  const std::vector<std::string> pred{"a", "a", "b", "b", "b", "a"};
  const SpeciesMetrics m = species_metrics(pred, truth);
  CHECK(m.classes == std::vector<std::string>{"a", "b", "c"});
  CHECK(m.class_counts == std::vector<std::size_t>{3, 2, 1});
  CHECK(m.dataset_precision == doctest::Approx(4.0 / 6.0));
  CHECK(m.class_precision[0] == doctest::Approx(2.0 / 3.0));
  CHECK(m.class_precision[1] == doctest::Approx(2.0 / 3.0));
  CHECK(m.class_precision[2] == 0.0);
  CHECK(m.average_class_precision == doctest::Approx(4.0 / 9.0));
  REQUIRE(m.cumulative_dataset_precision.size() == 3);
  CHECK(m.cumulative_dataset_precision[0] == doctest::Approx(2.0 / 3.0));
  CHECK(m.cumulative_average_class_precision[0] == 1.0);
  CHECK(m.cumulative_dataset_precision[1] == doctest::Approx(0.8));
  CHECK(m.cumulative_average_class_precision[1] == doctest::Approx(5.0 / 6.0));
  CHECK(m.cumulative_dataset_precision[2] == m.dataset_precision);

  const std::vector<std::string> unknown{"a", "a", "z", "b", "b", "c"};
  CHECK_THROWS_AS(species_metrics(unknown, truth), Error);
  const std::vector<std::string> extra{"z"};
  CHECK_NOTHROW(species_metrics(unknown, truth, extra));
  CHECK_THROWS_AS(species_metrics({}, {}), Error);
}

TEST_CASE("lesion suite variants") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> hi(3.0, 0.5), lo(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 300.0);
  auto make = [&](int n) {
    LesionScene s;
    std::vector<std::array<double, 5>> rows;  // x, y, aerial, street, map
    for (int i = 0; i < n; ++i) {
      const double x = 10.0 * i, y = 0.0;
      s.truth.push_back(truth_at(x, y, i));
      rows.push_back({x, y, hi(rng), hi(rng), 1.0});
      rows.push_back({x + 1.0, y, lo(rng), hi(rng), 1.0});
    }
    for (int i = 0; i < n; ++i) rows.push_back({u(rng), 50.0 + u(rng), hi(rng), lo(rng), -1.0});
    s.instance.terms.resize(Eigen::Index(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      s.instance.ids.push_back(std::int64_t(i));
      s.instance.xy.emplace_back(rows[i][0], rows[i][1]);
      s.instance.geo.push_back(kFrame.to_geo(s.instance.xy.back()));
      s.instance.terms.row(Eigen::Index(i)) << rows[i][2], rows[i][3], rows[i][4];
    }
    return s;
  };
  const LesionScene val = make(20), test = make(20);
  CrfModel base;
  base.spatial.weights << -3, -3, -3, -2, 0, 0, 0, 0, 0;

  LesionConfig cfg;
  cfg.jobs = 3;
  const auto rows = lesion_suite(base, val, test, cfg);
  cfg.jobs = 1;
  const auto serial = lesion_suite(base, val, test, cfg);
  REQUIRE(rows.size() == 6);
  const std::vector<std::string> names{"full", "no-aerial", "no-streetview", "no-map", "no-spatial", "no-crf-learning"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].variant == names[i]);
    CHECK(rows[i].test_map == serial[i].test_map);
    CHECK(rows[i].model.k == serial[i].model.k);
  }
  CHECK(rows[1].model.k[0] == 0.0);
  CHECK(rows[2].model.k[1] == 0.0);
  CHECK(rows[3].model.k[3] == 0.0);
  CHECK(rows[4].model.mode == SpatialMode::Nms);
  CHECK(rows[5].model.k == Eigen::Vector4d::Ones());
  // The search starts from all-ones and only accepts improvements.
  CHECK(rows[0].validation_map >= rows[5].validation_map);
  CHECK(rows[0].validation_map > 0.9);
}

}  // TEST_SUITE
